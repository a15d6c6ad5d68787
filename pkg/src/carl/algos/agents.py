"""Actor-critic learners: DDPG and TD3 baselines and the two cache-aware variants.

All agents share a deterministic actor ``mu(s)`` with a ``3 * sigmoid`` output
and differ in their critics:

* ``DDPG`` - one critic ``Q(s, a)`` that ignores the cache state; cached
  transitions are fed with a zero action.
* ``TD3`` - twin critics, clipped target noise, delayed actor updates; cached
  transitions use the target actor's action.
* ``CarlDL`` - conditional critics ``Q0(s, a)`` and ``Q1(s)`` trained jointly on
  the four cache-state cases.
* ``CarlEL`` - immediate heads ``V0(s, a)``, ``V1(s)`` and the weighted eigen
  value ``Lb(s, a)``; ``Q0``/``Q1`` are recovered, never learned.

``cond_q`` gives every agent's estimate of the value of a request under a
given cache state, which lets one critic-loss metric cover all of them.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..config import LearnerConfig
from ..core import TransitionBatch, clamp_action
from ..funcapprox import Adam, Mlp, polyak_update
from .eigen import recover_q
from .losses import (
    LossResult,
    actor_objective_grad,
    carl_dl_loss,
    ddpg_critic_loss,
    eigen_td_loss,
    immediate_loss,
    twin_critic_loss,
)
from .nets import Critic, Trainable

D0Fn = Callable[[np.ndarray], np.ndarray]


class Agent:
    name = "agent"

    def __init__(self, state_dim: int, n_a: int, lcfg: LearnerConfig | None = None,
                 gamma: float = 0.9, seed=0, d0_fn: D0Fn | None = None,
                 critic_hidden=None, joint: str = "concat", fixed_policy=None):
        self.lcfg = lcfg = lcfg or LearnerConfig()
        self.state_dim, self.n_a, self.gamma = state_dim, n_a, gamma
        self.rng = np.random.default_rng(seed)
        self.d0_fn = d0_fn
        self._hidden = lcfg.critic_hidden if critic_hidden is None else tuple(critic_hidden)
        self._joint = joint
        self.actor = Mlp((state_dim, *lcfg.actor_hidden, n_a), output="sigmoid3", rng=self.rng)
        self.actor_target = self.actor.copy()
        self.actor_opt = Adam(self.actor, lr=lcfg.lr_actor, clip_norm=lcfg.clip_norm)
        # a fixed policy replaces the actor everywhere and switches off actor updates
        self.fixed_policy = fixed_policy
        self.steps = 0

    def _critic(self, with_action: bool, with_target: bool) -> Trainable:
        c = Critic(self.state_dim, self.n_a if with_action else 0, self._hidden, self._joint, self.rng)
        return Trainable(c, self.lcfg.lr_critic, self.lcfg.clip_norm, with_target)

    # -- acting ------------------------------------------------------------
    def mu(self, states, target: bool = False) -> np.ndarray:
        if self.fixed_policy is not None:
            return self.fixed_policy(np.atleast_2d(states))
        net = self.actor_target if target else self.actor
        return net.predict(np.atleast_2d(states))

    def act(self, state, noise_std: float = 0.0, rng=None) -> np.ndarray:
        a = self.mu(state)[0]
        if noise_std > 0:
            a = a + noise_std * rng.standard_normal(self.n_a)
        return clamp_action(a)

    def policy(self, noise_std: float = 0.0, rng=None):
        """Callable ``state -> action`` for the simulator."""
        return lambda s: self.act(s, noise_std, rng)

    def _fill_actions(self, batch: TransitionBatch) -> np.ndarray:
        """Actions with cached rows imputed by the target actor."""
        if np.all(batch.has_action):
            return batch.a
        return np.where(batch.has_action[:, None], batch.a, self.mu(batch.s, target=True))

    def _actor_update(self, states, value_and_grad) -> float:
        if self.fixed_policy is not None:
            return float("nan")
        q, grads = actor_objective_grad(self.actor, states, value_and_grad)
        self.actor_opt.step(self.actor, grads)
        return q

    def _soft_update(self, *nets: Trainable) -> None:
        tau = self.lcfg.tau
        for n in nets:
            n.soft_update(tau)
        polyak_update(self.actor_target, self.actor, tau)

    # -- learning ----------------------------------------------------------
    def train_step(self, batch: TransitionBatch) -> dict:
        raise NotImplementedError

    def cond_q(self, states, actions, cache, target: bool = False) -> np.ndarray:
        """Value estimate of ``(s, a)`` served under cache state ``cache``.

        ``actions`` must be filled for every row; rows with ``cache == 1``
        only use it where the agent's critic needs an action input.
        """
        raise NotImplementedError

    def td_errors(self, batch: TransitionBatch) -> np.ndarray:
        """``Q_{C_t}(s, a) - (r + gamma Q'_{C_{t+1}}(s', mu'(s')))`` per row."""
        a = self._fill_actions(batch)
        a2 = self.mu(batch.s2, target=True)
        pred = self.cond_q(batch.s, a, batch.c)
        boot = self.cond_q(batch.s2, a2, batch.c2, target=True)
        return pred - (batch.r + self.gamma * np.where(batch.done, 0.0, boot))

    def q_curves(self, states) -> tuple[np.ndarray, np.ndarray]:
        """``(Q0(s, mu(s)), Q1(s))`` for a batch of states."""
        a = self.mu(states)
        n = len(a)
        return (self.cond_q(states, a, np.zeros(n, dtype=int)),
                self.cond_q(states, a, np.ones(n, dtype=int)))

    def nets(self) -> dict[str, Mlp]:
        return {"actor": self.actor, "actor_target": self.actor_target}


class DDPG(Agent):
    name = "DDPG"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.q = self._critic(True, True)

    def _actions(self, batch: TransitionBatch) -> np.ndarray:
        # baseline concession: the cache is invisible, a cached step looks like a zero action
        return np.where(batch.has_action[:, None], np.nan_to_num(batch.a), 0.0)

    def train_step(self, batch: TransitionBatch) -> dict:
        res = ddpg_critic_loss(batch, self.q.online, self.q.target, self._actions(batch),
                               self.mu(batch.s2, target=True), self.gamma)
        self.q.step(res.grads["q"])
        self._actor_update(batch.s, self.q.online.action_grad)
        self._soft_update(self.q)
        self.steps += 1
        m = float(np.mean(res.info["pred"]))
        return {"critic_loss": res.loss, "mean_q0": m, "mean_q1": m, "mean_lambda_a": 0.0,
                "zero_actions": int(np.sum(~batch.has_action))}

    def cond_q(self, states, actions, cache, target=False):
        return (self.q.target if target else self.q.online)(states, actions)

    def td_errors(self, batch):
        a2 = self.mu(batch.s2, target=True)
        pred = self.q.online(batch.s, self._actions(batch))
        boot = self.q.target(batch.s2, a2)
        return pred - (batch.r + self.gamma * np.where(batch.done, 0.0, boot))

    def nets(self):
        return {**super().nets(), "q": self.q.online.net, "q_target": self.q.target.net}


class TD3(Agent):
    name = "TD3"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.qa = self._critic(True, True)
        self.qb = self._critic(True, True)

    def _target_actions(self, batch: TransitionBatch) -> np.ndarray:
        a2 = self.mu(batch.s2, target=True)
        sigma = self.lcfg.td3_target_noise
        if sigma > 0:
            c = self.lcfg.td3_noise_clip
            a2 = a2 + np.clip(sigma * self.rng.standard_normal(a2.shape), -c, c)
        return clamp_action(a2)

    def train_step(self, batch: TransitionBatch) -> dict:
        res = twin_critic_loss(batch, self.qa.online, self.qb.online, self.qa.target, self.qb.target,
                               self._fill_actions(batch), self._target_actions(batch), self.gamma)
        self.qa.step(res.grads["qa"])
        self.qb.step(res.grads["qb"])
        self.steps += 1
        if self.steps % self.lcfg.td3_policy_delay == 0:
            self._actor_update(batch.s, self.qa.online.action_grad)
            self._soft_update(self.qa, self.qb)
        m = float(np.mean(self.qa.online(batch.s, self._fill_actions(batch))))
        return {"critic_loss": res.loss, "mean_q0": m, "mean_q1": m, "mean_lambda_a": 0.0,
                "imputed_actions": int(np.sum(~batch.has_action))}

    def cond_q(self, states, actions, cache, target=False):
        if target:
            return np.minimum(self.qa.target(states, actions), self.qb.target(states, actions))
        return self.qa.online(states, actions)

    def nets(self):
        return {**super().nets(), "qa": self.qa.online.net, "qb": self.qb.online.net,
                "qa_target": self.qa.target.net, "qb_target": self.qb.target.net}


class CarlDL(Agent):
    name = "CARL-DL"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.q0 = self._critic(True, True)
        self.q1 = self._critic(False, True)
        self.case_counts = np.zeros((2, 2), dtype=int)

    def critic_step(self, batch: TransitionBatch) -> LossResult:
        res = carl_dl_loss(batch, self.q0.online, self.q1.online, self.q0.target, self.q1.target,
                           self.mu(batch.s2, target=True), self.gamma)
        self.q0.step(res.grads["q0"])
        self.q1.step(res.grads["q1"])
        self.case_counts += res.info["cases"]
        return res

    def train_step(self, batch: TransitionBatch) -> dict:
        res = self.critic_step(batch)
        self._actor_update(batch.s, self.q0.online.action_grad)
        self._soft_update(self.q0, self.q1)
        self.steps += 1
        rt = batch.c == 0
        q0 = res.info["pred"][rt]
        q1 = res.info["pred"][~rt]
        m0 = float(np.mean(q0)) if len(q0) else float("nan")
        m1 = float(np.mean(q1)) if len(q1) else float("nan")
        return {"critic_loss": res.loss, "mean_q0": m0, "mean_q1": m1, "mean_lambda_a": m0 - m1}

    def cond_q(self, states, actions, cache, target=False):
        q0, q1 = (self.q0.target, self.q1.target) if target else (self.q0.online, self.q1.online)
        return np.where(np.asarray(cache) == 0, q0(states, actions), q1(states))

    def nets(self):
        return {**super().nets(), "q0": self.q0.online.net, "q1": self.q1.online.net,
                "q0_target": self.q0.target.net, "q1_target": self.q1.target.net}


class CarlEL(Agent):
    name = "CARL-EL"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        if self.d0_fn is None:
            raise ValueError("CarlEL needs a d0_fn (state -> probability of real-time service)")
        self.v0 = self._critic(True, False)
        self.v1 = self._critic(False, False)
        self.lam_b = self._critic(True, True)
        self.step_log: list[str] = []  # order of operations of the last step
        self.track_order = False

    def _mark(self, what: str) -> None:
        if self.track_order:
            self.step_log.append(what)

    def recover(self, states, actions, target: bool = False):
        """Recovered ``(Q0, Q1, La, Lb, d0)`` with ``La = V0 - V1`` by definition."""
        d0 = self.d0_fn(states)
        la = self.v0.online(states, actions) - self.v1.online(states)
        lb = (self.lam_b.target if target else self.lam_b.online)(states, actions)
        q0, q1 = recover_q(la, lb, d0)
        return q0, q1, la, lb, d0

    def _q0_value_and_grad(self, states, a):
        d0 = self.d0_fn(states)
        v0, dv0 = self.v0.online.action_grad(states, a)
        lb, dlb = self.lam_b.online.action_grad(states, a)
        q0 = (1.0 - d0) * (v0 - self.v1.online(states)) + lb
        return q0, (1.0 - d0)[:, None] * dv0 + dlb

    def train_step(self, batch: TransitionBatch) -> dict:
        self.step_log = []
        # 1: immediate rewards
        imm = immediate_loss(batch, self.v0.online, self.v1.online)
        self.v0.step(imm.grads["v0"])
        self.v1.step(imm.grads["v1"])
        self._mark("immediate")
        # 2-3: eigen immediate rewards feed the weighted eigen TD loss
        a = self._fill_actions(batch)
        d0 = self.d0_fn(batch.s)
        self._mark("eigen_immediate")
        eig = eigen_td_loss(batch, self.lam_b.online, self.lam_b.target, self.v0.online,
                            self.v1.online, d0, a, self.mu(batch.s2, target=True), self.gamma)
        self.lam_b.step(eig.grads["lambda_b"])
        self._mark("eigen_td")
        # 4: recover the conditional values
        q0, q1, la, _, _ = self.recover(batch.s, a)
        self._mark("recover")
        # 5: policy improvement on the recovered Q0
        self._actor_update(batch.s, self._q0_value_and_grad)
        self._mark("actor")
        self._soft_update(self.lam_b)
        self.steps += 1
        return {"critic_loss": eig.loss, "immediate_loss": imm.loss, "mean_q0": float(np.mean(q0)),
                "mean_q1": float(np.mean(q1)), "mean_lambda_a": float(np.mean(la))}

    def cond_q(self, states, actions, cache, target=False):
        q0, q1, *_ = self.recover(states, actions, target)
        return np.where(np.asarray(cache) == 0, q0, q1)

    def nets(self):
        return {**super().nets(), "v0": self.v0.online.net, "v1": self.v1.online.net,
                "lambda_b": self.lam_b.online.net, "lambda_b_target": self.lam_b.target.net}


AGENTS = {cls.name: cls for cls in (DDPG, TD3, CarlDL, CarlEL)}
