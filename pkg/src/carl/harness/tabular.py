"""Fit the learners on an exactly enumerated tabular model and compare with
backward induction.

States are one-hot ``(t, s)`` vectors and actions one-hot vectors, and each
critic is a single linear layer on their outer product, i.e. a lookup table.
Every minibatch is the full enumerated transition set with its exact
probability weights, so the weighted TD losses have the oracle tables as
their fixed point and training is free of sampling noise.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..algos import AGENTS
from ..config import LearnerConfig
from ..core import TransitionBatch
from ..oracle import TabularMDP, decode_step, encode_state, enumerate_transitions, exact_q


@dataclass
class TabularFit:
    agent: object
    errors: list = field(default_factory=list)  # (step, max abs error)

    @property
    def final_error(self) -> float:
        return self.errors[-1][1]


def tabular_states(mdp: TabularMDP) -> np.ndarray:
    """All encoded ``(t, s)`` states, ``t`` major."""
    return np.array([encode_state(mdp, t, s) for t in range(mdp.T) for s in range(mdp.S)])


def value_tables(agent, mdp: TabularMDP) -> tuple[np.ndarray, np.ndarray]:
    """Agent estimates shaped like the oracle's ``Q0 (T, S, A)`` and ``Q1 (T, S)``."""
    X = tabular_states(mdp)
    n = len(X)
    Q0 = np.empty((mdp.T, mdp.S, mdp.A))
    for a in range(mdp.A):
        act = np.tile(np.eye(mdp.A)[a], (n, 1))
        Q0[:, :, a] = agent.cond_q(X, act, np.zeros(n, dtype=int)).reshape(mdp.T, mdp.S)
    act = np.tile(np.eye(mdp.A)[0], (n, 1))
    Q1 = agent.cond_q(X, act, np.ones(n, dtype=int)).reshape(mdp.T, mdp.S)
    return Q0, Q1


def fit_tabular(method: str, mdp: TabularMDP, policy: np.ndarray, steps: int = 2000,
                lr: float = 0.01, tau: float = 0.05, seed: int = 0, check_every: int = 500,
                lcfg: LearnerConfig | None = None, include_cached: bool = True) -> TabularFit:
    """Train ``method`` (a key of ``AGENTS``) to evaluate a fixed deterministic
    ``policy`` and track the max error against the oracle tables.

    Learners that ignore the cache state need ``include_cached=False`` and a
    model with ``d0 == 1``; only their ``Q0`` table is then meaningful.
    """
    lcfg = dataclasses.replace(lcfg or LearnerConfig(), lr_critic=lr, tau=tau, clip_norm=None)
    policy = np.asarray(policy)
    onehot = np.eye(mdp.A)

    def fixed(states):
        return onehot[policy[np.argmax(states, axis=1) % mdp.S]]

    agent = AGENTS[method](mdp.T * mdp.S, mdp.A, lcfg, gamma=mdp.gamma, seed=seed,
                           d0_fn=lambda st: mdp.d0[decode_step(mdp, st)],
                           critic_hidden=(), joint="outer", fixed_policy=fixed)
    ts, w = enumerate_transitions(mdp, include_cached=include_cached)
    batch = TransitionBatch.from_transitions(ts, mdp.A, w)
    Q0, Q1 = exact_q(mdp, policy)
    fit = TabularFit(agent)
    for i in range(1, steps + 1):
        agent.train_step(batch)
        if i % check_every == 0 or i == steps:
            E0, E1 = value_tables(agent, mdp)
            err = float(np.max(np.abs(E0 - Q0)))
            if include_cached:
                err = max(err, float(np.max(np.abs(E1 - Q1))))
            fit.errors.append((i, err))
    return fit
