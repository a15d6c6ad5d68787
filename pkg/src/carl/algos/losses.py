"""Temporal-difference and regression losses with hand-written gradients.

Every loss is a weighted mean ``sum(w * err**2) / sum(w)`` over the batch and
returns the gradient for the predictor networks only; target networks,
immediate-reward heads used inside a target, and next actions are treated as
constants.  Actions are passed in explicitly so that each learner decides how
to fill the missing action of cached transitions.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..core import TransitionBatch
from .eigen import eigen_immediate
from .nets import Critic


class LossResult(NamedTuple):
    loss: float
    grads: dict  # network name -> parameter gradients
    info: dict


def _weights(batch: TransitionBatch) -> np.ndarray:
    if batch.size == 0:
        raise ValueError("empty batch")
    w = np.asarray(batch.weight, dtype=float)
    return w / w.sum()


def _bootstrap(batch: TransitionBatch, values: np.ndarray, gamma: float) -> np.ndarray:
    return batch.r + gamma * np.where(batch.done, 0.0, values)


def _masked_grads(net: Critic, s, a, dloss_dpred: np.ndarray, mask: np.ndarray):
    """Gradient of the loss through ``net`` evaluated on the masked rows."""
    if not np.any(mask):
        return [np.zeros_like(p) for p in net.net.params]
    net.forward(s[mask], None if a is None else a[mask])
    grads, _ = net.backward(dloss_dpred[mask])
    return grads


def ddpg_critic_loss(batch: TransitionBatch, q: Critic, q_target: Critic, actions: np.ndarray,
                     next_actions: np.ndarray, gamma: float) -> LossResult:
    """Single-critic TD loss ``[Q(s,a) - (r + gamma Q'(s', a'))]^2``.

    The cache state is ignored; ``actions`` must be finite for every row.
    """
    w = _weights(batch)
    y = _bootstrap(batch, q_target(batch.s2, next_actions), gamma)
    pred = q.forward(batch.s, actions)
    td = pred - y
    grads, _ = q.backward(2.0 * w * td)
    return LossResult(float(np.sum(w * td * td)), {"q": grads}, {"td": td, "pred": pred})


def twin_critic_loss(batch: TransitionBatch, qa: Critic, qb: Critic, qa_target: Critic,
                     qb_target: Critic, actions: np.ndarray, next_actions: np.ndarray,
                     gamma: float) -> LossResult:
    """Clipped double-Q loss: both critics regress on ``r + gamma min(Qa', Qb')``.

    The reported loss is the mean of the two critic losses; each entry of
    ``grads`` is the gradient of that critic's own loss.
    """
    w = _weights(batch)
    boot = np.minimum(qa_target(batch.s2, next_actions), qb_target(batch.s2, next_actions))
    y = _bootstrap(batch, boot, gamma)
    out, loss = {}, 0.0
    for name, net in (("qa", qa), ("qb", qb)):
        td = net.forward(batch.s, actions) - y
        out[name], _ = net.backward(2.0 * w * td)
        loss += float(np.sum(w * td * td))
        if name == "qa":
            td_a = td
    return LossResult(loss / 2.0, out, {"td": td_a})


def _check_actions(batch: TransitionBatch) -> None:
    rt = batch.c == 0
    if np.any(rt & ~batch.has_action) or np.any(~np.all(np.isfinite(batch.a[rt]), axis=1)):
        raise ValueError("real-time transition with missing action")


def carl_dl_loss(batch: TransitionBatch, q0: Critic, q1: Critic, q0_target: Critic, q1_target: Critic,
                 next_actions: np.ndarray, gamma: float) -> LossResult:
    """TD loss over the four ``(C_t, C_{t+1})`` cases.

    The predictor is ``Q0(s, a)`` on real-time rows and ``Q1(s)`` on cached
    rows; the bootstrap is ``Q0'(s', a')`` when the next request is real-time
    and ``Q1'(s')`` when it is cached.  ``info["cases"]`` counts rows per
    ``(C_t, C_{t+1})`` cell, terminal rows included.
    """
    _check_actions(batch)
    w = _weights(batch)
    rt, rt2 = batch.c == 0, batch.c2 == 0
    boot = np.where(rt2, q0_target(batch.s2, next_actions), q1_target(batch.s2))
    y = _bootstrap(batch, boot, gamma)
    pred = np.empty(batch.size)
    if np.any(rt):
        pred[rt] = q0.predict(batch.s[rt], batch.a[rt])
    if np.any(~rt):
        pred[~rt] = q1.predict(batch.s[~rt])
    td = pred - y
    g = 2.0 * w * td
    grads = {
        "q0": _masked_grads(q0, batch.s, batch.a, g, rt),
        "q1": _masked_grads(q1, batch.s, None, g, ~rt),
    }
    cases = np.zeros((2, 2), dtype=int)
    np.add.at(cases, (batch.c.astype(int), batch.c2.astype(int)), 1)
    return LossResult(float(np.sum(w * td * td)), grads, {"td": td, "pred": pred, "cases": cases})


def immediate_loss(batch: TransitionBatch, v0: Critic, v1: Critic) -> LossResult:
    """Regress ``V0(s, a)`` on real-time rewards and ``V1(s)`` on cached ones."""
    _check_actions(batch)
    w = _weights(batch)
    rt = batch.c == 0
    pred = np.empty(batch.size)
    if np.any(rt):
        pred[rt] = v0.predict(batch.s[rt], batch.a[rt])
    if np.any(~rt):
        pred[~rt] = v1.predict(batch.s[~rt])
    err = pred - batch.r
    g = 2.0 * w * err
    grads = {
        "v0": _masked_grads(v0, batch.s, batch.a, g, rt),
        "v1": _masked_grads(v1, batch.s, None, g, ~rt),
    }
    return LossResult(float(np.sum(w * err * err)), grads, {"err": err})


def eigen_td_loss(batch: TransitionBatch, lam_b: Critic, lam_b_target: Critic, v0: Critic, v1: Critic,
                  d0: np.ndarray, actions: np.ndarray, next_actions: np.ndarray,
                  gamma: float) -> LossResult:
    """TD loss of the weighted eigen value ``Lb(s, a)``.

    Target: ``Gb(s, a) + gamma Lb'(s', a')`` with ``Gb = d0 V0(s, a) + (1-d0) V1(s)``.
    Neither the reward nor the cache states of the sample enter the target,
    and the difference eigen value is never read.  ``actions`` must be
    filled for every row (imputed for cached rows).
    """
    w = _weights(batch)
    _, gb = eigen_immediate(v0(batch.s, actions), v1(batch.s), d0)
    boot = np.where(batch.done, 0.0, lam_b_target(batch.s2, next_actions))
    y = gb + gamma * boot
    pred = lam_b.forward(batch.s, actions)
    td = pred - y
    grads, _ = lam_b.backward(2.0 * w * td)
    return LossResult(float(np.sum(w * td * td)), {"lambda_b": grads},
                      {"td": td, "pred": pred, "gamma_b": gb})


def actor_objective_grad(actor, states: np.ndarray, value_and_grad) -> tuple[float, list[np.ndarray]]:
    """Mean critic value at ``a = mu(s)`` and the gradient of its negative.

    ``value_and_grad(s, a)`` returns ``(values (B,), dvalue/da (B, n_a))``.
    The returned gradient is for *descent*, so an optimiser step ascends the
    critic along ``grad_theta mu(s) . grad_a Q(s, mu(s))``.
    """
    a = actor.forward(states)
    q, dq_da = value_and_grad(states, a)
    grads, _ = actor.backward(-dq_da / len(states))
    return float(np.mean(q)), grads
