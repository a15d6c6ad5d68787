"""Exact finite-horizon tabular model with a stochastic cache state.

Steps are indexed ``t = 0 .. T-1``.  At every step the cache state is drawn
independently of everything else with ``P(C_t = 0) = d0[t]``.  A real-time
step takes an action and earns ``V0[s, a]``; a cached step earns ``V1[s]``.
Next states follow ``P0[s, a]`` or ``P1[s]``.  Backward induction gives::

    W[t+1, s'] = d0[t+1] E_pi Q0[t+1, s', .] + (1 - d0[t+1]) Q1[t+1, s']
    Q0[t, s, a] = V0[s, a] + gamma * P0[s, a] . W[t+1]
    Q1[t, s]    = V1[s]    + gamma * P1[s]    . W[t+1]

with ``W[T] = 0``.  When the dynamics are shared (``P0[s, a] == P1[s]``) the
eigen values decouple: ``Q0 - Q1 == V0 - V1`` and the weighted sum obeys a
recursion of its own.  With coupled dynamics the first identity fails, which
the tests demonstrate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algos.eigen import eigen_immediate, recover_q
from .core import CacheState, Transition

MAX_STATES, MAX_ACTIONS, MAX_HORIZON = 20, 5, 10


@dataclass(frozen=True, eq=False)
class TabularMDP:
    P0: np.ndarray  # (S, A, S) real-time kernel
    P1: np.ndarray  # (S, S) cached kernel
    V0: np.ndarray  # (S, A)
    V1: np.ndarray  # (S,)
    d0: np.ndarray  # (T,) probability of a real-time step
    gamma: float

    def __post_init__(self):
        for name in ("P0", "P1", "V0", "V1", "d0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        S, A, T = self.S, self.A, self.T
        if not (1 <= S <= MAX_STATES and 1 <= A <= MAX_ACTIONS and 1 <= T <= MAX_HORIZON):
            raise ValueError(f"table sizes out of range: S={S}, A={A}, T={T}")
        if self.P0.shape != (S, A, S) or self.P1.shape != (S, S):
            raise ValueError("kernel shapes inconsistent with V0")
        if self.V1.shape != (S,):
            raise ValueError("V1 must have shape (S,)")
        for name, P in (("P0", self.P0), ("P1", self.P1)):
            if np.any(P < 0) or np.max(np.abs(P.sum(axis=-1) - 1.0)) > 1e-12:
                raise ValueError(f"{name} is not row-stochastic")
        if not (np.all(np.isfinite(self.V0)) and np.all(np.isfinite(self.V1))):
            raise ValueError("reward tables must be finite")
        if np.any(~np.isfinite(self.d0)) or np.any(self.d0 < 0) or np.any(self.d0 > 1):
            raise ValueError("d0 schedule must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def S(self) -> int:
        return self.V0.shape[0]

    @property
    def A(self) -> int:
        return self.V0.shape[1]

    @property
    def T(self) -> int:
        return len(self.d0)

    @property
    def shared_dynamics(self) -> bool:
        return bool(np.allclose(self.P0, self.P1[:, None, :], rtol=0, atol=1e-15))


def random_mdp(rng, S: int = 5, A: int = 3, T: int = 5, gamma: float | None = None,
               shared: bool = True, concentration: float = 1.0) -> TabularMDP:
    """Dirichlet kernel rows, U[0, 1] rewards and a U[0, 1] ``d0`` schedule.

    ``shared=True`` makes the next-state law independent of action and cache
    state, the setting in which the eigen decoupling is exact.
    """
    P1 = rng.dirichlet(np.full(S, concentration), size=S)
    if shared:
        P0 = np.repeat(P1[:, None, :], A, axis=1)
    else:
        P0 = rng.dirichlet(np.full(S, concentration), size=(S, A))
    return TabularMDP(
        P0=P0,
        P1=P1,
        V0=rng.random((S, A)),
        V1=rng.random(S),
        d0=rng.random(T),
        gamma=float(rng.uniform(0.0, 0.99)) if gamma is None else gamma,
    )


def random_policy(rng, S: int, A: int, deterministic: bool = True) -> np.ndarray:
    if deterministic:
        return rng.integers(A, size=S)
    return rng.dirichlet(np.ones(A), size=S)


def policy_matrix(policy, S: int, A: int) -> np.ndarray:
    """``(S, A)`` action probabilities from a deterministic ``(S,)`` index
    array or a stochastic ``(S, A)`` table."""
    policy = np.asarray(policy)
    if policy.shape == (S,):
        if not np.issubdtype(policy.dtype, np.integer) or np.any((policy < 0) | (policy >= A)):
            raise ValueError("deterministic policy must hold action indices")
        return np.eye(A)[policy]
    if policy.shape == (S, A):
        if np.any(policy < 0) or np.max(np.abs(policy.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("stochastic policy rows must be distributions")
        return policy.astype(float)
    raise ValueError(f"policy must have shape ({S},) or ({S}, {A}), got {policy.shape}")


def _continuation(mdp: TabularMDP, pi: np.ndarray, Q0n: np.ndarray, Q1n: np.ndarray, t_next: int):
    """``W[t+1, s']``: value of entering ``s'`` before the cache state is drawn."""
    d = mdp.d0[t_next]
    return d * np.sum(pi * Q0n, axis=1) + (1.0 - d) * Q1n


def exact_q(mdp: TabularMDP, policy) -> tuple[np.ndarray, np.ndarray]:
    """Backward induction; returns ``Q0 (T, S, A)`` and ``Q1 (T, S)``."""
    pi = policy_matrix(policy, mdp.S, mdp.A)
    T = mdp.T
    Q0 = np.empty((T, mdp.S, mdp.A))
    Q1 = np.empty((T, mdp.S))
    Q0[T - 1], Q1[T - 1] = mdp.V0, mdp.V1
    for t in range(T - 2, -1, -1):
        W = _continuation(mdp, pi, Q0[t + 1], Q1[t + 1], t + 1)
        Q0[t] = mdp.V0 + mdp.gamma * (mdp.P0 @ W)
        Q1[t] = mdp.V1 + mdp.gamma * (mdp.P1 @ W)
    return Q0, Q1


def exact_eigen(mdp: TabularMDP, policy, q=None) -> tuple[np.ndarray, np.ndarray]:
    """``La = Q0 - Q1`` and ``Lb = d0 Q0 + (1-d0) Q1``, both ``(T, S, A)``."""
    Q0, Q1 = exact_q(mdp, policy) if q is None else q
    d = mdp.d0[:, None, None]
    return eigen_immediate(Q0, Q1[:, :, None], d)


def bellman_residual(mdp: TabularMDP, policy, Q0: np.ndarray, Q1: np.ndarray) -> float:
    """Largest violation of the coupled recursion when the tables are plugged back."""
    pi = policy_matrix(policy, mdp.S, mdp.A)
    res = max(np.max(np.abs(Q0[-1] - mdp.V0)), np.max(np.abs(Q1[-1] - mdp.V1)))
    for t in range(mdp.T - 1):
        W = _continuation(mdp, pi, Q0[t + 1], Q1[t + 1], t + 1)
        res = max(res, np.max(np.abs(Q0[t] - mdp.V0 - mdp.gamma * (mdp.P0 @ W))))
        res = max(res, np.max(np.abs(Q1[t] - mdp.V1 - mdp.gamma * (mdp.P1 @ W))))
    return float(res)


def eigen_residuals(mdp: TabularMDP, policy) -> tuple[float, float]:
    """Residuals of the two decoupled identities.

    First: ``max |La - (V0 - V1)|``.  Second: ``max |Lb[t] - (Gb[t] + gamma
    * P1 . E_pi Lb[t+1])|`` where ``Gb[t] = d0[t] V0 + (1-d0[t]) V1``.  The
    second uses only ``Lb`` and the immediate tables, never ``La``.
    """
    pi = policy_matrix(policy, mdp.S, mdp.A)
    La, Lb = exact_eigen(mdp, policy)
    Ga, _ = eigen_immediate(mdp.V0, mdp.V1[:, None], 0.0)
    line1 = float(np.max(np.abs(La - Ga[None])))
    line2 = 0.0
    for t in range(mdp.T):
        _, Gb = eigen_immediate(mdp.V0, mdp.V1[:, None], mdp.d0[t])
        boot = 0.0
        if t + 1 < mdp.T:
            boot = mdp.gamma * (mdp.P1 @ np.sum(pi * Lb[t + 1], axis=1))[:, None]
        line2 = max(line2, float(np.max(np.abs(Lb[t] - Gb - boot))))
    return line1, line2


def verify_recovery(mdp: TabularMDP, policy) -> float:
    """Max abs error of recovering ``(Q0, Q1)`` from the exact eigen tables."""
    Q0, Q1 = exact_q(mdp, policy)
    La, Lb = exact_eigen(mdp, policy, (Q0, Q1))
    r0, r1 = recover_q(La, Lb, mdp.d0[:, None, None])
    return float(max(np.max(np.abs(r0 - Q0)), np.max(np.abs(r1 - Q1[:, :, None]))))


def monte_carlo_q(mdp: TabularMDP, policy, t: int, s: int, cache_state: int, a: int | None,
                  n: int, rng, reward_noise: float = 0.0) -> tuple[float, float]:
    """Mean and standard error of simulated discounted returns from ``(t, s, C_t, a)``.

    Episodes are simulated in parallel; rewards are the table entries plus
    optional Gaussian noise.
    """
    pi = policy_matrix(policy, mdp.S, mdp.A)
    states = np.full(n, s)
    cached = np.full(n, bool(cache_state))
    acts = np.full(n, 0 if a is None else a)
    ret = np.zeros(n)
    disc = 1.0
    for k in range(t, mdp.T):
        if k > t:
            cached = rng.random(n) >= mdp.d0[k]
            acts = _sample_rows(pi[states], rng)
        r = np.where(cached, mdp.V1[states], mdp.V0[states, acts])
        if reward_noise:
            r = r + reward_noise * rng.standard_normal(n)
        ret += disc * r
        disc *= mdp.gamma
        rows = np.where(cached[:, None], mdp.P1[states], mdp.P0[states, acts])
        states = _sample_rows(rows, rng)
    return float(ret.mean()), float(ret.std(ddof=1) / np.sqrt(n))


def _sample_rows(probs: np.ndarray, rng) -> np.ndarray:
    u = rng.random(len(probs))[:, None]
    idx = np.sum(np.cumsum(probs, axis=1) < u, axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


# --------------------------------------------------------------------------
# enumerated training data for learners


def encode_state(mdp: TabularMDP, t: int, s: int) -> np.ndarray:
    """One-hot over ``(t, s)`` pairs; the time step is part of the state."""
    v = np.zeros(mdp.T * mdp.S)
    v[t * mdp.S + s] = 1.0
    return v


def decode_step(mdp: TabularMDP, states: np.ndarray) -> np.ndarray:
    """Time step of each one-hot encoded state row."""
    return np.argmax(states, axis=1) // mdp.S


def encode_action(mdp: TabularMDP, a: int) -> np.ndarray:
    return np.eye(mdp.A)[a]


def enumerate_transitions(mdp: TabularMDP, behaviour=None,
                          include_cached: bool = True) -> tuple[list[Transition], np.ndarray]:
    """Every reachable one-step transition with its exact probability weight.

    Each ``(t, s, C_t)`` is given weight 1 (real-time actions are spread by
    ``behaviour``, uniform by default) and split over ``(s', C_{t+1})`` by
    the kernel and ``d0[t+1]``.  A weighted TD loss over this set has the
    exact Bellman fixed point, so learners can be checked against the
    oracle without sampling noise.  ``sim_time`` carries the step index.
    ``include_cached=False`` drops the cached branches (use with ``d0 == 1``
    for learners that ignore the cache state).
    """
    S, A, T = mdp.S, mdp.A, mdp.T
    beh = np.full((S, A), 1.0 / A) if behaviour is None else policy_matrix(behaviour, S, A)
    out, weights = [], []
    for t in range(T):
        for s in range(S):
            x = encode_state(mdp, t, s)
            branches = [(CacheState.CACHED, None, 1.0, mdp.V1[s], mdp.P1[s])] if include_cached else []
            for a in range(A):
                if beh[s, a] > 0:
                    branches.append((CacheState.REALTIME, a, beh[s, a], mdp.V0[s, a], mdp.P0[s, a]))
            for c, a, pa, r, row in branches:
                act = None if a is None else encode_action(mdp, a)
                if t == T - 1:
                    out.append(Transition(x, act, float(r), c, x, c, True, float(t)))
                    weights.append(pa)
                    continue
                for s2 in np.flatnonzero(row > 0):
                    x2 = encode_state(mdp, t + 1, s2)
                    for c2, pc in ((CacheState.REALTIME, mdp.d0[t + 1]),
                                   (CacheState.CACHED, 1.0 - mdp.d0[t + 1])):
                        if pc > 0:
                            out.append(Transition(x, act, float(r), c, x2, c2, False, float(t)))
                            weights.append(pa * row[s2] * pc)
    return out, np.asarray(weights)
