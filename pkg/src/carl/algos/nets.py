"""Scalar-valued networks over a state, or over a state and an action."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..funcapprox import Adam, Mlp, polyak_update

JOINTS = ("concat", "outer")


class Critic:
    """Scalar function ``f(s)`` (``n_a == 0``) or ``f(s, a)``.

    ``joint="concat"`` feeds ``[s, a]`` to the network; ``joint="outer"``
    feeds the flattened outer product ``s a^T``, which with one-hot inputs
    and no hidden layer is exactly a lookup table.
    """

    def __init__(self, state_dim: int, n_a: int, hidden: Sequence[int] = (), joint: str = "concat",
                 rng=None):
        if joint not in JOINTS:
            raise ValueError(f"joint must be one of {JOINTS}")
        self.state_dim, self.n_a, self.joint = state_dim, n_a, joint
        if n_a == 0:
            d_in = state_dim
        else:
            d_in = state_dim + n_a if joint == "concat" else state_dim * n_a
        self.net = Mlp((d_in, *hidden, 1), rng=rng)
        self._in = None

    @property
    def takes_action(self) -> bool:
        return self.n_a > 0

    def _input(self, s: np.ndarray, a) -> np.ndarray:
        s = np.atleast_2d(np.asarray(s, dtype=float))
        if not self.takes_action:
            if a is not None:
                raise ValueError("state-only network given an action")
            return s
        if a is None:
            raise ValueError("state-action network needs an action")
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if not np.all(np.isfinite(a)):
            raise ValueError("action input must be finite")
        if self.joint == "concat":
            return np.concatenate([s, a], axis=1)
        return (s[:, :, None] * a[:, None, :]).reshape(len(s), -1)

    def forward(self, s, a=None) -> np.ndarray:
        """Batch values ``(B,)``; records a tape for :meth:`backward`."""
        x = self._input(s, a)
        self._in = (x, s, a)
        return self.net.forward(x)[:, 0]

    def predict(self, s, a=None) -> np.ndarray:
        return self.net.predict(self._input(s, a))[:, 0]

    __call__ = predict

    def backward(self, dy) -> tuple[list[np.ndarray], np.ndarray | None]:
        """Parameter gradients and the action gradient (``None`` if state-only)."""
        if self._in is None:
            raise RuntimeError("backward called without a recorded forward pass")
        x, s, a = self._in
        grads, gx = self.net.backward(np.asarray(dy, dtype=float)[:, None])
        if not self.takes_action:
            return grads, None
        if self.joint == "concat":
            return grads, gx[:, self.state_dim:]
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return grads, np.einsum("bij,bi->bj", gx.reshape(len(x), self.state_dim, self.n_a), s)

    def action_grad(self, s, a) -> tuple[np.ndarray, np.ndarray]:
        """Values and ``d f / d a`` at ``(s, a)``; parameters are not touched."""
        v = self.forward(s, a)
        _, da = self.backward(np.ones(len(v)))
        return v, da

    def copy(self) -> "Critic":
        out = Critic.__new__(Critic)
        out.state_dim, out.n_a, out.joint = self.state_dim, self.n_a, self.joint
        out.net = self.net.copy()
        out._in = None
        return out


class Trainable:
    """A critic with its optimiser and, optionally, a Polyak target copy."""

    def __init__(self, critic: Critic, lr: float, clip_norm: float | None, with_target: bool):
        self.online = critic
        self.opt = Adam(critic.net, lr=lr, clip_norm=clip_norm)
        self.target = critic.copy() if with_target else None

    def step(self, grads) -> float:
        return self.opt.step(self.online.net, grads)

    def soft_update(self, tau: float) -> None:
        if self.target is not None:
            polyak_update(self.target.net, self.online.net, tau)
