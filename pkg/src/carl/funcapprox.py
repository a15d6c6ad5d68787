"""Small multilayer perceptrons with exact reverse-mode gradients.

Every learned function in the package (actor, critics, immediate-reward heads,
eigen head) is an :class:`Mlp`: tanh hidden layers and either an identity or a
``3 * sigmoid`` output.  Gradients are computed by hand and checked against
central finite differences in the test-suite.
"""
from __future__ import annotations

import io
from typing import Mapping, Sequence

import numpy as np

from .core import ACTION_HIGH

OUTPUTS = ("identity", "sigmoid3")
CHECKPOINT_VERSION = 1


class Mlp:
    """Fully connected network ``layer_dims[0] -> ... -> layer_dims[-1]``.

    Parameters are stored as ``[W0, b0, W1, b1, ...]`` with ``W_i`` of shape
    ``(d_i, d_{i+1})``, so a batch ``x`` of shape ``(B, d_0)`` maps to
    ``x @ W0 + b0``.
    """

    def __init__(self, layer_dims: Sequence[int], output: str = "identity", rng=None):
        if len(layer_dims) < 2 or any(int(d) <= 0 for d in layer_dims):
            raise ValueError(f"bad layer_dims {layer_dims!r}")
        if output not in OUTPUTS:
            raise ValueError(f"output must be one of {OUTPUTS}")
        self.layer_dims = tuple(int(d) for d in layer_dims)
        self.output = output
        rng = np.random.default_rng(rng)
        self.params: list[np.ndarray] = []
        for d_in, d_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            bound = 1.0 / np.sqrt(d_in)
            self.params.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
            self.params.append(rng.uniform(-bound, bound, size=d_out))
        self._tape = None

    # -- bookkeeping -------------------------------------------------------
    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def same_architecture(self, other: "Mlp") -> bool:
        return self.layer_dims == other.layer_dims and self.output == other.output

    def copy(self) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.layer_dims = self.layer_dims
        net.output = self.output
        net.params = [p.copy() for p in self.params]
        net._tape = None
        return net

    snapshot = copy

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ValueError("flat parameter vector has the wrong size")
        i = 0
        for p in self.params:
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size

    # -- evaluation --------------------------------------------------------
    def _run(self, x, record: bool):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[-1] != self.layer_dims[0]:
            raise ValueError(
                f"input has {h.shape[-1]} features, network expects {self.layer_dims[0]}"
            )
        acts = [h]
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < self.n_layers - 1:
                h = np.tanh(z)
            elif self.output == "sigmoid3":
                h = ACTION_HIGH / (1.0 + np.exp(-z))
            else:
                h = z
            acts.append(h)
        if record:
            self._tape = (acts, single)
        return h[0] if single else h

    def forward(self, x) -> np.ndarray:
        """Evaluate and record activations for a subsequent :meth:`backward`."""
        return self._run(x, record=True)

    def predict(self, x) -> np.ndarray:
        """Evaluate without touching the recorded tape."""
        return self._run(x, record=False)

    __call__ = predict

    def backward(self, dy) -> tuple[list[np.ndarray], np.ndarray]:
        """Back-propagate the output adjoint ``dy`` through the last forward.

        Returns the parameter gradients (same layout as ``params``) and the
        gradient with respect to the input.
        """
        if self._tape is None:
            raise RuntimeError("backward called without a recorded forward pass")
        acts, single = self._tape
        g = np.asarray(dy, dtype=float)
        g = g[None, :] if single else g
        if g.shape != acts[-1].shape:
            raise ValueError(f"adjoint shape {g.shape} != output shape {acts[-1].shape}")
        if self.output == "sigmoid3":
            y = acts[-1]
            g = g * y * (1.0 - y / ACTION_HIGH)
        grads: list[np.ndarray] = [None] * len(self.params)
        for i in reversed(range(self.n_layers)):
            h_in = acts[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
            if i > 0:
                g = g * (1.0 - acts[i] ** 2)
        return grads, (g[0] if single else g)


class Adam:
    """Adam update with global gradient-norm clipping."""

    def __init__(self, net: Mlp, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip_norm: float | None = 5.0):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.m = [np.zeros_like(p) for p in net.params]
        self.v = [np.zeros_like(p) for p in net.params]
        self.t = 0

    def step(self, net: Mlp, grads: Sequence[np.ndarray]) -> float:
        """Apply one update in place; returns the pre-clip gradient norm."""
        with np.errstate(over="ignore"):
            norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
        if not np.isfinite(norm):
            # rescale first so huge but finite gradients still clip correctly
            mx = max(float(np.max(np.abs(g))) for g in grads)
            norm = mx * float(np.sqrt(sum(float(np.sum((g / mx) ** 2)) for g in grads)))
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(net.params, grads, self.m, self.v):
            g = g * scale
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


def polyak_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """In-place ``target <- (1 - tau) * target + tau * online``."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    if not target.same_architecture(online):
        raise ValueError("polyak_update needs identical architectures")
    for pt, po in zip(target.params, online.params):
        pt *= 1.0 - tau
        pt += tau * po
    return target


# --------------------------------------------------------------------------
# finite-difference verification


def sample_coords(params: Sequence[np.ndarray], n: int, rng) -> list[tuple[int, int]]:
    """``n`` distinct ``(tensor index, flat index)`` pairs (all of them if fewer)."""
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    flat = np.random.default_rng(rng).choice(total, size=min(n, total), replace=False)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    out = []
    for f in np.sort(flat):
        i = int(np.searchsorted(starts, f, side="right") - 1)
        out.append((i, int(f - starts[i])))
    return out


def finite_difference(loss_fn, params: Sequence[np.ndarray], coords, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn()`` at the given coordinates.

    Parameters are perturbed in place and restored afterwards.
    """
    out = np.empty(len(coords))
    for k, (i, j) in enumerate(coords):
        p = params[i].reshape(-1)
        old = p[j]
        p[j] = old + h
        up = loss_fn()
        p[j] = old - h
        down = loss_fn()
        p[j] = old
        out[k] = (up - down) / (2.0 * h)
    return out


def relative_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries
    from turning round-off into large relative errors."""
    a, n = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_check(loss_fn, params, grads, n: int = 100, h: float = 1e-5, rng=0) -> float:
    """Largest relative error between ``grads`` and central differences on
    ``n`` random coordinates."""
    coords = sample_coords(params, n, rng)
    analytic = np.array([grads[i].reshape(-1)[j] for i, j in coords])
    return float(np.max(relative_error(analytic, finite_difference(loss_fn, params, coords, h))))


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(f, nets: Mapping[str, Mlp]) -> None:
    """Write networks to an ``.npz`` archive (path or binary file object)."""
    arrays = {"format_version": np.array(CHECKPOINT_VERSION)}
    for name in sorted(nets):
        if "/" in name:
            raise ValueError("network names may not contain '/'")
        net = nets[name]
        arrays[f"{name}/layer_dims"] = np.array(net.layer_dims)
        arrays[f"{name}/output"] = np.array(net.output)
        for i, p in enumerate(net.params):
            arrays[f"{name}/p{i}"] = p
    np.savez(f, **arrays)


def load_checkpoint(f) -> dict[str, Mlp]:
    with np.load(f, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        names = sorted({k.split("/")[0] for k in z.files if "/" in k})
        out = {}
        for name in names:
            dims = [int(d) for d in z[f"{name}/layer_dims"]]
            net = Mlp(dims, output=str(z[f"{name}/output"]), rng=0)
            for i in range(len(net.params)):
                p = z[f"{name}/p{i}"]
                if p.shape != net.params[i].shape:
                    raise ValueError(f"{name}: parameter {i} has shape {p.shape}")
                net.params[i] = p.astype(float).copy()
            out[name] = net
    return out


def load_into(net: Mlp, saved: Mlp) -> None:
    """Copy ``saved`` parameters into ``net`` after checking the architecture."""
    if not net.same_architecture(saved):
        raise ValueError(
            f"architecture mismatch: {net.layer_dims}/{net.output} vs "
            f"{saved.layer_dims}/{saved.output}"
        )
    for p, q in zip(net.params, saved.params):
        p[...] = q


def checkpoint_bytes(nets: Mapping[str, Mlp]) -> bytes:
    buf = io.BytesIO()
    save_checkpoint(buf, nets)
    return buf.getvalue()
