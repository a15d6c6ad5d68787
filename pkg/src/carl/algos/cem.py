"""Cross-entropy search for the best constant fusion action."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import ACTION_HIGH, ACTION_LOW, clamp_action


@dataclass
class CemResult:
    mean: np.ndarray
    std: np.ndarray
    history: list = field(default_factory=list)  # (generation, best score, mean)


def cem_search(objective: Callable[[np.ndarray], float], n_a: int, population: int = 12,
               elite_frac: float = 0.25, generations: int = 6, init_mean=None,
               init_std: float = 0.8, min_std: float = 1e-3, rng=None) -> CemResult:
    """Maximise ``objective`` over ``[0, 3]^n_a`` by Gaussian elite refitting.

    Each generation draws ``population`` clamped samples, keeps the top
    ``ceil(elite_frac * population)`` and refits a diagonal Gaussian to them.
    The returned ``mean`` is the final distribution mean.
    """
    if not 0.0 < elite_frac <= 1.0:
        raise ValueError("elite_frac must lie in (0, 1]")
    rng = np.random.default_rng(rng)
    mean = np.full(n_a, 0.5 * (ACTION_LOW + ACTION_HIGH)) if init_mean is None else clamp_action(init_mean)
    std = np.full(n_a, float(init_std))
    n_elite = max(1, int(np.ceil(elite_frac * population)))
    res = CemResult(mean, std)
    for g in range(generations):
        samples = clamp_action(mean + std * rng.standard_normal((population, n_a)))
        scores = np.array([objective(a) for a in samples], dtype=float)
        elite = samples[np.argsort(-scores, kind="stable")[:n_elite]]
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), min_std)
        res.history.append((g, float(scores.max()), mean.copy()))
    res.mean, res.std = mean, std
    return res
