"""Time-of-day estimate of the probability that a request is served in real time."""
from __future__ import annotations

import numpy as np

from ..core import StateLayout
from ..env.qps import DAY


class CacheRatioEstimator:
    """Counts real-time and cached requests per time-of-day bucket.

    ``query`` returns ``(d0, d1)`` with pseudo-count ``alpha`` added to both
    counts, so an empty bucket reads ``(0.5, 0.5)`` when ``alpha > 0``.
    """

    def __init__(self, bucket_minutes: float = 10.0, alpha: float = 1.0):
        if bucket_minutes <= 0 or alpha < 0:
            raise ValueError("bucket_minutes must be positive and alpha non-negative")
        self.n_buckets = int(round(DAY / (60.0 * bucket_minutes)))
        if self.n_buckets < 1 or abs(self.n_buckets * bucket_minutes * 60.0 - DAY) > 1e-6:
            raise ValueError("bucket width must divide the day")
        self.alpha = alpha
        self.counts = np.zeros((self.n_buckets, 2))

    def bucket_of_tod(self, tod) -> np.ndarray:
        b = np.floor(np.asarray(tod, dtype=float) * self.n_buckets).astype(int)
        return np.clip(b, 0, self.n_buckets - 1)

    def bucket(self, sim_time) -> np.ndarray:
        return self.bucket_of_tod(np.mod(np.asarray(sim_time, dtype=float), DAY) / DAY)

    def observe(self, sim_times, cache_states) -> "CacheRatioEstimator":
        b = self.bucket(sim_times)
        c = np.asarray(cache_states, dtype=int)
        np.add.at(self.counts, (np.atleast_1d(b), np.atleast_1d(c)), 1.0)
        return self

    def _d0_of_buckets(self, b) -> np.ndarray:
        n = self.counts[b] + self.alpha
        tot = n.sum(axis=-1)
        if np.any(tot == 0):
            raise ValueError("empty bucket and no smoothing: cache ratio undefined")
        return n[..., 0] / tot

    def query(self, sim_time) -> tuple:
        d0 = self._d0_of_buckets(self.bucket(sim_time))
        return d0, 1.0 - d0

    def query_tod(self, tod) -> tuple:
        d0 = self._d0_of_buckets(self.bucket_of_tod(tod))
        return d0, 1.0 - d0

    def d0_of_states(self, states: np.ndarray, layout: StateLayout) -> np.ndarray:
        """``d0`` for flattened user states, read from their time-of-day slot."""
        return self.query_tod(np.atleast_2d(states)[:, layout.time_index])[0]

    def curve(self) -> tuple[np.ndarray, np.ndarray]:
        """Bucket start (day fraction) and ``d1`` per bucket."""
        d0 = self._d0_of_buckets(np.arange(self.n_buckets))
        return np.arange(self.n_buckets) / self.n_buckets, 1.0 - d0
