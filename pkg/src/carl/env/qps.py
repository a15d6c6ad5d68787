"""Diurnal platform load profile: low at night, peaks at lunch and evening."""
from __future__ import annotations

import math

import numpy as np

from ..config import QpsConfig

DAY = 86400.0


def time_of_day(sim_time) -> np.ndarray | float:
    """Fraction of the simulated day in ``[0, 1)``."""
    if isinstance(sim_time, float):
        tod = (sim_time % DAY) / DAY
        return 0.0 if tod >= 1.0 else tod
    tod = np.mod(np.asarray(sim_time, dtype=float), DAY) / DAY
    tod = np.where(tod >= 1.0, 0.0, tod)
    return float(tod) if np.ndim(tod) == 0 else tod


def _circ_dist(a, b):
    d = np.abs(np.asarray(a) - b) % 1.0
    return np.minimum(d, 1.0 - d)


class QpsProfile:
    def __init__(self, cfg: QpsConfig):
        if cfg.base_qps <= 0:
            raise ValueError("base_qps must be positive")
        if cfg.trough_depth >= 1.0:
            raise ValueError("trough_depth must be below 1 to keep QPS positive")
        self.cfg = cfg

    def shape(self, tod) -> np.ndarray | float:
        """Dimensionless load multiplier at day fraction ``tod`` (always > 0)."""
        c = self.cfg
        tod = np.asarray(tod, dtype=float)
        s = np.ones_like(tod)
        for p in c.peak_times:
            s = s + c.peak_amplitude * np.exp(-0.5 * (_circ_dist(tod, p) / c.peak_width) ** 2)
        s = s * (1.0 - c.trough_depth * np.exp(-0.5 * (_circ_dist(tod, c.trough_time) / c.trough_width) ** 2))
        return float(s) if s.ndim == 0 else s

    def mean_qps(self, sim_time) -> np.ndarray | float:
        if isinstance(sim_time, float):
            return self.cfg.base_qps * self._shape_scalar((sim_time % DAY) / DAY)
        return self.cfg.base_qps * self.shape(time_of_day(sim_time))

    def _shape_scalar(self, tod: float) -> float:
        c = self.cfg
        s = 1.0
        for p in c.peak_times:
            d = abs(tod - p) % 1.0
            d = min(d, 1.0 - d) / c.peak_width
            s += c.peak_amplitude * math.exp(-0.5 * d * d)
        d = abs(tod - c.trough_time) % 1.0
        d = min(d, 1.0 - d) / c.trough_width
        return s * (1.0 - c.trough_depth * math.exp(-0.5 * d * d))

    def sample_qps(self, sim_time, rng) -> float:
        """Instantaneous QPS with multiplicative log-normal noise."""
        noise = np.exp(self.cfg.noise_std * rng.standard_normal()) if self.cfg.noise_std > 0 else 1.0
        return float(self.mean_qps(sim_time) * noise)

    def peak_tod(self, resolution: int = 1440) -> float:
        grid = np.arange(resolution) / resolution
        return float(grid[np.argmax(self.shape(grid))])

    def peak_qps(self) -> float:
        return self.cfg.base_qps * self.shape(self.peak_tod())


class ActivityClock:
    """Samples arrival times of a non-homogeneous Poisson process whose rate
    follows the load profile (users are busier when the platform is busy).

    ``rate(t) = daily_count / DAY * shape(t) / mean(shape)``; sampling inverts
    the cumulative intensity on a one-minute grid.
    """

    def __init__(self, profile: QpsProfile, resolution: int = 1440):
        grid = (np.arange(resolution) + 0.5) / resolution
        w = profile.shape(grid)
        w = w / w.mean()
        self.res = resolution
        # cumulative intensity in "expected events per day" units over one day
        self.cum = np.concatenate([[0.0], np.cumsum(w) / resolution])

    def _cum_at(self, t):
        days, frac = divmod(t / DAY, 1.0)
        x = frac * self.res
        i = int(x)
        i = min(i, self.res - 1)
        return days + self.cum[i] + (x - i) * (self.cum[i + 1] - self.cum[i])

    def _inv(self, c):
        days, frac = divmod(c, 1.0)
        i = int(np.searchsorted(self.cum, frac, side="right")) - 1
        i = min(max(i, 0), self.res - 1)
        step = self.cum[i + 1] - self.cum[i]
        x = i + (frac - self.cum[i]) / step
        return (days + x / self.res) * DAY

    def next_arrival(self, t: float, daily_count: float, rng) -> float:
        """First arrival after ``t`` for a process with ``daily_count`` events/day."""
        e = rng.exponential(1.0) / daily_count
        return max(self._inv(self._cum_at(t) + e), t)
