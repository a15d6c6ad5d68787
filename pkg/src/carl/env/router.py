"""Traffic routers deciding, per request, between real-time and cached serving.

Two implementations share the ``decide(t, rng)`` / ``force_realtime(t)``
interface used by the simulator:

* :class:`QueueTraffic` drives a :class:`QueueRouter` with Poisson background
  traffic drawn from the QPS profile, one tick at a time.  A request is served
  in real time iff the number of in-flight computations is below the limit.
* :class:`ProbabilisticRouter` skips the queue and serves from the cache with
  probability ``max(0, 1 - capacity / qps(t))`` where ``capacity`` is the
  saturated queue throughput (the fluid limit of the queue).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import QpsConfig, RouterConfig
from ..core import CacheState
from .qps import DAY, QpsProfile


@dataclass
class QueueRouter:
    """Admission queue of in-flight real-time computations.

    Each in-flight computation completes independently at ``service_rate``
    per simulated second, so the real-time throughput saturates near
    ``queue_limit * service_rate``.
    """

    queue_limit: float
    service_rate: float
    queue_len: int = 0
    emitted_realtime: int = 0
    emitted_cached: int = 0
    completed: int = 0

    def route(self, arrivals: int) -> list[CacheState]:
        out = []
        for _ in range(arrivals):
            if self.queue_len < self.queue_limit:
                self.queue_len += 1
                self.emitted_realtime += 1
                out.append(CacheState.REALTIME)
            else:
                self.emitted_cached += 1
                out.append(CacheState.CACHED)
        return out

    def route_count(self, arrivals: int) -> tuple[int, int]:
        """Same as :meth:`route` but returns only ``(n_realtime, n_cached)``."""
        if math.isinf(self.queue_limit):
            free = arrivals
        else:
            free = max(0, int(math.ceil(self.queue_limit - self.queue_len)))
        n_rt = min(arrivals, free)
        self.queue_len += n_rt
        self.emitted_realtime += n_rt
        self.emitted_cached += arrivals - n_rt
        return n_rt, arrivals - n_rt

    def force_realtime(self) -> None:
        self.queue_len += 1
        self.emitted_realtime += 1

    def complete(self, dt: float, rng) -> int:
        if self.queue_len == 0:
            return 0
        p = 1.0 - math.exp(-self.service_rate * dt)
        n = int(rng.binomial(self.queue_len, p))
        self.queue_len -= n
        self.completed += n
        return n


@dataclass
class TickTelemetry:
    time: float
    qps: float
    queue_len: int
    cached_fraction: float


@dataclass
class QueueTraffic:
    """Background Poisson traffic feeding a :class:`QueueRouter`.

    Background arrivals inside a tick are uniformly spread, so a simulated
    user's request sees exactly the arrivals that precede it in that tick.
    Completions are applied at tick boundaries.
    """

    profile: QpsProfile
    router: QueueRouter
    tick: float = 1.0
    record_telemetry: bool = False
    telemetry: list = field(default_factory=list)
    _k: int = -1
    _qps: float = 0.0
    _bg_times: np.ndarray | None = None
    _bg_n: int = 0
    _bg_done: int = 0
    _tick_rt: int = 0
    _tick_total: int = 0

    @classmethod
    def from_config(cls, qps: QpsConfig, cfg: RouterConfig, record_telemetry=False):
        return cls(
            profile=QpsProfile(qps),
            router=QueueRouter(cfg.queue_limit, cfg.service_rate),
            tick=cfg.tick,
            record_telemetry=record_telemetry,
        )

    def _start_tick(self, k: int, rng) -> None:
        self._k = k
        t0 = k * self.tick
        self._qps = self.profile.sample_qps(t0, rng)
        self._bg_n = int(rng.poisson(self._qps * self.tick))
        self._bg_times = None
        self._bg_done = 0
        self._tick_rt = 0
        self._tick_total = 0

    def _admit_background(self, upto: int) -> None:
        n = upto - self._bg_done
        if n > 0:
            n_rt, _ = self.router.route_count(n)
            self._tick_rt += n_rt
            self._tick_total += n
            self._bg_done = upto

    def _finish_tick(self, rng) -> None:
        self._admit_background(self._bg_n)
        if self.record_telemetry:
            frac = 1.0 - self._tick_rt / self._tick_total if self._tick_total else 0.0
            self.telemetry.append(
                TickTelemetry(self._k * self.tick, self._qps, self.router.queue_len, frac)
            )
        self.router.complete(self.tick, rng)

    def advance_to(self, t: float, rng) -> None:
        k = int(t // self.tick)
        if self._k < 0:
            self._start_tick(k, rng)
        while self._k < k:
            self._finish_tick(rng)
            self._start_tick(self._k + 1, rng)

    def decide(self, t: float, rng) -> CacheState:
        self.advance_to(t, rng)
        if self._bg_times is None:
            self._bg_times = np.sort(rng.random(self._bg_n))
        frac = t / self.tick - self._k
        self._admit_background(int(np.searchsorted(self._bg_times, frac)))
        state = self.router.route(1)[0]
        self._tick_rt += state == CacheState.REALTIME
        self._tick_total += 1
        return state

    def force_realtime(self, t: float) -> None:
        self.router.force_realtime()


def saturated_throughput(cfg: RouterConfig) -> float:
    """Real-time requests/s a full queue sustains: each of ``queue_limit``
    slots completes within a tick with probability ``1 - exp(-rate * tick)``."""
    return cfg.queue_limit * -math.expm1(-cfg.service_rate * cfg.tick) / cfg.tick


@dataclass
class ProbabilisticRouter:
    profile: QpsProfile
    capacity: float
    n_realtime: int = 0
    n_cached: int = 0

    @classmethod
    def from_config(cls, qps: QpsConfig, cfg: RouterConfig):
        return cls(QpsProfile(qps), cfg.fluid_margin * saturated_throughput(cfg))

    def p_cached(self, t) -> np.ndarray | float:
        if isinstance(t, float):
            return min(max(1.0 - self.capacity / self.profile.mean_qps(t), 0.0), 1.0)
        return np.clip(1.0 - self.capacity / self.profile.mean_qps(t), 0.0, 1.0)

    def decide(self, t: float, rng) -> CacheState:
        if rng.random() < self.p_cached(t):
            self.n_cached += 1
            return CacheState.CACHED
        self.n_realtime += 1
        return CacheState.REALTIME

    def force_realtime(self, t: float) -> None:
        self.n_realtime += 1


def make_router(qps: QpsConfig, cfg: RouterConfig, record_telemetry: bool = False):
    if cfg.kind == "queue":
        return QueueTraffic.from_config(qps, cfg, record_telemetry)
    return ProbabilisticRouter.from_config(qps, cfg)


def peak_cached_fraction(qps: QpsConfig, cfg: RouterConfig, days: int = 3,
                         window: float = 600.0, warmup: float = 1800.0, seed: int = 0) -> float:
    """Cached fraction of all arrivals during the peak ``window`` of each day."""
    profile = QpsProfile(qps)
    peak = profile.peak_tod() * DAY
    rng = np.random.default_rng(seed)
    rt = total = 0
    for d in range(days):
        router = QueueRouter(cfg.queue_limit, cfg.service_rate)
        start = d * DAY + peak - window / 2
        n_ticks = int((warmup + window) / cfg.tick)
        for i in range(n_ticks):
            t = start - warmup + i * cfg.tick
            n = int(rng.poisson(profile.sample_qps(t, rng) * cfg.tick))
            n_rt, _ = router.route_count(n)
            if t >= start:
                rt += n_rt
                total += n
            router.complete(cfg.tick, rng)
    return 1.0 - rt / total


def calibrate_queue_limit(qps: QpsConfig, cfg: RouterConfig, target: float = 0.40,
                          lo: int = 1, hi: int = 2000, **kw) -> int:
    """Binary-search the smallest queue limit whose peak cached fraction is at
    most ``target`` (the fraction is non-increasing in the limit)."""
    from dataclasses import replace

    while lo < hi:
        mid = (lo + hi) // 2
        frac = peak_cached_fraction(qps, replace(cfg, queue_limit=mid), **kw)
        if frac <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo
