"""Event-driven, seeded simulator of users requesting recommendations.

Requests of all users are processed in time order.  For each request the
simulator draws candidates, builds the observed :class:`~carl.core.UserState`,
asks the router for a cache state and then either

* runs the ranking step with the policy's fusion action, shows the top K and
  pushes ranks K+1..L into the user's cache, or
* serves the K oldest cached items (no action).

If the router asks for the cache while it holds fewer than K usable items the
request is computed in real time instead and flagged ``forced``.
Consecutive requests of one session are paired into
:class:`~carl.core.Transition` objects as soon as the second one is served.
"""
from __future__ import annotations

import dataclasses
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ..config import RunConfig
from ..core import CacheState, Transition, clamp_action
from .qps import DAY, ActivityClock, QpsProfile, time_of_day
from .ranking import rank_and_split
from .router import make_router
from .users import ItemCatalog, SyntheticUser, make_user, user_feedback

Policy = Callable[[np.ndarray], np.ndarray]

N_BUCKETS = 144  # ten-minute time-of-day buckets for built-in statistics
_PCTS = (0.1, 0.3, 0.5, 0.7, 0.9)


class RequestRecord(NamedTuple):
    user_id: int
    session_id: int
    sim_time: float
    state: np.ndarray
    action: np.ndarray | None
    reward: float
    cache_state: CacheState
    forced: bool
    likes: float
    follows: float
    staleness: float


@dataclass
class SimStats:
    """Running aggregates; cheap enough to keep for 10^6-step runs."""

    n: np.ndarray = field(default_factory=lambda: np.zeros((N_BUCKETS, 2)))
    watch: np.ndarray = field(default_factory=lambda: np.zeros((N_BUCKETS, 2)))
    likes: np.ndarray = field(default_factory=lambda: np.zeros((N_BUCKETS, 2)))
    follows: np.ndarray = field(default_factory=lambda: np.zeros((N_BUCKETS, 2)))
    n_forced: int = 0
    sessions: list = field(default_factory=list)  # (uid, start, end, watch, n_requests)
    daily: dict = field(default_factory=dict)  # (uid, day) -> watch

    @property
    def steps(self) -> int:
        return int(self.n.sum())

    def ratio(self, what: str = "watch") -> float:
        """Mean cached / mean real-time value of a feedback head."""
        tot = getattr(self, what).sum(axis=0)
        n = self.n.sum(axis=0)
        return (tot[1] / n[1]) / (tot[0] / n[0])

    def cached_fraction(self) -> np.ndarray:
        """Per ten-minute bucket share of cached requests (NaN if empty)."""
        tot = self.n.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, self.n[:, 1] / tot, np.nan)


def _percentiles(v: np.ndarray) -> np.ndarray:
    s = np.sort(v)
    pos = np.asarray(_PCTS) * (len(s) - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


class Simulator:
    def __init__(self, cfg: RunConfig, seed: int | None = None, n_users: int | None = None,
                 router_kind: str | None = None, record_telemetry: bool = False,
                 keep_records: bool = False, start_time: float = 0.0):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        ss = np.random.SeedSequence(self.seed)
        (r_cat, r_users, r_router, r_time, r_cand, r_fb, r_leave) = (
            np.random.default_rng(s) for s in ss.spawn(7)
        )
        self.rng_router, self.rng_time = r_router, r_time
        self.rng_cand, self.rng_fb, self.rng_leave = r_cand, r_fb, r_leave
        self.catalog = ItemCatalog(cfg.users, cfg.n_a, cfg.x_max, r_cat)
        n_users = cfg.users.n_users if n_users is None else n_users
        self.users = [make_user(u, cfg, r_users) for u in range(n_users)]
        kind = cfg.router.kind if router_kind is None else router_kind
        self.router = make_router(cfg.qps, dataclasses.replace(cfg.router, kind=kind),
                                  record_telemetry)
        self.profile = QpsProfile(cfg.qps)
        self.clock = ActivityClock(self.profile)
        self.layout = cfg.layout
        N = self.catalog.n_items
        self._units = np.array([b for b in range(1, N) if math.gcd(b, N) == 1] or [1])
        self._steps = np.arange(N)
        self.stats = SimStats()
        self.keep_records = keep_records
        self.records: list[RequestRecord] = []
        self.now = start_time
        self._seq = 0
        self._events: list = []
        for u in self.users:
            t = self.clock.next_arrival(start_time, cfg.users.sessions_per_day, r_time)
            self._push(t, u.uid)

    # -- scheduling --------------------------------------------------------
    def _push(self, t: float, uid: int) -> None:
        heapq.heappush(self._events, (t, self._seq, uid))
        self._seq += 1

    def next_event_time(self) -> float:
        return self._events[0][0] if self._events else math.inf

    def run(self, policy: Policy, until: float, max_steps: int | None = None) -> list[Transition]:
        """Serve every request scheduled before ``until``; return finished transitions."""
        out: list[Transition] = []
        steps = 0
        while self._events and self._events[0][0] < until:
            if max_steps is not None and steps >= max_steps:
                break
            t, _, uid = heapq.heappop(self._events)
            self.step_user(uid, t, policy, out)
            steps += 1
        if max_steps is None:
            self.now = max(self.now, until)
        return out

    # -- one request -------------------------------------------------------
    def _candidates(self, user: SyntheticUser) -> np.ndarray:
        """Distinct unseen item ids drawn as a random affine walk ``(a + b k) mod N``.

        Item attributes are i.i.d., so any set of distinct ids is as good as
        a uniform subset, and this is far cheaper than sampling without
        replacement.
        """
        n, N = self.cfg.n_candidates, self.catalog.n_items
        m = min(N, 2 * n + user.session_requests * self.cfg.K)
        j, a = divmod(int(self.rng_cand.integers(N * len(self._units))), N)
        ids = (a + self._units[j] * self._steps[:m]) % N
        ids = ids[~user.shown[ids]]
        if len(ids) < n:  # pragma: no cover - only for tiny catalogues
            ids = np.flatnonzero(~user.shown)
            ids = self.rng_cand.permutation(ids)
        return ids[:n]

    def build_state(self, user: SyntheticUser, t: float, x: np.ndarray) -> np.ndarray:
        tod = time_of_day(t)
        gap = 0.0 if user.session_requests == 0 else t - user.last_request
        m = x.sum(axis=1) / x.shape[1]
        head = [user.ema_watch, user.fatigue, user.session_requests / 20.0,
                math.log1p(t - user.session_start) / 8.0,
                tod, math.sin(2 * math.pi * tod), math.cos(2 * math.pi * tod),
                math.log1p(gap) / 7.0, float(m.sum()) / len(m)]
        return np.concatenate([user.profile, head, _percentiles(m)])

    def step_user(self, uid: int, t: float, policy: Policy, out: list | None = None,
                  decision: CacheState | None = None) -> RequestRecord:
        """Serve one request of ``uid`` at time ``t``.

        ``decision`` overrides the router (``CACHED`` is a "use cache" order).
        """
        cfg, user = self.cfg, self.users[uid]
        if not user.in_session:
            user.in_session = True
            user.session_id += 1
            user.session_start = t
            user.session_requests = 0
            user.session_reward = 0.0
            user.fatigue = 0.0
            user.shown = np.zeros(self.catalog.n_items, dtype=bool)
            user.affinity = self.catalog.affinity(user.latent_pref)
        user.cache.expire(t, cfg.ttl)

        cands = self._candidates(user)
        q = self.catalog.quality(user.latent_pref, cands, user.affinity)
        x = self.catalog.predict(q, self.rng_cand)
        state = self.build_state(user, t, x)

        c = self.router.decide(t, self.rng_router) if decision is None else CacheState(decision)
        forced = False
        popped = None
        if c == CacheState.CACHED:
            popped = user.cache.pop_unseen(cfg.K, user.shown)
            if popped is None:
                forced = True
                c = CacheState.REALTIME
                if decision is None:
                    self.router.force_realtime(t)
        action = None
        if c == CacheState.REALTIME:
            action = clamp_action(policy(state))
            shown_pos, cache_pos = rank_and_split(cands, x, action, cfg.L, cfg.K,
                                                  cfg.fusion, cfg.fusion_eps)
            user.cache.push(cands[cache_pos], x[cache_pos], t)
            shown_ids = cands[shown_pos]
            q_shown = q[shown_pos]
            staleness = 0.0
        else:
            shown_ids, _, enqueued = popped
            q_shown = self.catalog.quality(user.latent_pref, shown_ids, user.affinity)
            staleness = t - enqueued

        noise = self.rng_fb.standard_normal((cfg.K, 3))
        fb = user_feedback(user, q_shown, c, staleness, cfg.users, cfg.feedback, noise)
        reward = fb.watch

        # user dynamics
        user.shown[shown_ids] = True
        rel = reward / (cfg.K * user.base_watch)
        user.ema_watch = 0.7 * user.ema_watch + 0.3 * rel
        user.fatigue += cfg.users.fatigue_step
        user.session_requests += 1
        user.session_reward += reward
        user.last_request = t

        stale = float(np.mean(staleness)) if c == CacheState.CACHED else 0.0
        rec = RequestRecord(uid, user.session_id, t, state, action, reward, c, forced,
                            fb.likes, fb.follows, stale)
        self._account(rec)
        if user.pending is not None:
            p = user.pending
            self._emit(out, Transition(p.state, p.action, p.reward, p.cache_state, state, c,
                                       False, p.sim_time, p.forced))
        if self.rng_leave.random() < user.leave_probability(cfg.users, rel):
            self._emit(out, Transition(state, action, reward, c, state, c, True, t, forced))
            user.pending = None
            user.in_session = False
            user.shown = user.affinity = None
            self.stats.sessions.append((uid, user.session_start, t, user.session_reward,
                                        user.session_requests))
            t_next = self.clock.next_arrival(t + cfg.session_gap, cfg.users.sessions_per_day,
                                             self.rng_time)
        else:
            user.pending = rec
            uc = cfg.users
            t_next = t + min(uc.gap_min + self.rng_time.exponential(uc.gap_mean), uc.gap_max)
        if decision is None:
            self._push(t_next, uid)
        return rec

    def _emit(self, out, tr: Transition) -> None:
        if out is not None:
            out.append(tr)

    def _account(self, rec: RequestRecord) -> None:
        st = self.stats
        b = min(int(time_of_day(rec.sim_time) * N_BUCKETS), N_BUCKETS - 1)
        c = int(rec.cache_state)
        st.n[b, c] += 1
        st.watch[b, c] += rec.reward
        st.likes[b, c] += rec.likes
        st.follows[b, c] += rec.follows
        st.n_forced += rec.forced
        key = (rec.user_id, int(rec.sim_time // DAY))
        st.daily[key] = st.daily.get(key, 0.0) + rec.reward
        if self.keep_records:
            self.records.append(rec)

    # -- helpers -----------------------------------------------------------
    def telemetry_rows(self):
        tel = getattr(self.router, "telemetry", [])
        return [(r.time, r.qps, r.queue_len, r.cached_fraction) for r in tel]
