"""Domain types shared by the simulator, the learners and the tabular oracle.

A request is served either by real-time computation (``CacheState.REALTIME``),
in which case the policy emits a fusion action, or from the per-user result
cache (``CacheState.CACHED``), in which case there is no action at all.  The
absence is represented by ``None`` rather than a zero vector so that learners
cannot silently consume a fake action.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

ACTION_LOW = 0.0
ACTION_HIGH = 3.0


class CacheState(IntEnum):
    REALTIME = 0
    CACHED = 1


def clamp_action(a) -> np.ndarray:
    """Clip a fusion action componentwise into ``[0, 3]``."""
    return np.clip(np.asarray(a, dtype=float), ACTION_LOW, ACTION_HIGH)


# --------------------------------------------------------------------------
# user state


@dataclass(frozen=True)
class StateLayout:
    """Block sizes of the flattened user-state vector.

    The flat order is ``profile | history_summary | context | candidate_stats``
    and the first context component is always the time of day in ``[0, 1)``.
    """

    profile: int = 6
    history: int = 4
    context: int = 4
    candidate_stats: int = 6

    @property
    def dim(self) -> int:
        return self.profile + self.history + self.context + self.candidate_stats

    @property
    def time_index(self) -> int:
        return self.profile + self.history

    def slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for name in ("profile", "history", "context", "candidate_stats"):
            n = getattr(self, name)
            out[name] = slice(start, start + n)
            start += n
        return out


@dataclass(frozen=True)
class UserState:
    profile: np.ndarray
    history_summary: np.ndarray
    context: np.ndarray
    candidate_stats: np.ndarray

    @property
    def time_of_day(self) -> float:
        return float(self.context[0])

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.profile, self.history_summary, self.context, self.candidate_stats]
        ).astype(float)

    @classmethod
    def from_vector(cls, v, layout: StateLayout) -> "UserState":
        v = np.asarray(v, dtype=float)
        if v.shape != (layout.dim,):
            raise ValueError(f"state vector has shape {v.shape}, expected ({layout.dim},)")
        s = layout.slices()
        return cls(v[s["profile"]], v[s["history"]], v[s["context"]], v[s["candidate_stats"]])


# --------------------------------------------------------------------------
# transitions


@dataclass(frozen=True, eq=False)
class Transition:
    """One ``(s_t, a_t?, r_t, C_t, s_{t+1}, C_{t+1}, done)`` sample.

    ``state`` and ``next_state`` are flattened :class:`UserState` vectors.
    ``forced`` marks requests where the router asked for the cache but the
    cache held fewer than K items, so the environment computed in real time.
    """

    state: np.ndarray
    action: np.ndarray | None
    reward: float
    cache_state: CacheState
    next_state: np.ndarray
    next_cache_state: CacheState
    done: bool
    sim_time: float
    forced: bool = False

    def __eq__(self, other):
        if not isinstance(other, Transition):
            return NotImplemented
        if (self.action is None) != (other.action is None):
            return False
        return (
            np.array_equal(self.state, other.state)
            and (self.action is None or np.array_equal(self.action, other.action))
            and _same_float(self.reward, other.reward)
            and self.cache_state == other.cache_state
            and np.array_equal(self.next_state, other.next_state)
            and self.next_cache_state == other.next_cache_state
            and self.done == other.done
            and _same_float(self.sim_time, other.sim_time)
            and self.forced == other.forced
        )

    __hash__ = None


def _same_float(a: float, b: float) -> bool:
    return a == b or (math.isnan(a) and math.isnan(b))


def validate_transition(t: Transition, layout: StateLayout | None = None) -> str | None:
    """Return ``None`` if ``t`` is well formed, else the violated invariant."""
    cached = t.cache_state == CacheState.CACHED
    if cached and t.action is not None:
        return "action present under Cached"
    if not cached and t.action is None:
        return "action missing under RealTime"
    if t.action is not None:
        a = np.asarray(t.action, dtype=float)
        if not np.all(np.isfinite(a)):
            return "non-finite action"
        if np.any(a < ACTION_LOW) or np.any(a > ACTION_HIGH):
            return "action outside [0, 3]"
    if not math.isfinite(t.reward):
        return "non-finite reward"
    if not math.isfinite(t.sim_time):
        return "non-finite sim_time"
    for name, v in (("state", t.state), ("next_state", t.next_state)):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1:
            return f"{name} is not a flat vector"
        if not np.all(np.isfinite(v)):
            return f"non-finite {name}"
        if layout is not None:
            if v.shape[0] != layout.dim:
                return f"{name} dimension {v.shape[0]} != {layout.dim}"
            tod = v[layout.time_index]
            if not 0.0 <= tod < 1.0:
                return f"{name} time_of_day outside [0, 1)"
    if len(t.state) != len(t.next_state):
        return "state and next_state dimensions differ"
    return None


class TransitionBatch(NamedTuple):
    """Column view of a list of transitions, as consumed by the losses.

    Absent actions are stored as NaN rows; ``has_action`` is the mask.
    """

    s: np.ndarray
    a: np.ndarray
    has_action: np.ndarray
    r: np.ndarray
    c: np.ndarray
    s2: np.ndarray
    c2: np.ndarray
    done: np.ndarray
    weight: np.ndarray

    @property
    def size(self) -> int:
        return len(self.r)

    @classmethod
    def from_transitions(
        cls, ts: Sequence[Transition], n_a: int, weights=None
    ) -> "TransitionBatch":
        if len(ts) == 0:
            raise ValueError("empty batch")
        a = np.full((len(ts), n_a), np.nan)
        has = np.zeros(len(ts), dtype=bool)
        for i, t in enumerate(ts):
            if t.action is not None:
                a[i] = t.action
                has[i] = True
        w = np.ones(len(ts)) if weights is None else np.asarray(weights, dtype=float)
        return cls(
            s=np.stack([t.state for t in ts]),
            a=a,
            has_action=has,
            r=np.array([t.reward for t in ts], dtype=float),
            c=np.array([int(t.cache_state) for t in ts], dtype=np.int8),
            s2=np.stack([t.next_state for t in ts]),
            c2=np.array([int(t.next_cache_state) for t in ts], dtype=np.int8),
            done=np.array([t.done for t in ts], dtype=bool),
            weight=w,
        )


# --------------------------------------------------------------------------
# transition log (one record per line)

LOG_COLUMNS = (
    "state",
    "action",
    "reward",
    "cache_state",
    "next_state",
    "next_cache_state",
    "done",
    "sim_time",
    "forced",
)
NULL_TOKEN = "null"


def _fmt_float(x) -> str:
    return repr(float(x))


def _fmt_vec(v) -> str:
    return ",".join(_fmt_float(x) for x in np.asarray(v).ravel())


def _parse_vec(s: str) -> np.ndarray:
    return np.array([float(x) for x in s.split(",")]) if s else np.zeros(0)


def format_transition(t: Transition) -> str:
    return "\t".join(
        [
            _fmt_vec(t.state),
            NULL_TOKEN if t.action is None else _fmt_vec(t.action),
            _fmt_float(t.reward),
            str(int(t.cache_state)),
            _fmt_vec(t.next_state),
            str(int(t.next_cache_state)),
            "1" if t.done else "0",
            _fmt_float(t.sim_time),
            "1" if t.forced else "0",
        ]
    )


def parse_transition(line: str) -> Transition:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != len(LOG_COLUMNS):
        raise ValueError(f"expected {len(LOG_COLUMNS)} fields, got {len(parts)}")
    s, a, r, c, s2, c2, done, t, forced = parts
    return Transition(
        state=_parse_vec(s),
        action=None if a == NULL_TOKEN else _parse_vec(a),
        reward=float(r),
        cache_state=CacheState(int(c)),
        next_state=_parse_vec(s2),
        next_cache_state=CacheState(int(c2)),
        done=done == "1",
        sim_time=float(t),
        forced=forced == "1",
    )


def write_transition_log(f: IO[str], transitions: Iterable[Transition]) -> int:
    """Write the header line and one tab-separated record per transition."""
    f.write("\t".join(LOG_COLUMNS) + "\n")
    n = 0
    for t in transitions:
        f.write(format_transition(t) + "\n")
        n += 1
    return n


def read_transition_log(f: IO[str]) -> Iterator[Transition]:
    header = f.readline().rstrip("\n").split("\t")
    if tuple(header) != LOG_COLUMNS:
        raise ValueError(f"unexpected transition log header: {header}")
    for line in f:
        if line.strip():
            yield parse_transition(line)


# --------------------------------------------------------------------------
# per-user result cache


class CacheEntry(NamedTuple):
    item_id: int
    scores: np.ndarray
    enqueue_time: float


class CacheBuffer:
    """Per-user FIFO of pre-scored items awaiting cached serving.

    Stored as parallel arrays ordered oldest first.  Pushing beyond
    ``capacity`` evicts the oldest entries.
    """

    def __init__(self, capacity: int, n_scores: int = 0):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = capacity
        self.ids = np.zeros(0, dtype=np.int64)
        self.scores = np.zeros((0, n_scores))
        self.times = np.zeros(0)

    def __len__(self) -> int:
        return len(self.ids)

    def entries(self) -> list[CacheEntry]:
        return [CacheEntry(int(i), x, float(t)) for i, x, t in zip(self.ids, self.scores, self.times)]

    def push(self, ids, scores, enqueue_time) -> int:
        """Append items in order; returns the number evicted."""
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) == 0:
            return 0
        scores = np.asarray(scores, dtype=float).reshape(len(ids), -1)
        times = np.full(len(ids), enqueue_time, dtype=float)
        if len(self.ids) == 0:
            self.scores = np.zeros((0, scores.shape[1]))
        n = len(self.ids) + len(ids)
        drop = max(0, n - self.capacity)
        self.ids = np.concatenate([self.ids, ids])[drop:]
        self.scores = np.concatenate([self.scores, scores])[drop:]
        self.times = np.concatenate([self.times, times])[drop:]
        return drop

    def _cut(self, idx: np.ndarray, upto: int):
        out = (self.ids[idx], self.scores[idx], self.times[idx])
        self.ids = self.ids[upto:]
        self.scores = self.scores[upto:]
        self.times = self.times[upto:]
        return out

    def pop(self, k: int):
        """Remove and return ``(ids, scores, times)`` of the ``k`` oldest entries."""
        if k > len(self.ids):
            raise IndexError(f"cache underflow: need {k}, have {len(self.ids)}")
        return self._cut(np.arange(k), k)

    def pop_unseen(self, k: int, seen: np.ndarray):
        """Pop the ``k`` oldest entries whose ids are not flagged in ``seen``
        (a boolean array over item ids) and not repeated among themselves.
        Skipped entries ahead of them are discarded.  Returns None, leaving
        the buffer untouched, if fewer than ``k`` such entries exist.
        """
        ok = ~seen[self.ids]
        if ok.sum() < k:
            return None
        _, first = np.unique(self.ids, return_index=True)
        uniq = np.zeros(len(self.ids), dtype=bool)
        uniq[first] = True
        idx = np.flatnonzero(ok & uniq)
        if len(idx) < k:
            return None
        idx = idx[:k]
        return self._cut(idx, idx[-1] + 1)

    def expire(self, now: float, ttl: float) -> int:
        """Drop entries older than ``ttl`` seconds; returns the number dropped."""
        # enqueue times are non-decreasing, so expired entries form a prefix
        n = int(np.searchsorted(self.times, now - ttl, side="left"))
        if n:
            self._cut(np.arange(0), n)
        return n

    def clear(self) -> None:
        self._cut(np.arange(0), len(self.ids))
