"""Turn a raw request log into session-ordered transitions."""
from __future__ import annotations

from collections import defaultdict
from typing import Iterable

from ..core import CacheState, Transition


def collect_sessions(records: Iterable, session_gap: float = 900.0) -> list[Transition]:
    """Pair consecutive requests of each user's sessions into transitions.

    ``records`` need ``user_id``, ``sim_time``, ``state``, ``action``,
    ``reward``, ``cache_state`` and optionally ``forced`` attributes.  A gap
    strictly greater than ``session_gap`` starts a new session; the last
    request of a session becomes a ``done`` transition.  Output is ordered
    by user, then time, so it does not depend on the input order.
    """
    by_user = defaultdict(list)
    for r in records:
        by_user[r.user_id].append(r)
    out: list[Transition] = []
    for uid in sorted(by_user):
        reqs = sorted(by_user[uid], key=lambda r: r.sim_time)
        for a, b in zip(reqs, reqs[1:]):
            if a.sim_time == b.sim_time:
                raise ValueError(f"duplicate request for user {uid} at t={a.sim_time}")
        for i, r in enumerate(reqs):
            nxt = reqs[i + 1] if i + 1 < len(reqs) else None
            done = nxt is None or nxt.sim_time - r.sim_time > session_gap
            c = CacheState(r.cache_state)
            out.append(Transition(
                state=r.state,
                action=r.action,
                reward=float(r.reward),
                cache_state=c,
                next_state=r.state if done else nxt.state,
                next_cache_state=c if done else CacheState(nxt.cache_state),
                done=done,
                sim_time=float(r.sim_time),
                forced=bool(getattr(r, "forced", False)),
            ))
    return out
