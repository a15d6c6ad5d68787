import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carl.core import (
    CacheBuffer,
    CacheState,
    LOG_COLUMNS,
    StateLayout,
    Transition,
    TransitionBatch,
    UserState,
    clamp_action,
    format_transition,
    parse_transition,
    read_transition_log,
    validate_transition,
    write_transition_log,
)

from conftest import make_transition

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


def test_cache_state_has_two_values():
    assert [int(c) for c in CacheState] == [0, 1]


def test_layout_dimension_and_time_slot():
    lay = StateLayout()
    assert lay.dim == 20
    v = np.arange(20.0) / 100
    u = UserState.from_vector(v, lay)
    assert u.time_of_day == v[lay.time_index]
    assert np.array_equal(u.to_vector(), v)
    with pytest.raises(ValueError):
        UserState.from_vector(np.zeros(19), lay)


# -- validate_transition examples ------------------------------------------


def test_cached_with_action_is_a_violation(rng):
    t = make_transition(rng, cached=True)
    bad = Transition(t.state, np.ones(5), t.reward, t.cache_state, t.next_state,
                     t.next_cache_state, t.done, t.sim_time)
    assert validate_transition(bad) == "action present under Cached"


def test_realtime_in_range_is_ok(rng):
    assert validate_transition(make_transition(rng)) is None


def test_nan_reward_is_a_violation(rng):
    assert validate_transition(make_transition(rng, reward=math.nan)) == "non-finite reward"


def test_other_violations(rng):
    t = make_transition(rng)
    cases = {
        "action missing under RealTime": dict(action=None),
        "action outside [0, 3]": dict(action=np.full(5, 3.5)),
        "non-finite state": dict(state=np.full(20, np.inf)),
    }
    for msg, kw in cases.items():
        fields = dict(t.__dict__)
        fields.update(kw)
        assert validate_transition(Transition(**fields)) == msg
    lay = StateLayout()
    s = t.state.copy()
    s[lay.time_index] = 1.0
    fields = dict(t.__dict__, state=s)
    assert validate_transition(Transition(**fields), lay) == "state time_of_day outside [0, 1)"


# -- properties -------------------------------------------------------------


@st.composite
def transitions(draw):
    dim = draw(st.integers(1, 6))
    cached = draw(st.booleans())
    vec = st.lists(finite, min_size=dim, max_size=dim).map(np.array)
    action = None if cached else draw(st.lists(finite, min_size=3, max_size=3).map(np.array))
    return Transition(
        state=draw(vec), action=action, reward=draw(finite),
        cache_state=CacheState(int(cached)), next_state=draw(vec),
        next_cache_state=CacheState(draw(st.integers(0, 1))), done=draw(st.booleans()),
        sim_time=draw(finite), forced=draw(st.booleans()),
    )


@given(transitions())
def test_log_round_trip_is_bitwise(t):
    back = parse_transition(format_transition(t))
    assert back == t
    assert back.state.tobytes() == np.asarray(t.state, dtype=float).tobytes()


def test_log_file_has_header_and_null_token(rng):
    ts = [make_transition(rng), make_transition(rng, cached=True)]
    buf = io.StringIO()
    assert write_transition_log(buf, ts) == 2
    text = buf.getvalue()
    assert text.splitlines()[0].split("\t") == list(LOG_COLUMNS)
    assert text.splitlines()[2].split("\t")[1] == "null"
    assert list(read_transition_log(io.StringIO(text))) == ts
    with pytest.raises(ValueError):
        list(read_transition_log(io.StringIO("bad header\n")))


@given(st.lists(st.floats(allow_nan=False, min_value=-1e6, max_value=1e6), min_size=1, max_size=8))
def test_clamp_is_idempotent_and_in_range(a):
    c = clamp_action(a)
    assert np.array_equal(clamp_action(c), c)
    assert np.all((c >= 0) & (c <= 3))


@settings(max_examples=200)
@given(st.integers(0, 60), st.integers(1, 40), st.integers(0, 40), st.integers(0, 12))
def test_cache_push_pop_length(cap, prev, m, k):
    buf = CacheBuffer(cap, 2)
    buf.push(np.arange(prev), np.zeros((prev, 2)), 0.0)
    n0 = len(buf)
    buf.push(np.arange(100, 100 + m), np.ones((m, 2)), 1.0)
    assert len(buf) <= cap
    expected = min(n0 + m, cap) - k
    if expected >= 0:
        buf.pop(k)
        assert len(buf) == expected
    else:
        with pytest.raises(IndexError):
            buf.pop(k)


def test_cache_fifo_order_and_eviction():
    buf = CacheBuffer(5, 1)
    buf.push([1, 2, 3], [[1], [2], [3]], 0.0)
    assert buf.push([4, 5, 6, 7], [[4], [5], [6], [7]], 10.0) == 2
    ids, scores, times = buf.pop(2)
    assert ids.tolist() == [3, 4] and scores[:, 0].tolist() == [3, 4]
    assert times.tolist() == [0.0, 10.0]
    assert [e.item_id for e in buf.entries()] == [5, 6, 7]


def test_cache_pop_unseen_and_expire():
    buf = CacheBuffer(10, 1)
    buf.push([1, 2, 3, 2, 4], np.zeros((5, 1)), 0.0)
    buf.push([5], np.zeros((1, 1)), 100.0)
    seen = np.zeros(10, dtype=bool)
    seen[1] = True
    ids, _, _ = buf.pop_unseen(3, seen)
    assert ids.tolist() == [2, 3, 4]  # 1 seen, the second 2 is a repeat
    assert buf.ids.tolist() == [5]
    assert buf.pop_unseen(2, seen) is None and len(buf) == 1
    buf.push([6], np.zeros((1, 1)), 200.0)
    assert buf.expire(now=250.0, ttl=100.0) == 1
    assert buf.ids.tolist() == [6]


def test_batch_marks_missing_actions(rng):
    ts = [make_transition(rng), make_transition(rng, cached=True)]
    b = TransitionBatch.from_transitions(ts, 5)
    assert b.size == 2 and b.has_action.tolist() == [True, False]
    assert np.all(np.isnan(b.a[1]))
    with pytest.raises(ValueError):
        TransitionBatch.from_transitions([], 5)
