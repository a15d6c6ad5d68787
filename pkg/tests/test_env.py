import io
import math

import numpy as np
import pytest

from carl.config import QpsConfig, RouterConfig
from carl.core import CacheState, validate_transition, write_transition_log
from carl.env import (
    CandidateShortage,
    QpsProfile,
    QueueRouter,
    QueueTraffic,
    Simulator,
    fusion_score,
    peak_cached_fraction,
    rank_and_split,
    user_feedback,
)
from carl.env.router import ProbabilisticRouter, saturated_throughput

from conftest import small_config


# -- fusion and ranking -------------------------------------------------------


def test_fusion_examples():
    assert fusion_score(np.ones(5), np.ones(5)) == 5.0
    x = np.array([0.1, 0.7, 0.3, 0.9, 0.2])
    for k in range(5):
        assert fusion_score(x, np.eye(5)[k]) == x[k]
    assert fusion_score(x, np.zeros(5), "multiplicative", 1e-6) == 1.0
    with pytest.raises(ValueError):
        fusion_score(np.ones(4), np.ones(5))


def test_fusion_is_monotone_in_scores():
    rng = np.random.default_rng(0)
    for form in ("linear", "multiplicative"):
        for _ in range(50):
            x = rng.random(5)
            a = rng.uniform(0, 3, 5)
            y = x.copy()
            y[rng.integers(5)] += rng.random()
            assert fusion_score(y, a, form) >= fusion_score(x, a, form)


def test_rank_and_split_examples():
    ids = np.array([10, 11, 12])
    shown, cached = rank_and_split(ids, np.array([[3.0], [1.0], [2.0]]), np.array([1.0]), L=3, K=1)
    assert ids[shown].tolist() == [10] and ids[cached].tolist() == [12, 11]
    # all-zero action: every score ties, smallest ids win
    ids = np.array([7, 3, 9, 1, 5])
    shown, cached = rank_and_split(ids, np.random.default_rng(0).random((5, 5)), np.zeros(5), L=4, K=2)
    assert ids[shown].tolist() == [1, 3] and ids[cached].tolist() == [5, 7]
    shown, cached = rank_and_split(np.arange(50), np.random.default_rng(1).random((50, 5)),
                                   np.ones(5), L=40, K=8)
    assert len(shown) == 8 and len(cached) == 32
    with pytest.raises(CandidateShortage):
        rank_and_split(np.arange(39), np.zeros((39, 5)), np.ones(5), L=40, K=8)


# -- load profile and routers -------------------------------------------------


def test_qps_positive_and_peaked():
    prof = QpsProfile(QpsConfig())
    t = np.linspace(0, 3 * 86400, 5000)
    q = prof.mean_qps(t)
    assert np.all(q > 0)
    rng = np.random.default_rng(0)
    assert all(prof.sample_qps(float(s), rng) > 0 for s in t[:200])
    assert prof.peak_qps() == pytest.approx(q.max(), rel=1e-3)


def test_router_degenerate_limits():
    assert set(QueueRouter(0, 1.0).route(50)) == {CacheState.CACHED}
    assert set(QueueRouter(math.inf, 1.0).route(50)) == {CacheState.REALTIME}
    r = QueueRouter(math.inf, 1.0)
    assert r.route_count(50) == (50, 0)


def test_router_conservation_every_tick():
    rng = np.random.default_rng(0)
    r = QueueRouter(20, 0.3)
    for tick in range(2000):
        out = r.route(int(rng.poisson(8)))
        if tick % 7 == 0:
            r.force_realtime()
        r.complete(1.0, rng)
        assert r.queue_len >= 0
        assert r.emitted_realtime == r.completed + r.queue_len
        assert len(out) == 0 or all(isinstance(c, CacheState) for c in out)


def test_route_depends_only_on_queue_length():
    a, b = QueueRouter(5, 0.5, queue_len=4), QueueRouter(5, 99.0, queue_len=4)
    assert a.route(3) == b.route(3) == [CacheState.REALTIME, CacheState.CACHED, CacheState.CACHED]


def _cached_fraction_at(qps, limit=40, rate=0.5, ticks=3000, seed=0):
    rng = np.random.default_rng(seed)
    r = QueueRouter(limit, rate)
    rt = tot = 0
    for i in range(ticks):
        n = int(rng.poisson(qps))
        k, _ = r.route_count(n)
        if i > 200:
            rt += k
            tot += n
        r.complete(1.0, rng)
    return 1 - rt / tot


def test_cached_fraction_increases_with_qps():
    fr = [_cached_fraction_at(q) for q in (2, 10, 20, 30, 40, 60)]
    assert fr[0] == 0.0
    assert all(b > a for a, b in zip(fr[1:], fr[2:]))


def test_simulated_cached_share_tracks_load_under_queue_router():
    cfg = small_config(**{"router.kind": "queue", "users.n_users": 60})
    sim = Simulator(cfg, seed=5)
    sim.run(lambda s: np.ones(5), until=86400.0)
    frac = sim.stats.cached_fraction()
    centres = (np.arange(len(frac)) + 0.5) / len(frac)
    qps = QpsProfile(cfg.qps).shape(centres)
    ok = ~np.isnan(frac)
    # rank correlation between load and cached share across the day
    rq = np.argsort(np.argsort(qps[ok]))
    rf = np.argsort(np.argsort(frac[ok]))
    assert np.corrcoef(rq, rf)[0, 1] > 0.8


def test_calibrated_default_peak_share():
    frac = peak_cached_fraction(QpsConfig(), RouterConfig(), days=2)
    assert 0.35 <= frac <= 0.45


def test_probabilistic_router_uses_fluid_capacity():
    qcfg, rcfg = QpsConfig(), RouterConfig()
    pr = ProbabilisticRouter.from_config(qcfg, rcfg)
    assert pr.capacity == pytest.approx(rcfg.queue_limit * (1 - math.exp(-rcfg.service_rate)))
    assert pr.capacity == saturated_throughput(rcfg)
    t = np.linspace(0, 86400, 100)
    p = pr.p_cached(t)
    assert np.all((p >= 0) & (p <= 1))
    assert pr.p_cached(float(QpsProfile(qcfg).peak_tod() * 86400)) == pytest.approx(np.max(p), abs=0.01)


def test_queue_traffic_telemetry_rows():
    tr = QueueTraffic.from_config(QpsConfig(), RouterConfig(), record_telemetry=True)
    rng = np.random.default_rng(0)
    for t in np.arange(0.0, 50.0, 0.7):
        tr.decide(float(t), rng)
    assert len(tr.telemetry) == 49
    assert all(0 <= row.cached_fraction <= 1 for row in tr.telemetry)


# -- user feedback ----------------------------------------------------------


def _user_and_quality(cfg, seed=0):
    sim = Simulator(cfg, seed=seed, n_users=1)
    user = sim.users[0]
    q = sim.catalog.quality(user.latent_pref, np.arange(cfg.K))
    return user, q


def test_no_degradation_limit_is_identical():
    cfg = small_config(**{"feedback.degrade_watch": 1.0, "feedback.degrade_like": 1.0,
                          "feedback.degrade_follow": 1.0, "feedback.tau_stale": math.inf})
    user, q = _user_and_quality(cfg)
    rng = np.random.default_rng(0)
    for _ in range(100):
        noise = rng.standard_normal((cfg.K, 3))
        rt = user_feedback(user, q, CacheState.REALTIME, 0.0, cfg.users, cfg.feedback, noise)
        ca = user_feedback(user, q, CacheState.CACHED, rng.random() * 600, cfg.users, cfg.feedback, noise)
        assert rt == ca


def test_degradation_monotone_under_common_random_numbers():
    cfg = small_config()
    user, q = _user_and_quality(cfg)
    rng = np.random.default_rng(1)
    for _ in range(200):
        noise = rng.standard_normal((cfg.K, 3))
        rt = user_feedback(user, q, CacheState.REALTIME, 0.0, cfg.users, cfg.feedback, noise)
        ca = user_feedback(user, q, CacheState.CACHED, rng.random() * 900, cfg.users, cfg.feedback, noise)
        assert ca.watch <= rt.watch and ca.likes <= rt.likes and ca.follows <= rt.follows
        assert rt.watch >= 0 and ca.watch >= 0


def test_leave_probability_in_unit_interval():
    cfg = small_config()
    user, _ = _user_and_quality(cfg)
    for fatigue in (0.0, 1.0, 50.0):
        for rel in (-100.0, 0.0, 1.0, 100.0):
            user.fatigue = fatigue
            assert 0.0 <= user.leave_probability(cfg.users, rel) <= 1.0


# -- simulator ----------------------------------------------------------------


def test_first_request_is_realtime_even_when_cache_ordered(small_cfg):
    sim = Simulator(small_cfg, seed=0)
    rec = sim.step_user(0, 10.0, lambda s: np.ones(5), decision=CacheState.CACHED)
    assert rec.cache_state == CacheState.REALTIME and rec.forced and rec.action is not None


def test_two_cached_requests_pop_fifo(small_cfg):
    sim = Simulator(small_cfg, seed=0)
    pol = lambda s: np.ones(5)
    sim.step_user(0, 10.0, pol)
    user = sim.users[0]
    before = user.cache.ids.copy()
    assert len(before) == small_cfg.L - small_cfg.K
    r1 = sim.step_user(0, 20.0, pol, decision=CacheState.CACHED)
    r2 = sim.step_user(0, 30.0, pol, decision=CacheState.CACHED)
    assert r1.cache_state == r2.cache_state == CacheState.CACHED
    assert r1.action is None and r2.action is None
    assert np.array_equal(user.cache.ids, before[2 * small_cfg.K:])
    assert np.all(user.shown[before[:2 * small_cfg.K]])


def test_transitions_are_well_formed(small_cfg):
    sim = Simulator(small_cfg, seed=2)
    ts = sim.run(lambda s: np.full(5, 1.5), until=15 * 3600.0)
    assert len(ts) > 100
    lay = small_cfg.layout
    assert all(validate_transition(t, lay) is None for t in ts)
    assert {t.cache_state for t in ts} == {CacheState.REALTIME, CacheState.CACHED}
    assert all(len(t.state) == small_cfg.state_dim for t in ts)


def test_no_item_repeats_within_a_session():
    cfg = small_config(**{"users.n_users": 10})
    sim = Simulator(cfg, seed=4)
    seen: dict = {}
    shown_log = []
    orig = sim.step_user

    def spy(uid, t, policy, out=None, decision=None):
        user = sim.users[uid]
        prev = None if user.shown is None or not user.in_session else user.shown.copy()
        rec = orig(uid, t, policy, out, decision)
        now = sim.users[uid].shown
        if now is not None:
            new = np.flatnonzero(now & ~prev) if prev is not None else np.flatnonzero(now)
            shown_log.append((uid, rec.session_id, new))
        return rec

    sim.step_user = spy
    sim.run(lambda s: np.ones(5), until=12 * 3600.0)
    for uid, sid, new in shown_log:
        key = (uid, sid)
        got = seen.setdefault(key, set())
        assert len(new) == cfg.K, "each request shows K previously unseen items"
        assert got.isdisjoint(new.tolist())
        got.update(new.tolist())


def _log_bytes(cfg, seed):
    sim = Simulator(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    ts = sim.run(lambda s: rng.uniform(0, 3, 5), until=8 * 3600.0)
    buf = io.StringIO()
    write_transition_log(buf, ts)
    return buf.getvalue()


def test_simulator_is_deterministic(small_cfg):
    a = _log_bytes(small_cfg, 11)
    assert a == _log_bytes(small_cfg, 11)
    assert a != _log_bytes(small_cfg, 12)
    q = small_cfg.replace(**{"router.kind": "queue"})
    assert _log_bytes(q, 11) == _log_bytes(q, 11)


def test_forced_flag_counts(small_cfg):
    sim = Simulator(small_cfg, seed=3, keep_records=True)
    sim.run(lambda s: np.ones(5), until=15 * 3600.0)
    forced = [r for r in sim.records if r.forced]
    assert sim.stats.n_forced == len(forced) > 0
    assert all(r.cache_state == CacheState.REALTIME for r in forced)


def test_one_day_feedback_ratios():
    cfg = small_config(**{"users.n_users": 400, "users.n_items": 5000})
    sim = Simulator(cfg, seed=21)
    sim.run(lambda s: np.ones(5), until=86400.0)
    st = sim.stats
    assert 0.80 <= st.ratio("watch") <= 0.90
    assert abs(st.ratio("likes") - 0.68) < 0.07
    assert abs(st.ratio("follows") - 0.54) < 0.07
