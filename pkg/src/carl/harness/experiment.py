"""Train, evaluate and compare learners on the simulator.

Training proceeds in rounds: simulate ``round_hours`` with the current policy
plus Gaussian exploration, add the finished transitions to the replay, then
run ``updates_per_round`` minibatch updates.  Round 0 uses uniformly random
actions drawn from a seed shared by all methods, so every learner starts from
identical data.  Rewards are divided by the mean real-time reward of round 0.

Critic quality is measured prequentially: before training on a round's fresh
transitions, each learner's TD error on them is computed with its own
cache-conditional values (``Agent.td_errors``) and the mean square is smoothed
across rounds.

Evaluation runs the frozen deterministic policy on a fresh simulator whose
seed depends only on the run seed, so all methods face the same users and
the same random draws.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..algos import AGENTS, CacheRatioEstimator, cem_search
from ..config import RunConfig
from ..core import CacheState, TransitionBatch, clamp_action
from ..env import DAY, Simulator
from .replay import ReplayBuffer

METHODS = ("CEM", "DDPG", "TD3", "CARL-DL", "CARL-EL")
DIAG_COLUMNS = ("step", "critic_loss", "mean_q0", "mean_q1", "mean_lambda_a",
                "mean_reward_rt", "mean_reward_cached", "cached_fraction")
N_TOD = 24  # hourly buckets for value curves
EVAL_SEED_OFFSET = 1_000_003
CEM_SEED_OFFSET = 2_000_003


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class TrainResult:
    method: str
    agent: object
    estimator: CacheRatioEstimator
    reward_scale: float
    diagnostics: list = field(default_factory=list)  # rows of DIAG_COLUMNS
    round_losses: list = field(default_factory=list)  # raw prequential loss per round
    smoothed_loss: float = math.nan
    cem_action: np.ndarray | None = None

    def policy(self):
        if self.cem_action is not None:
            a = self.cem_action
            return lambda s: a
        return self.agent.policy()


def _scaled(batch: TransitionBatch, scale: float) -> TransitionBatch:
    return batch._replace(r=batch.r / scale)


def make_agent(method: str, cfg: RunConfig, seed: int, estimator: CacheRatioEstimator):
    layout = cfg.layout
    return AGENTS[method](cfg.state_dim, cfg.n_a, cfg.learner, cfg.gamma, seed=seed,
                          d0_fn=lambda s: estimator.d0_of_states(s, layout))


def train_agent(method: str, cfg: RunConfig, seed: int, log_every: int = 50) -> TrainResult:
    if method == "CEM":
        return train_cem(cfg, seed)
    env_seed, agent_seed, explore_seed, replay_seed, warm_seed = _seeds(seed, 5)
    ex, lc = cfg.experiment, cfg.learner
    sim = Simulator(cfg, seed=env_seed)
    est = CacheRatioEstimator(lc.bucket_minutes, lc.d_alpha)
    agent = make_agent(method, cfg, agent_seed, est)
    replay = ReplayBuffer(lc.replay_capacity, cfg.n_a, cfg.layout)
    explore_rng = np.random.default_rng(explore_seed)
    replay_rng = np.random.default_rng(replay_seed)
    warm_rng = np.random.default_rng(warm_seed)
    res = TrainResult(method, agent, est, 1.0)
    smoothed = math.nan
    for rnd in range(ex.train_rounds):
        if rnd == 0:
            policy = lambda s: warm_rng.uniform(0.0, 3.0, cfg.n_a)
        else:
            policy = agent.policy(lc.explore_std, explore_rng)
        fresh = sim.run(policy, until=(rnd + 1) * ex.round_hours * 3600.0)
        if not fresh:
            continue
        est.observe([t.sim_time for t in fresh], [int(t.cache_state) for t in fresh])
        if rnd == 0:
            rt = [t.reward for t in fresh if t.cache_state == CacheState.REALTIME]
            res.reward_scale = float(np.mean(rt)) if rt else 1.0
        else:
            batch = _scaled(TransitionBatch.from_transitions(fresh, cfg.n_a), res.reward_scale)
            loss = float(np.mean(agent.td_errors(batch) ** 2))
            res.round_losses.append(loss)
            a = ex.loss_smoothing
            smoothed = loss if math.isnan(smoothed) else (1 - a) * smoothed + a * loss
        replay.extend(fresh)
        for _ in range(ex.updates_per_round):
            batch = replay.sample(lc.batch_size, replay_rng)
            diag = agent.train_step(_scaled(batch, res.reward_scale))
            if agent.steps % log_every == 0:
                res.diagnostics.append(_diag_row(agent.steps, diag, batch, res.reward_scale))
    res.smoothed_loss = smoothed
    return res


def _diag_row(step: int, diag: dict, batch: TransitionBatch, scale: float) -> tuple:
    rt = batch.c == 0
    mean = lambda x: float(np.mean(x)) if len(x) else math.nan
    return (step, diag["critic_loss"], diag["mean_q0"] * scale, diag["mean_q1"] * scale,
            diag["mean_lambda_a"] * scale, mean(batch.r[rt]), mean(batch.r[~rt]),
            float(np.mean(~rt)))


def session_watch_objective(cfg: RunConfig, seed: int, hours: float, users: int):
    """Mean finished-session watch time of a constant action (common random numbers)."""
    def objective(a) -> float:
        sim = Simulator(cfg, seed=seed, n_users=users)
        a = clamp_action(a)
        sim.run(lambda s: a, until=hours * 3600.0)
        return float(np.mean([x[3] for x in sim.stats.sessions])) if sim.stats.sessions else 0.0
    return objective


def train_cem(cfg: RunConfig, seed: int) -> TrainResult:
    ex = cfg.experiment
    env_seed, cem_seed = _seeds(seed + CEM_SEED_OFFSET, 2)
    obj = session_watch_objective(cfg, env_seed, ex.cem_eval_hours, ex.cem_eval_users)
    out = cem_search(obj, cfg.n_a, ex.cem_population, ex.cem_elite_frac, ex.cem_generations,
                     init_std=ex.cem_init_std, rng=cem_seed)
    res = TrainResult("CEM", None, CacheRatioEstimator(cfg.learner.bucket_minutes, cfg.learner.d_alpha), 1.0)
    res.cem_action = out.mean
    return res


@dataclass
class Evaluation:
    session_watch: float
    daily_watch: float
    watch_ratio: float
    n_sessions: int
    q0_curve: np.ndarray | None = None
    q1_curve: np.ndarray | None = None
    v_gap_curve: np.ndarray | None = None  # V0 - V1 per bucket (CARL-EL only)


def evaluate(cfg: RunConfig, result: TrainResult, seed: int) -> Evaluation:
    ex = cfg.experiment
    sim = Simulator(cfg, seed=seed + EVAL_SEED_OFFSET, n_users=ex.eval_users, keep_records=True)
    sim.run(result.policy(), until=ex.eval_days * DAY)
    st = sim.stats
    sessions = [x[3] for x in st.sessions]
    ev = Evaluation(
        session_watch=float(np.mean(sessions)) if sessions else 0.0,
        daily_watch=float(sum(st.daily.values()) / (ex.eval_users * ex.eval_days)),
        watch_ratio=float(st.ratio()) if st.n[:, 1].sum() and st.n[:, 0].sum() else math.nan,
        n_sessions=len(sessions),
    )
    if result.agent is not None and sim.records:
        states = np.stack([r.state for r in sim.records])
        ev.q0_curve, ev.q1_curve, ev.v_gap_curve = value_curves(result, states, cfg)
    return ev


def value_curves(result: TrainResult, states: np.ndarray, cfg: RunConfig):
    """Mean ``Q0(s, mu(s))`` and ``Q1(s)`` per hour of day (reward units)."""
    agent, scale = result.agent, result.reward_scale
    q0, q1 = agent.q_curves(states)
    b = np.minimum((states[:, cfg.layout.time_index] * N_TOD).astype(int), N_TOD - 1)
    cnt = np.bincount(b, minlength=N_TOD)
    with np.errstate(invalid="ignore", divide="ignore"):
        c0 = np.bincount(b, q0, N_TOD) / cnt * scale
        c1 = np.bincount(b, q1, N_TOD) / cnt * scale
    gap = None
    if hasattr(agent, "v0"):
        a = agent.mu(states)
        g = agent.v0.online(states, a) - agent.v1.online(states)
        with np.errstate(invalid="ignore", divide="ignore"):
            gap = np.bincount(b, g, N_TOD) / cnt * scale
    return c0, c1, gap


# --------------------------------------------------------------------------
# comparison report


def relative_improvement(value: float, baseline: float) -> float:
    """Percent change over ``baseline``; exactly 0 when ``value == baseline``."""
    if value == baseline:
        return 0.0
    return 100.0 * (value - baseline) / baseline


@dataclass
class ExperimentReport:
    methods: list
    seeds: list
    runs: dict  # (method, seed) -> Evaluation
    losses: dict  # (method, seed) -> final smoothed critic loss
    diagnostics: dict = field(default_factory=dict)  # (method, seed) -> rows

    def metric(self, method: str, name: str) -> np.ndarray:
        return np.array([getattr(self.runs[(method, s)], name) for s in self.seeds], dtype=float)

    def improvement(self, method: str, name: str = "session_watch") -> np.ndarray:
        """Per-seed percent improvement over CEM (requires CEM in the run)."""
        base = self.metric("CEM", name)
        return np.array([relative_improvement(v, b) for v, b in zip(self.metric(method, name), base)])

    def summary_rows(self) -> list[tuple]:
        """One row per method: seeds, mean +- std of each metric."""
        rows = []
        for m in self.methods:
            row = [m, len(self.seeds)]
            for name in ("session_watch", "daily_watch", "watch_ratio"):
                v = self.metric(m, name)
                row += [float(np.mean(v)), float(np.std(v))]
            if "CEM" in self.methods:
                for name in ("session_watch", "daily_watch"):
                    v = self.improvement(m, name)
                    row += [float(np.mean(v)), float(np.std(v))]
            loss = np.array([self.losses[(m, s)] for s in self.seeds])
            row += [float(np.mean(loss)), float(np.std(loss))]
            rows.append(tuple(row))
        return rows

    def summary_header(self) -> tuple:
        h = ["method", "n_seeds", "session_watch_mean", "session_watch_std", "daily_watch_mean",
             "daily_watch_std", "watch_ratio_mean", "watch_ratio_std"]
        if "CEM" in self.methods:
            h += ["session_vs_cem_pct_mean", "session_vs_cem_pct_std",
                  "daily_vs_cem_pct_mean", "daily_vs_cem_pct_std"]
        return tuple(h + ["critic_loss_mean", "critic_loss_std"])

    def ordering_flags(self) -> list[str]:
        """Seeds where session watch breaks EL >= DL >= max(TD3, DDPG) >= CEM."""
        chain = [m for m in ("CARL-EL", "CARL-DL") if m in self.methods]
        base = [m for m in ("TD3", "DDPG") if m in self.methods]
        flags = []
        for s in self.seeds:
            w = {m: self.runs[(m, s)].session_watch for m in self.methods}
            levels = [[m] for m in chain] + ([base] if base else [])
            if "CEM" in self.methods:
                levels.append(["CEM"])
            for hi, lo in zip(levels, levels[1:]):
                if max(w[m] for m in hi) < max(w[m] for m in lo):
                    flags.append(f"seed {s}: {'/'.join(hi)} < {'/'.join(lo)}")
        return flags

    def ordering_holds(self, seed) -> bool:
        return not any(f.startswith(f"seed {seed}:") for f in self.ordering_flags())

    def loss_flags(self) -> list[str]:
        flags = []
        for s in self.seeds:
            l = {m: self.losses[(m, s)] for m in self.methods}
            if "CARL-EL" in l and "CARL-DL" in l and not l["CARL-EL"] <= l["CARL-DL"]:
                flags.append(f"seed {s}: loss CARL-EL > CARL-DL")
            for m in ("CARL-EL", "CARL-DL"):
                if m in l and "TD3" in l and not l[m] <= l["TD3"]:
                    flags.append(f"seed {s}: loss {m} > TD3")
        return flags

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.summary_header())
        for row in self.summary_rows():
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("method", "seed", "session_watch", "daily_watch", "watch_ratio", "n_sessions",
                    "critic_loss"))
        for m in self.methods:
            for s in self.seeds:
                e = self.runs[(m, s)]
                w.writerow([m, s] + [_fmt(x) for x in (e.session_watch, e.daily_watch, e.watch_ratio,
                                                       e.n_sessions, self.losses[(m, s)])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        def curve(x):
            return None if x is None else [None if math.isnan(v) else round(float(v), 9) for v in x]
        return {
            "methods": list(self.methods),
            "seeds": list(self.seeds),
            "runs": [
                {"method": m, "seed": s, "session_watch": e.session_watch,
                 "daily_watch": e.daily_watch,
                 "watch_ratio": None if math.isnan(e.watch_ratio) else e.watch_ratio,
                 "n_sessions": e.n_sessions,
                 "critic_loss": None if math.isnan(self.losses[(m, s)]) else self.losses[(m, s)],
                 "q0_curve": curve(e.q0_curve), "q1_curve": curve(e.q1_curve),
                 "v_gap_curve": curve(e.v_gap_curve)}
                for (m, s), e in sorted(self.runs.items(), key=lambda kv: (self.methods.index(kv[0][0]), kv[0][1]))
            ],
            "ordering_flags": self.ordering_flags(),
            "loss_flags": self.loss_flags(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        runs, losses = {}, {}
        arr = lambda x: None if x is None else np.array([math.nan if v is None else v for v in x])
        for r in d["runs"]:
            key = (r["method"], r["seed"])
            runs[key] = Evaluation(r["session_watch"], r["daily_watch"],
                                   math.nan if r["watch_ratio"] is None else r["watch_ratio"],
                                   r["n_sessions"], arr(r["q0_curve"]), arr(r["q1_curve"]),
                                   arr(r["v_gap_curve"]))
            losses[key] = math.nan if r["critic_loss"] is None else r["critic_loss"]
        return cls(list(d["methods"]), list(d["seeds"]), runs, losses)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer, str)):
        return str(x)
    return "nan" if math.isnan(x) else f"{x:.6g}"


def run_experiment(cfg: RunConfig, methods=METHODS, seeds=(0,), progress=None) -> ExperimentReport:
    """Train and evaluate every ``method`` x ``seed``; methods run in ``METHODS`` order."""
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    methods = [m for m in METHODS if m in methods]
    runs, losses, diags = {}, {}, {}
    for s in seeds:
        for m in methods:
            res = train_agent(m, cfg, s)
            runs[(m, s)] = evaluate(cfg, res, s)
            losses[(m, s)] = res.smoothed_loss
            diags[(m, s)] = res.diagnostics
            if progress is not None:
                progress(m, s, runs[(m, s)], res)
    return ExperimentReport(methods, list(seeds), runs, losses, diags)


def diagnostics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAG_COLUMNS)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()
