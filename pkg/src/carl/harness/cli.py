"""Command line: ``python -m carl <command> [--config FILE] [--seed N] ...``.

Exit codes: 0 success, 1 configuration or usage error, 2 verification failure.
Every command is deterministic given its arguments, config and seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from ..config import ConfigError, RunConfig, load_config
from ..core import clamp_action, write_transition_log
from ..env import DAY, Simulator
from ..env.qps import QpsProfile
from ..env.router import ProbabilisticRouter
from ..funcapprox import save_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2
ORACLE_TOL_IDENTITY, ORACLE_TOL_RECOVERY = 1e-10, 1e-12


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (unknown keys are errors)")
    p.add_argument("--seed", type=int, help="overrides the config seed")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="python -m carl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run the simulator and write a transition log")
    _common(p)
    p.add_argument("--hours", type=float, default=24.0)
    p.add_argument("--users", type=int)
    p.add_argument("--router", choices=("probabilistic", "queue"))
    p.add_argument("--action", help="constant fusion action, comma separated (default: uniform random)")
    p.add_argument("--out", type=Path, default=Path("transitions.tsv"))
    p.add_argument("--telemetry", type=Path, help="per-tick router CSV (queue router only)")

    p = sub.add_parser("train", help="train one learner, write diagnostics and a checkpoint")
    _common(p)
    p.add_argument("--method", default="CARL-EL", choices=("DDPG", "TD3", "CARL-DL", "CARL-EL"))
    p.add_argument("--out", type=Path, default=Path("train_out"))

    p = sub.add_parser("verify-oracle", help="check the eigen identities on random tabular models")
    _common(p)
    p.add_argument("--n-mdps", type=int, default=100)
    p.add_argument("--dump", type=Path, help="directory for CSV tables of the first model")

    p = sub.add_parser("compare", help="train and evaluate several methods over seeds")
    _common(p)
    p.add_argument("--methods", default="CEM,DDPG,TD3,CARL-DL,CARL-EL")
    p.add_argument("--seeds", default="0", help="comma separated seeds")
    p.add_argument("--out", type=Path, default=Path("compare_out"))

    p = sub.add_parser("plot", help="render SVG charts from a compare report")
    _common(p)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("plots"))

    p = sub.add_parser("config", help="print the effective config as JSON")
    _common(p)
    return ap


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad seed list {text!r}") from e


# -- commands ----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, args) -> int:
    sim = Simulator(cfg, n_users=args.users, router_kind=args.router,
                    record_telemetry=args.telemetry is not None)
    if args.action:
        try:
            a = clamp_action([float(x) for x in args.action.split(",")])
        except ValueError as e:
            raise ConfigError(f"bad --action {args.action!r}") from e
        if a.shape != (cfg.n_a,):
            raise ConfigError(f"--action needs {cfg.n_a} components")
        policy = lambda s: a
    else:
        rng = np.random.default_rng([cfg.seed, 7])
        policy = lambda s: rng.uniform(0.0, 3.0, cfg.n_a)
    ts = sim.run(policy, until=args.hours * 3600.0)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as f:
        write_transition_log(f, ts)
    if args.telemetry:
        with open(args.telemetry, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("time", "qps", "queue_len", "cached_fraction"))
            for row in sim.telemetry_rows():
                w.writerow([f"{row[0]:.1f}", f"{row[1]:.6g}", row[2], f"{row[3]:.6g}"])
    st = sim.stats
    print(f"requests {st.steps}  transitions {len(ts)}  sessions {len(st.sessions)}  forced {st.n_forced}")
    if st.n[:, 1].sum() and st.n[:, 0].sum():
        print(f"cached/real-time ratio  watch {st.ratio('watch'):.4f}  likes {st.ratio('likes'):.4f}  "
              f"follows {st.ratio('follows'):.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    from .experiment import diagnostics_csv, evaluate, train_agent

    res = train_agent(args.method, cfg, cfg.seed)
    ev = evaluate(cfg, res, cfg.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "diagnostics.csv").write_text(diagnostics_csv(res.diagnostics))
    save_checkpoint(args.out / "checkpoint.npz", res.agent.nets())
    summary = {"method": args.method, "seed": cfg.seed, "reward_scale": res.reward_scale,
               "smoothed_critic_loss": res.smoothed_loss, "round_losses": res.round_losses,
               "session_watch": ev.session_watch, "daily_watch": ev.daily_watch,
               "n_sessions": ev.n_sessions}
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{args.method} seed {cfg.seed}: critic loss {res.smoothed_loss:.6g}  "
          f"session watch {ev.session_watch:.2f}  daily watch {ev.daily_watch:.2f}")
    return EXIT_OK


def oracle_sweep(n: int, seed: int):
    """Residual rows ``(index, S, A, T, bellman, line1, line2, recovery)``."""
    from ..oracle import bellman_residual, eigen_residuals, exact_q, random_mdp, random_policy, verify_recovery

    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        S, A, T = int(rng.integers(1, 21)), int(rng.integers(1, 6)), int(rng.integers(1, 11))
        mdp = random_mdp(rng, S, A, T)
        pol = random_policy(rng, S, A, deterministic=bool(rng.integers(2)))
        Q0, Q1 = exact_q(mdp, pol)
        l1, l2 = eigen_residuals(mdp, pol)
        rows.append((i, S, A, T, bellman_residual(mdp, pol, Q0, Q1), l1, l2, verify_recovery(mdp, pol)))
    return rows


def cmd_verify_oracle(cfg: RunConfig, args) -> int:
    rows = oracle_sweep(args.n_mdps, cfg.seed)
    checks = [("recursion residual", 4, ORACLE_TOL_IDENTITY), ("difference identity", 5, ORACLE_TOL_IDENTITY),
              ("weighted recursion", 6, ORACLE_TOL_IDENTITY), ("recovery error", 7, ORACLE_TOL_RECOVERY)]
    ok = True
    print(f"{'check':<22}{'max':>12}{'tol':>10}  result")
    for name, col, tol in checks:
        worst = max((r[col] for r in rows), default=0.0)
        passed = worst < tol
        ok &= passed
        print(f"{name:<22}{worst:>12.3e}{tol:>10.0e}  {'PASS' if passed else 'FAIL'}")
    print(f"{len(rows)} models: {'PASS' if ok else 'FAIL'}")
    if args.dump:
        _dump_tables(args.dump, cfg.seed)
    return EXIT_OK if ok else EXIT_VERIFY


def _dump_tables(out: Path, seed: int) -> None:
    from ..oracle import exact_eigen, exact_q, random_mdp, random_policy

    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 5, 3, 4)
    pol = random_policy(rng, 5, 3)
    Q0, Q1 = exact_q(mdp, pol)
    La, Lb = exact_eigen(mdp, pol, (Q0, Q1))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "exact_tables.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("t", "s", "a", "q0", "q1", "lambda_a", "lambda_b"))
        for t in range(mdp.T):
            for s in range(mdp.S):
                for a in range(mdp.A):
                    w.writerow([t, s, a] + [repr(float(x)) for x in (Q0[t, s, a], Q1[t, s], La[t, s, a], Lb[t, s, a])])


def cmd_compare(cfg: RunConfig, args) -> int:
    from .experiment import METHODS, run_experiment

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    seeds = _int_list(args.seeds)

    def progress(m, s, ev, res):
        print(f"  {m:<8} seed {s}: session watch {ev.session_watch:.2f}  critic loss {res.smoothed_loss:.6g}")

    report = run_experiment(cfg, methods, seeds, progress=progress)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.csv").write_text(report.to_csv())
    (args.out / "runs.csv").write_text(report.runs_csv())
    (args.out / "report.json").write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    print(report.to_csv(), end="")
    for flag in report.ordering_flags() + report.loss_flags():
        print("FLAG", flag)
    return EXIT_OK


def cmd_plot(cfg: RunConfig, args) -> int:
    from .experiment import ExperimentReport
    from .plots import emit_plots

    try:
        report = ExperimentReport.from_dict(json.loads(args.report.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ConfigError(f"{args.report}: not a compare report ({e})") from e
    router = ProbabilisticRouter.from_config(cfg.qps, cfg.router)
    tod = np.arange(288) / 288
    qps = QpsProfile(cfg.qps).mean_qps(tod * DAY)
    for p in emit_plots(report, args.out, (tod, qps, router.p_cached(tod * DAY))):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_config(cfg: RunConfig, args) -> int:
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "verify-oracle": cmd_verify_oracle,
            "compare": cmd_compare, "plot": cmd_plot, "config": cmd_config}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
