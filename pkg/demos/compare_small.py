"""
Comparing learners on a small configuration
===========================================

Trains every method briefly on a reduced simulator, evaluates the frozen
policies on common users and writes the charts.  The full default comparison
is the ``compare`` command of ``python -m carl``.
"""

from pathlib import Path

import numpy as np

from carl.config import RunConfig
from carl.harness import run_experiment
from carl.harness.plots import emit_plots

cfg = RunConfig().replace(**{
    "users.n_users": 100,
    "experiment.train_rounds": 4,
    "experiment.round_hours": 6.0,
    "experiment.updates_per_round": 100,
    "experiment.eval_users": 100,
    "experiment.eval_days": 1.0,
    "experiment.cem_generations": 3,
})

report = run_experiment(cfg, seeds=(0,), progress=lambda m, s, ev, res: print(
    f"{m:8s} session watch {ev.session_watch:7.1f}  critic loss {res.smoothed_loss:.4g}"))
print(report.to_csv())
for flag in report.ordering_flags() + report.loss_flags():
    print("flag:", flag)

# value curves of the cache-aware learner, by hour of day
el = report.runs[("CARL-EL", 0)]
print("hours where Q0 > Q1:", int(np.sum(el.q0_curve > el.q1_curve)), "of", len(el.q0_curve))

out = Path("demo_plots")
for p in emit_plots(report, out):
    print("wrote", p)
