"""Replay, session collection, experiments, plots and the command line."""
from .experiment import (
    DIAG_COLUMNS,
    METHODS,
    Evaluation,
    ExperimentReport,
    TrainResult,
    diagnostics_csv,
    evaluate,
    relative_improvement,
    run_experiment,
    train_agent,
)
from .replay import ReplayBuffer
from .sessions import collect_sessions
from .tabular import TabularFit, fit_tabular, tabular_states, value_tables
