"""Seeded simulator: users, ranking, per-user result cache and traffic router."""
from .qps import DAY, ActivityClock, QpsProfile, time_of_day
from .ranking import CandidateShortage, fusion_score, rank_and_split
from .router import (
    ProbabilisticRouter,
    QueueRouter,
    QueueTraffic,
    calibrate_queue_limit,
    make_router,
    peak_cached_fraction,
)
from .simulator import RequestRecord, SimStats, Simulator
from .users import Feedback, ItemCatalog, SyntheticUser, make_user, user_feedback

__all__ = [
    "DAY", "ActivityClock", "QpsProfile", "time_of_day",
    "CandidateShortage", "fusion_score", "rank_and_split",
    "ProbabilisticRouter", "QueueRouter", "QueueTraffic", "calibrate_queue_limit",
    "make_router", "peak_cached_fraction",
    "RequestRecord", "SimStats", "Simulator",
    "Feedback", "ItemCatalog", "SyntheticUser", "make_user", "user_feedback",
]
