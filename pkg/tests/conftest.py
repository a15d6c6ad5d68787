import numpy as np
import pytest

from carl.config import RunConfig
from carl.core import CacheState, Transition


def small_config(**changes) -> RunConfig:
    """A config small enough for sub-second simulator runs."""
    base = {
        "users.n_users": 30,
        "users.n_items": 1500,
        "experiment.train_rounds": 3,
        "experiment.round_hours": 2.0,
        "experiment.updates_per_round": 20,
        "experiment.eval_users": 30,
        "experiment.eval_days": 0.25,
        "experiment.cem_population": 4,
        "experiment.cem_generations": 2,
        "experiment.cem_eval_hours": 1.0,
        "experiment.cem_eval_users": 20,
        "learner.actor_hidden": (16,),
        "learner.critic_hidden": (16,),
        "learner.batch_size": 32,
    }
    base.update(changes)
    return RunConfig().replace(**base)


@pytest.fixture
def small_cfg():
    return small_config()


def make_transition(rng, dim=20, n_a=5, cached=False, done=False, reward=None, t=0.0):
    s = rng.random(dim) * 0.9
    s2 = rng.random(dim) * 0.9
    c = CacheState.CACHED if cached else CacheState.REALTIME
    a = None if cached else rng.uniform(0.0, 3.0, n_a)
    r = float(rng.random() * 10) if reward is None else reward
    return Transition(s, a, r, c, s2, CacheState(int(rng.integers(2))), done, t)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
