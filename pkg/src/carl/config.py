"""Run configuration: nested dataclasses loaded from JSON with strict keys.

Every key accepted in a config file is a field below; anything else raises
:class:`ConfigError`.  Example::

    {
      "gamma": 0.9,
      "seed": 3,
      "router": {"kind": "queue"},
      "experiment": {"train_rounds": 4}
    }
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .core import StateLayout


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class QpsConfig:
    """Diurnal request-rate profile of the whole platform (requests/s)."""

    base_qps: float = 30.0
    peak_amplitude: float = 2.0
    peak_times: tuple = (0.54, 0.875)  # day fractions (13:00, 21:00)
    peak_width: float = 0.05
    trough_time: float = 0.18
    trough_depth: float = 0.6
    trough_width: float = 0.1
    noise_std: float = 0.05


@dataclass(frozen=True)
class RouterConfig:
    """``kind`` is ``"queue"`` (admission queue) or ``"probabilistic"``."""

    kind: str = "probabilistic"
    queue_limit: int = 128  # calibrate_queue_limit(target=0.44); served peak share ~0.40
    service_rate: float = 0.5  # completions/s of one in-flight computation
    tick: float = 1.0
    fluid_margin: float = 1.0  # scales the saturated queue throughput


@dataclass(frozen=True)
class UserConfig:
    n_users: int = 400
    n_items: int = 5000
    emb_dim: int = 8
    sessions_per_day: float = 3.0
    gap_mean: float = 7.0
    gap_min: float = 2.0
    gap_max: float = 600.0
    base_watch: float = 10.0  # seconds per shown item at neutral quality
    base_watch_sigma: float = 0.3
    watch_noise: float = 0.35
    quality_beta: float = 0.35
    affinity_scale: float = 0.05
    item_noise: float = 0.2
    head_loadings: tuple = (1.0, 0.7, 0.9, 0.5, 0.3)
    obs_noise: tuple = (0.06, 0.12, 0.09, 0.18, 0.25)
    pref_concentration: float = 0.3
    profile_noise: float = 0.05
    fatigue_step: float = 0.08
    leave_bias: float = -3.4
    leave_fatigue: float = 1.6
    leave_reward: float = 1.5
    like_rate: float = 0.04
    follow_rate: float = 0.006


@dataclass(frozen=True)
class FeedbackConfig:
    """Multipliers applied to cached recommendations, per feedback head."""

    degrade_watch: float = 0.85
    degrade_like: float = 0.68
    degrade_follow: float = 0.54
    tau_stale: float = 1800.0  # seconds; ``inf`` disables staleness decay


@dataclass(frozen=True)
class LearnerConfig:
    actor_hidden: tuple = (64, 64)
    critic_hidden: tuple = (128, 128)
    lr_critic: float = 1e-3
    lr_actor: float = 1e-4
    clip_norm: float = 5.0
    tau: float = 0.005
    batch_size: int = 128
    replay_capacity: int = 200_000
    explore_std: float = 0.3
    td3_target_noise: float = 0.2
    td3_noise_clip: float = 0.5
    td3_policy_delay: int = 2
    bucket_minutes: float = 10.0
    d_alpha: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    train_rounds: int = 12
    round_hours: float = 6.0
    updates_per_round: int = 400
    eval_days: float = 1.0
    eval_users: int = 400
    loss_smoothing: float = 0.3
    cem_population: int = 12
    cem_elite_frac: float = 0.25
    cem_generations: int = 6
    cem_eval_hours: float = 6.0
    cem_eval_users: int = 150
    cem_init_std: float = 0.8


@dataclass(frozen=True)
class RunConfig:
    gamma: float = 0.9
    L: int = 40
    K: int = 8
    n_a: int = 5
    n_candidates: int = 200
    seed: int = 0
    session_gap: float = 900.0
    cache_capacity: int | None = None  # default 4 * (L - K)
    cache_ttl: float | None = None  # default session_gap
    fusion: str = "linear"
    fusion_eps: float = 1e-6
    x_max: float = 1.0
    qps: QpsConfig = field(default_factory=QpsConfig)
    router: RouterConfig = field(default_factory=RouterConfig)
    users: UserConfig = field(default_factory=UserConfig)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0 < self.K < self.L:
            raise ConfigError("need 0 < K < L")
        if self.n_candidates < self.L:
            raise ConfigError("n_candidates must be at least L")
        if self.session_gap <= 0:
            raise ConfigError("session_gap must be positive")
        if self.fusion not in ("linear", "multiplicative"):
            raise ConfigError("fusion must be 'linear' or 'multiplicative'")
        if self.router.kind not in ("queue", "probabilistic"):
            raise ConfigError("router.kind must be 'queue' or 'probabilistic'")
        if len(self.users.head_loadings) != self.n_a or len(self.users.obs_noise) != self.n_a:
            raise ConfigError("users.head_loadings and users.obs_noise need n_a entries")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def layout(self) -> StateLayout:
        return StateLayout()

    @property
    def state_dim(self) -> int:
        return self.layout.dim

    @property
    def capacity(self) -> int:
        return 4 * (self.L - self.K) if self.cache_capacity is None else self.cache_capacity

    @property
    def ttl(self) -> float:
        return self.session_gap if self.cache_ttl is None else self.cache_ttl

    def replace(self, **changes) -> "RunConfig":
        """Copy with top-level or dotted (``"router.kind"``) overrides."""
        top: dict[str, Any] = {}
        nested: dict[str, dict[str, Any]] = {}
        for k, v in changes.items():
            if "." in k:
                sect, key = k.split(".", 1)
                nested.setdefault(sect, {})[key] = v
            else:
                top[k] = v
        for sect, kv in nested.items():
            top[sect] = dataclasses.replace(getattr(self, sect), **kv)
        return dataclasses.replace(self, **top)

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _from_plain(cls, d, "")


_SECTIONS = {
    "qps": QpsConfig,
    "router": RouterConfig,
    "users": UserConfig,
    "feedback": FeedbackConfig,
    "learner": LearnerConfig,
    "experiment": ExperimentConfig,
}


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(x) for x in obj]
    return obj


def _from_plain(cls, d, prefix):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for k, v in d.items():
        if cls is RunConfig and k in _SECTIONS:
            kwargs[k] = _from_plain(_SECTIONS[k], v, f"{k}.")
        elif isinstance(v, list):
            kwargs[k] = tuple(v)
        else:
            kwargs[k] = v
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:  # e.g. a string where a number belongs
        raise ConfigError(f"{prefix or 'config'}: {e}") from e


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            d = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return RunConfig.from_dict(d)


def dump_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
