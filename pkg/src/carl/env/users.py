"""Synthetic users, item catalogue and the engagement model.

Per-head true quality of item ``j`` for user ``u``::

    q_jh = clip(0.5 + affinity_scale * <E_j, u> / sqrt(d) * loading_h
                + item_noise * xi_jh, 0, x_max)

The ranking stage only sees ``x_jh = q_jh + obs_noise_h * eta`` (clipped), and
heads differ in noise level, so the fusion weights matter.  A user's watch time
on an item grows with ``c_u . q_j`` where ``c_u`` is the user's private mix of
head preferences; a noisy copy of ``c_u`` is part of the observed profile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..config import FeedbackConfig, RunConfig, UserConfig
from ..core import CacheBuffer, CacheState


class ItemCatalog:
    def __init__(self, cfg: UserConfig, n_heads: int, x_max: float, rng):
        self.n_items = cfg.n_items
        self.emb = rng.standard_normal((cfg.n_items, cfg.emb_dim))
        self.xi = rng.standard_normal((cfg.n_items, n_heads))
        self.loadings = np.asarray(cfg.head_loadings, dtype=float)
        self.obs_noise = np.asarray(cfg.obs_noise, dtype=float)
        self.aff_scale = cfg.affinity_scale / math.sqrt(cfg.emb_dim)
        self.item_noise = cfg.item_noise
        self.x_max = x_max

        self._base = 0.5 + self.item_noise * self.xi

    def affinity(self, latent: np.ndarray) -> np.ndarray:
        """Scaled user-item affinity for the whole catalogue, shape ``(n_items,)``."""
        return (self.emb @ latent) * self.aff_scale

    def quality(self, latent: np.ndarray, ids: np.ndarray, affinity=None) -> np.ndarray:
        """True per-head quality, shape ``(len(ids), n_heads)``; deterministic.

        ``affinity`` is an optional precomputed :meth:`affinity` vector.
        """
        aff = (self.emb[ids] @ latent) * self.aff_scale if affinity is None else affinity[ids]
        q = self._base[ids]
        q += aff[:, None] * self.loadings
        return _clip(q, self.x_max)

    def predict(self, q: np.ndarray, rng) -> np.ndarray:
        """Noisy model scores ``x`` for true qualities ``q``."""
        x = rng.standard_normal(q.shape)
        x *= self.obs_noise
        x += q
        return _clip(x, self.x_max)


def _clip(x: np.ndarray, hi: float) -> np.ndarray:
    # in place; np.clip carries noticeable per-call overhead on small arrays
    np.maximum(x, 0.0, out=x)
    return np.minimum(x, hi, out=x)


@dataclass
class SyntheticUser:
    uid: int
    latent_pref: np.ndarray
    head_pref: np.ndarray
    base_watch: float
    profile: np.ndarray
    fatigue: float = 0.0
    ema_watch: float = 1.0
    session_id: int = -1
    session_start: float = 0.0
    session_requests: int = 0
    session_reward: float = 0.0
    last_request: float = -math.inf
    shown: np.ndarray | None = None  # per-session flags over item ids
    affinity: np.ndarray | None = None  # per-session cache of ItemCatalog.affinity
    cache: CacheBuffer | None = None
    pending: object = None
    in_session: bool = False

    def leave_probability(self, cfg: UserConfig, rel_reward: float) -> float:
        z = cfg.leave_bias + cfg.leave_fatigue * self.fatigue - cfg.leave_reward * (rel_reward - 1.0)
        return 1.0 / (1.0 + math.exp(-z))


def make_user(uid: int, cfg: RunConfig, rng) -> SyntheticUser:
    uc = cfg.users
    latent = rng.standard_normal(uc.emb_dim)
    head_pref = rng.dirichlet(np.full(cfg.n_a, uc.pref_concentration))
    base = uc.base_watch * math.exp(uc.base_watch_sigma * rng.standard_normal())
    noisy_pref = head_pref + uc.profile_noise * rng.standard_normal(cfg.n_a)
    profile = np.concatenate([noisy_pref, [math.log(base / uc.base_watch)]])
    return SyntheticUser(
        uid=uid,
        latent_pref=latent,
        head_pref=head_pref,
        base_watch=base,
        profile=profile,
        cache=CacheBuffer(cfg.capacity, cfg.n_a),
    )


class Feedback(NamedTuple):
    watch: float
    likes: float
    follows: float


def user_feedback(user: SyntheticUser, quality: np.ndarray, cache_state: CacheState,
                  staleness, ucfg: UserConfig, fcfg: FeedbackConfig, noise: np.ndarray) -> Feedback:
    """Engagement with the shown items.

    ``quality`` is ``(K, n_heads)``; ``staleness`` (seconds, scalar or ``(K,)``)
    only matters for cached serving; ``noise`` is ``(K, 3)`` standard normals
    driving watch, like and follow so callers can fix them across branches.
    The watch time is the RL reward and is never negative.
    """
    e = quality @ user.head_pref
    lift = np.maximum(1.0 + ucfg.quality_beta * (e - 0.5), 0.0)
    if cache_state == CacheState.CACHED:
        lift *= np.exp(-np.asarray(staleness, dtype=float) / fcfg.tau_stale)
        mult = (fcfg.degrade_watch, fcfg.degrade_like, fcfg.degrade_follow)
    else:
        mult = (1.0, 1.0, 1.0)
    s = ucfg.watch_noise
    # log-normal noise with unit mean; like/follow are expected counts, which
    # keeps those signals smooth and monotone
    z = noise * (s, 0.5, 0.5)
    z -= (0.5 * s * s, 0.125, 0.125)
    tot = lift @ np.exp(z)
    return Feedback(float(user.base_watch * mult[0] * tot[0]),
                    float(ucfg.like_rate * mult[1] * tot[1]),
                    float(ucfg.follow_rate * mult[2] * tot[2]))
