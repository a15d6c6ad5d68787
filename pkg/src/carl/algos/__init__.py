"""Learners, losses and the eigen transforms."""
from .agents import AGENTS, DDPG, TD3, Agent, CarlDL, CarlEL
from .cem import CemResult, cem_search
from .eigen import eigen_immediate, recover_q
from .estimator import CacheRatioEstimator
from .losses import (
    LossResult,
    actor_objective_grad,
    carl_dl_loss,
    ddpg_critic_loss,
    eigen_td_loss,
    immediate_loss,
    twin_critic_loss,
)
from .nets import Critic, Trainable

__all__ = [
    "AGENTS", "DDPG", "TD3", "Agent", "CarlDL", "CarlEL", "CemResult", "cem_search",
    "eigen_immediate", "recover_q", "CacheRatioEstimator", "LossResult",
    "actor_objective_grad", "carl_dl_loss", "ddpg_critic_loss", "eigen_td_loss",
    "immediate_loss", "twin_critic_loss", "Critic", "Trainable",
]
