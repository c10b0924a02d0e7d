"""Modular deep-RL car-following toolkit with IDM baseline and validation harness."""

__version__ = "0.1.0"

from .rewards import AgentParams, RewardBreakdown, reward_follow, reward_free
from .sim_core import EpisodeTrace, SimConfig, VehicleState, run_episode, step_vehicle
from .idm import IdmParams, equilibrium_gap, idm_accel

__all__ = [
    "__version__",
    "AgentParams",
    "RewardBreakdown",
    "reward_follow",
    "reward_free",
    "EpisodeTrace",
    "SimConfig",
    "VehicleState",
    "run_episode",
    "step_vehicle",
    "IdmParams",
    "equilibrium_gap",
    "idm_accel",
]
