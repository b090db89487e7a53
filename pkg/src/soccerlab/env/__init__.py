"""Planar 2v2 soccer environment: physics, observations, traces."""

from . import trace
from .config import EnvConfig, desk_pitch
from .sim import (
    ACTION_DIM,
    CHANNEL_NAMES,
    N_CHANNELS,
    N_PLAYERS,
    OBS_DIM,
    TEAM_OF,
    TEAMMATE_OF,
    EnvState,
    StepResult,
    WorldView,
    goal_centers,
    mirror_actions,
    mirror_state,
    observe,
    observe_view,
    probe_reset,
    projected_speed,
    reset,
    shaping_rewards,
    step,
    throw_in,
    transform_view,
    world_view,
)

__all__ = [
    "ACTION_DIM",
    "CHANNEL_NAMES",
    "EnvConfig",
    "EnvState",
    "N_CHANNELS",
    "N_PLAYERS",
    "OBS_DIM",
    "StepResult",
    "TEAM_OF",
    "TEAMMATE_OF",
    "WorldView",
    "desk_pitch",
    "goal_centers",
    "mirror_actions",
    "mirror_state",
    "observe",
    "observe_view",
    "probe_reset",
    "projected_speed",
    "reset",
    "shaping_rewards",
    "step",
    "throw_in",
    "trace",
    "transform_view",
    "world_view",
]
