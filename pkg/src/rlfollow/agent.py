"""Observation construction, action mapping, and the min-arbitrated controller.

The free policy sees (v/v_des, normalized acceleration); the following
policy additionally sees the normalized speed difference and gap. Actor
outputs in [-1, 1] map onto [a_min, a_max] via min(|a_min| * a, a_max).
The composite controller takes the minimum of both policies' accelerations,
mirroring the free/interaction split of the IDM+.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import nn
from .idm import IdmParams, idm_accel
from .rewards import AgentParams
from .sim_core import VehicleState

__all__ = [
    "free_observation",
    "follow_observation",
    "invert_free_observation",
    "invert_follow_observation",
    "action_to_acceleration",
    "PolicyController",
    "CompositeController",
    "IdmController",
    "load_policy_controller",
    "load_composite_controller",
]

G_MAX_DEFAULT = 200.0


def free_observation(v: float, a: float, p: AgentParams) -> np.ndarray:
    """(v/v_des, (a - a_min)/(a_max - a_min))."""
    return np.array([v / p.v_des, (a - p.a_min) / (p.a_max - p.a_min)])


def follow_observation(
    v: float,
    a: float,
    v_l: Optional[float],
    g: Optional[float],
    p: AgentParams,
    g_max: float = G_MAX_DEFAULT,
) -> np.ndarray:
    """Free components plus ((v_l - v)/v_des, g/g_max).

    Leaderless scenes and gaps beyond g_max look identical: the gap
    component saturates at 1 and the speed difference reads 0, so a far
    leader is indistinguishable from no leader.
    """
    if v_l is None or g is None or g > g_max:
        dv_norm, g_norm = 0.0, 1.0
    else:
        dv_norm = (v_l - v) / p.v_des
        g_norm = g / g_max
    return np.array([v / p.v_des, (a - p.a_min) / (p.a_max - p.a_min), dv_norm, g_norm])


def invert_free_observation(obs: np.ndarray, p: AgentParams) -> tuple[float, float]:
    """Recover (v, a) from a free observation; inverse of free_observation."""
    v = obs[0] * p.v_des
    a = obs[1] * (p.a_max - p.a_min) + p.a_min
    return float(v), float(a)


def invert_follow_observation(
    obs: np.ndarray, p: AgentParams, g_max: float = G_MAX_DEFAULT
) -> tuple[float, float, float, float]:
    """Recover (v, a, v_l, g) from a follow observation on its invertible domain."""
    v, a = invert_free_observation(obs[:2], p)
    v_l = obs[2] * p.v_des + v
    g = obs[3] * g_max
    return v, a, float(v_l), float(g)


def action_to_acceleration(a_norm: float, p: AgentParams | None = None) -> float:
    """Map a normalized action in [-1, 1] onto [a_min, a_max].

    min(|a_min| * a_norm, a_max): linear with slope |a_min| until the
    positive branch saturates at a_max.
    """
    if p is None:
        p = AgentParams()
    return min(-p.a_min * a_norm, p.a_max)


class PolicyController:
    """One trained actor driving a vehicle; free or following flavor."""

    def __init__(
        self,
        actor: nn.Mlp,
        params: AgentParams,
        kind: str,
        g_max: float = G_MAX_DEFAULT,
        checkpoint_id: str = "",
    ):
        if kind not in ("free", "follow"):
            raise ValueError(f"unknown policy kind: {kind}")
        expected = 2 if kind == "free" else 4
        if actor.dims[0] != expected:
            raise ValueError(f"{kind} actor expects {expected} inputs, net has {actor.dims[0]}")
        self.actor = actor
        self.params = params
        self.kind = kind
        self.g_max = g_max
        self.checkpoint_id = checkpoint_id

    def reset(self) -> None:
        pass

    def accel(
        self, own: VehicleState, leader_speed: Optional[float], gap: Optional[float]
    ) -> float:
        if self.kind == "free":
            obs = free_observation(own.v, own.a, self.params)
        else:
            obs = follow_observation(own.v, own.a, leader_speed, gap, self.params, self.g_max)
        a_norm = float(nn.forward(self.actor, obs)[0])
        return action_to_acceleration(a_norm, self.params)


class CompositeController:
    """Min-arbitration of the free-driving and car-following policies."""

    def __init__(self, free: PolicyController, follow: PolicyController):
        if free.kind != "free" or follow.kind != "follow":
            raise ValueError("composite needs one free and one follow policy")
        self.free = free
        self.follow = follow

    def reset(self) -> None:
        self.free.reset()
        self.follow.reset()

    def accel(
        self, own: VehicleState, leader_speed: Optional[float], gap: Optional[float]
    ) -> float:
        return min(
            self.free.accel(own, leader_speed, gap),
            self.follow.accel(own, leader_speed, gap),
        )


class IdmController:
    """IDM baseline behind the shared controller interface.

    Output is clamped to the RL action range by default for fair
    comparisons; raw values remain available through idm_accel.
    """

    def __init__(self, params: IdmParams, clamp: tuple[float, float] | None = (-9.0, 2.0)):
        self.params = params
        self.clamp = clamp

    def reset(self) -> None:
        pass

    def accel(
        self, own: VehicleState, leader_speed: Optional[float], gap: Optional[float]
    ) -> float:
        if leader_speed is None or gap is None:
            a = self.params.a_max * (1.0 - (own.v / self.params.v_des) ** 4)
        else:
            a = idm_accel(own.v, leader_speed, gap, self.params)
        if self.clamp is not None:
            a = min(max(a, self.clamp[0]), self.clamp[1])
        return a


def _params_from_metadata(meta: dict) -> AgentParams:
    fields = (
        "a_min", "a_max", "b_comf", "j_comf", "v_des",
        "T", "g_min", "T_lim", "w_gap", "w_jerk",
    )
    agent = meta.get("agent_params", {})
    return AgentParams(**{k: agent[k] for k in fields if k in agent})


def load_policy_controller(path) -> PolicyController:
    """Build a controller from a checkpoint written by the trainer."""
    nets, meta, _ = nn.load_checkpoint(path)
    if "actor" not in nets:
        raise ValueError(f"checkpoint {path} has no actor net")
    kind = meta.get("policy")
    if kind not in ("free", "follow"):
        raise ValueError(f"checkpoint {path} does not name a policy kind")
    return PolicyController(
        nets["actor"],
        _params_from_metadata(meta),
        kind,
        g_max=meta.get("g_max", G_MAX_DEFAULT),
        checkpoint_id=nn.checkpoint_id(path),
    )


def load_composite_controller(free_path, follow_path) -> CompositeController:
    return CompositeController(
        load_policy_controller(free_path), load_policy_controller(follow_path)
    )
