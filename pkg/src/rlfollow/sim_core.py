"""Point-mass longitudinal kinematics and episode stepping.

One leader (driven by an external speed series) plus N followers (driven by
controllers). Speed updates use the Euler step, positions the ballistic
(trapezoidal) rule with an exact within-step stop when speed reaches zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .rewards import AgentParams, crash_breakdown, reward_follow

__all__ = [
    "VEHICLE_LENGTH",
    "VehicleState",
    "SimConfig",
    "EpisodeTrace",
    "Controller",
    "step_vehicle",
    "gap",
    "run_episode",
]

# Fixed passenger-car length used to convert positions to bumper-to-bumper
# gaps in synthetic scenarios; real-data ingestion reads gaps directly.
VEHICLE_LENGTH = 5.0

A_MIN = -9.0
A_MAX = 2.0


@dataclass
class VehicleState:
    """Kinematic state of one vehicle: position, speed, current and previous acceleration."""

    x: float = 0.0
    v: float = 0.0
    a: float = 0.0
    a_prev: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    episode_steps: int = 500
    g_max: float = 200.0
    crash_mode: str = "terminate"  # "terminate" | "continue-clamped"

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.episode_steps <= 0:
            raise ValueError("episode_steps must be positive")
        if self.g_max <= 0.0:
            raise ValueError("g_max must be positive")
        if self.crash_mode not in ("terminate", "continue-clamped"):
            raise ValueError(f"unknown crash mode: {self.crash_mode}")


def step_vehicle(state: VehicleState, commanded_a: float, dt: float) -> VehicleState:
    """Advance one vehicle by one step under a constant commanded acceleration.

    Ballistic update: x advances by the average of old and new speed. If the
    speed would cross zero within the step, the vehicle stops exactly at
    v = 0 after travelling v^2 / (2|a|).
    """
    if not (math.isfinite(state.x) and math.isfinite(state.v) and math.isfinite(commanded_a)):
        raise ValueError("non-finite vehicle state or command")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    v_new = state.v + commanded_a * dt
    if v_new < 0.0:
        # stops within the step; remaining distance from v^2 = 2|a|s
        dx = state.v * state.v / (2.0 * abs(commanded_a)) if commanded_a != 0.0 else 0.0
        v_new = 0.0
    else:
        dx = 0.5 * (state.v + v_new) * dt
    return VehicleState(x=state.x + dx, v=v_new, a=commanded_a, a_prev=state.a)


def gap(leader: VehicleState, follower: VehicleState, length: float = VEHICLE_LENGTH) -> float:
    """Raw bumper-to-bumper gap; zero or negative means collision."""
    return leader.x - follower.x - length


class Controller(Protocol):
    """Behavioral contract shared by RL composite and IDM controllers.

    ``accel`` observes the scene (own state plus leader speed/gap, or None
    when leaderless) and returns a commanded acceleration in [a_min, a_max].
    """

    def reset(self) -> None: ...

    def accel(
        self, own: VehicleState, leader_speed: Optional[float], gap: Optional[float]
    ) -> float: ...


@dataclass
class EpisodeTrace:
    """Time series of one episode, one row per executed step.

    Row i holds the post-step state at time (i+1)*dt. Follower arrays are
    shaped (steps, n_followers); ``gaps[:, j]`` is follower j's gap to the
    vehicle directly ahead, and reward terms are the car-following reward
    evaluated on the post-step states.
    """

    dt: float
    t: np.ndarray
    leader_x: np.ndarray
    leader_v: np.ndarray
    leader_a: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    gaps: np.ndarray
    r_safe: np.ndarray
    r_gap: np.ndarray
    r_jerk: np.ndarray
    r_total: np.ndarray
    crashed: bool = False
    crash_step: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_followers(self) -> int:
        return self.x.shape[1]

    @property
    def steps(self) -> int:
        return self.x.shape[0]

    def accelerations(self) -> np.ndarray:
        """All vehicles' accelerations, columns ordered leader, f1, ..., fN."""
        return np.column_stack([self.leader_a, self.a])

    def jerks(self) -> np.ndarray:
        """Follower jerks by forward difference of commanded accelerations."""
        out = np.zeros_like(self.a)
        out[1:] = np.diff(self.a, axis=0) / self.dt
        return out


def run_episode(
    leader_speeds: Sequence[float],
    followers: Sequence[Controller],
    init_speeds: Sequence[float],
    init_gaps: Sequence[float],
    cfg: SimConfig,
    params: AgentParams | None = None,
) -> EpisodeTrace:
    """Run one episode of a leader speed series followed by a controller chain.

    Follower j follows vehicle j-1 (follower 0 follows the leader). The
    leader position is integrated from its speed series by the trapezoidal
    rule; its acceleration is reconstructed by forward difference. Each
    controller is queried once per step with its own scene.

    ``leader_speeds`` needs episode_steps + 1 samples; a series of exactly
    episode_steps is padded by holding the last value.
    """
    if len(followers) < 1:
        raise ValueError("need at least one follower")
    if len(init_speeds) != len(followers) or len(init_gaps) != len(followers):
        raise ValueError("init arrays must match the number of followers")
    if any(g0 <= 0.0 for g0 in init_gaps):
        raise ValueError("all initial gaps must be positive")
    u = np.asarray(leader_speeds, dtype=float)
    if u.ndim != 1 or len(u) < cfg.episode_steps:
        raise ValueError("leader speed series shorter than the episode")
    if np.any(~np.isfinite(u)) or np.any(u < 0.0):
        raise ValueError("leader speeds must be finite and non-negative")
    if len(u) == cfg.episode_steps:
        u = np.append(u, u[-1])

    p = params if params is not None else AgentParams()
    n = len(followers)
    steps = cfg.episode_steps
    dt = cfg.dt

    # leader at x=0; each follower sits its init gap (plus car length) behind
    leader = VehicleState(x=0.0, v=float(u[0]))
    states = []
    x_back = 0.0
    for j in range(n):
        x_back -= init_gaps[j] + VEHICLE_LENGTH
        states.append(VehicleState(x=x_back, v=float(init_speeds[j])))
    for ctl in followers:
        ctl.reset()

    t_arr = np.empty(steps)
    lx = np.empty(steps)
    lv = np.empty(steps)
    la = np.empty(steps)
    fx = np.empty((steps, n))
    fv = np.empty((steps, n))
    fa = np.empty((steps, n))
    g_arr = np.empty((steps, n))
    rs = np.zeros((steps, n))
    rg = np.zeros((steps, n))
    rj = np.zeros((steps, n))
    rt = np.zeros((steps, n))

    crashed = False
    crash_step: Optional[int] = None
    rows = 0
    for i in range(steps):
        # query controllers on the pre-step scene
        ahead = [leader] + states[:-1]
        commands = []
        for j, ctl in enumerate(followers):
            g_raw = gap(ahead[j], states[j])
            commands.append(
                float(np.clip(ctl.accel(states[j], ahead[j].v, g_raw), A_MIN, A_MAX))
            )

        # advance the world
        leader = VehicleState(
            x=leader.x + 0.5 * (u[i] + u[i + 1]) * dt,
            v=float(u[i + 1]),
            a=(u[i + 1] - u[i]) / dt,
            a_prev=leader.a,
        )
        new_states = [step_vehicle(states[j], commands[j], dt) for j in range(n)]

        t_arr[rows] = (i + 1) * dt
        lx[rows], lv[rows], la[rows] = leader.x, leader.v, leader.a
        step_crash = False
        ahead_v = leader
        for j in range(n):
            s = new_states[j]
            g_new = gap(ahead_v, s)
            if g_new <= 0.0:
                step_crash = True
                if cfg.crash_mode == "continue-clamped":
                    # inelastic contact: pin to zero gap at the leader's speed
                    s = VehicleState(
                        x=ahead_v.x - VEHICLE_LENGTH, v=ahead_v.v, a=s.a, a_prev=s.a_prev
                    )
                    new_states[j] = s
                    g_new = 0.0
            fx[rows, j], fv[rows, j], fa[rows, j] = s.x, s.v, s.a
            g_arr[rows, j] = g_new
            jerk = 0.0 if i == 0 else (s.a - s.a_prev) / dt
            if g_new <= 0.0:
                bd = crash_breakdown()
            else:
                bd = reward_follow(s.v, ahead_v.v, g_new, jerk, p)
            rs[rows, j], rg[rows, j] = bd.r_safe, bd.r_gap
            rj[rows, j], rt[rows, j] = bd.r_jerk, bd.total
            ahead_v = s
        states = new_states
        rows += 1
        if step_crash:
            crashed = True
            if crash_step is None:
                crash_step = i
            if cfg.crash_mode == "terminate":
                break

    sl = slice(0, rows)
    return EpisodeTrace(
        dt=dt,
        t=t_arr[sl].copy(),
        leader_x=lx[sl].copy(),
        leader_v=lv[sl].copy(),
        leader_a=la[sl].copy(),
        x=fx[sl].copy(),
        v=fv[sl].copy(),
        a=fa[sl].copy(),
        gaps=g_arr[sl].copy(),
        r_safe=rs[sl].copy(),
        r_gap=rg[sl].copy(),
        r_jerk=rj[sl].copy(),
        r_total=rt[sl].copy(),
        crashed=crashed,
        crash_step=crash_step,
    )
