"""Reward functions for the free-driving and car-following policies.

Two piecewise rewards drive the two policies: a speed/jerk reward for free
driving and a safety/gap/jerk reward for following. The gap term is a
normalized Gaussian around the speed-dependent optimal gap that transitions,
at a slope-matched knot g*, into a straight line reaching zero at g_lim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

__all__ = [
    "AgentParams",
    "RewardBreakdown",
    "reward_free",
    "reward_follow",
    "kinematic_deceleration",
    "solve_gap_knot",
    "gap_reward",
    "CRASH_REWARD",
]

# Total reward assigned at a crash step (gap <= 0); the episode terminates.
CRASH_REWARD = -1.0


@dataclass(frozen=True)
class AgentParams:
    """Driving-style parameter set shared by rewards and the IDM baseline.

    Units: accelerations m/s^2, jerk m/s^3, speeds m/s, gaps m, times s.
    """

    a_min: float = -9.0
    a_max: float = 2.0
    b_comf: float = 2.0
    j_comf: float = 2.0
    v_des: float = 15.0
    T: float = 1.5
    g_min: float = 2.0
    T_lim: float = 15.0
    w_gap: float = 0.5
    w_jerk: float = 0.004

    def __post_init__(self):
        if not (self.a_min < 0.0 < self.a_max):
            raise ValueError("require a_min < 0 < a_max")
        for name in ("b_comf", "j_comf", "v_des", "g_min"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.T < self.T_lim):
            raise ValueError("require 0 < T < T_lim")
        if self.w_gap < 0.0 or self.w_jerk < 0.0:
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-step reward terms. Unused terms are zero (e.g. r_safe in free mode)."""

    r_speed: float = 0.0
    r_safe: float = 0.0
    r_gap: float = 0.0
    r_jerk: float = 0.0
    total: float = 0.0


def _check_finite(*values: float) -> None:
    for x in values:
        if not math.isfinite(x):
            raise ValueError(f"non-finite input: {x!r}")


def reward_free(v: float, jerk: float, p: AgentParams) -> RewardBreakdown:
    """Free-driving reward: speed term plus weighted jerk penalty.

    The speed term is v/v_des up to v_des and drops to 0 above it, which
    makes exceeding the desired speed strictly unattractive.
    """
    _check_finite(v, jerk)
    r_speed = v / p.v_des if v <= p.v_des else 0.0
    r_jerk = -((jerk / p.j_comf) ** 2)
    total = r_speed + p.w_jerk * r_jerk
    return RewardBreakdown(r_speed=r_speed, r_jerk=r_jerk, total=total)


def kinematic_deceleration(v: float, v_l: float, g: float) -> float:
    """Deceleration needed to avoid collision if the leader holds speed.

    b_kin = (v - v_l)^2 / g for v > v_l, else 0. Note the deliberately
    conservative form without the factor 2 of the usual stopping relation:
    the returned value is twice the constant deceleration that would stop
    exactly at the leader.
    """
    _check_finite(v, v_l, g)
    if g <= 0.0:
        raise ValueError(f"gap must be positive, got {g}")
    if v <= v_l:
        return 0.0
    dv = v - v_l
    return dv * dv / g


def _knot_residual(g: float, g_opt: float, g_var: float, g_lim: float) -> float:
    # f(g) = G'(g)(g_lim - g) + G(g) with G the normalized Gaussian; since
    # G > 0 this shares its root with 1 - (g - g_opt)(g_lim - g)/g_var^2.
    z = (g - g_opt) / g_var
    gauss = math.exp(-0.5 * z * z)
    return gauss * (1.0 - (g - g_opt) * (g_lim - g) / (g_var * g_var))


@lru_cache(maxsize=4096)
def solve_gap_knot(g_opt: float, g_var: float, g_lim: float) -> float:
    """Bisect for the knot g* where the descending line is tangent to the Gaussian.

    The line r(g) = G(g*) * (1 - (g - g*)/(g_lim - g*)) reaches 0 at g_lim;
    tangency means G'(g*)(g_lim - g*) + G(g*) = 0. The meaningful root lies
    between g_opt and the midpoint (g_opt + g_lim)/2, where the residual
    changes sign from + to -.
    """
    if g_lim <= g_opt:
        raise ValueError("require g_lim > g_opt")
    lo = g_opt
    hi = 0.5 * (g_opt + g_lim)
    f_lo = _knot_residual(lo, g_opt, g_var, g_lim)
    f_hi = _knot_residual(hi, g_opt, g_var, g_lim)
    if f_hi == 0.0:  # degenerate tangency exactly at the midpoint (v = 0 defaults)
        return hi
    if f_lo <= 0.0 or f_hi > 0.0:
        raise ArithmeticError(
            f"no sign change for knot bracket: f({lo})={f_lo}, f({hi})={f_hi}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = _knot_residual(mid, g_opt, g_var, g_lim)
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    g_star = 0.5 * (lo + hi)
    if abs(_knot_residual(g_star, g_opt, g_var, g_lim)) > 1e-10:
        raise ArithmeticError("knot bisection did not reach residual tolerance")
    return g_star


def gap_reward(g: float, v: float, p: AgentParams) -> float:
    """Gap term: normalized Gaussian around g_opt, tangent line to 0 at g_lim.

    Continuous and differentiable at the knot by construction; clamped at 0
    beyond g_lim so a far leader scores like free driving.
    """
    if g <= 0.0:
        raise ValueError(f"gap must be positive, got {g}")
    g_opt = v * p.T + p.g_min
    g_var = 0.5 * g_opt
    g_lim = v * p.T_lim + 2.0 * p.g_min
    g_star = solve_gap_knot(g_opt, g_var, g_lim)
    if g < g_star:
        z = (g - g_opt) / g_var
        return math.exp(-0.5 * z * z)
    z = (g_star - g_opt) / g_var
    peak = math.exp(-0.5 * z * z)
    value = peak * (1.0 - (g - g_star) / (g_lim - g_star))
    return max(value, 0.0)


def reward_follow(
    v: float, v_l: float, g: float, jerk: float, p: AgentParams
) -> RewardBreakdown:
    """Car-following reward: safety + weighted gap + weighted jerk terms.

    The safety term activates only when the kinematically needed
    deceleration exceeds the comfortable one, bounded to (-1, 0] by tanh.
    Callers must handle g <= 0 (crash) themselves; see CRASH_REWARD.
    """
    _check_finite(v, v_l, g, jerk)
    if g <= 0.0:
        raise ValueError(f"gap must be positive, got {g}")
    b_kin = kinematic_deceleration(v, v_l, g)
    if b_kin > p.b_comf:
        r_safe = -math.tanh((b_kin - p.b_comf) / (-p.a_min))
    else:
        r_safe = 0.0
    r_gap = gap_reward(g, v, p)
    r_jerk = -((jerk / p.j_comf) ** 2)
    total = r_safe + p.w_gap * r_gap + p.w_jerk * r_jerk
    return RewardBreakdown(r_safe=r_safe, r_gap=r_gap, r_jerk=r_jerk, total=total)


def crash_breakdown() -> RewardBreakdown:
    """Sentinel breakdown recorded at a crash step (total = -1, episode ends)."""
    return RewardBreakdown(r_safe=CRASH_REWARD, total=CRASH_REWARD)
