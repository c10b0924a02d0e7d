"""Intelligent Driver Model baseline and trajectory calibration.

The IDM acceleration uses the standard exponent-4 free term and the
quadratic interaction term built from the dynamic desired gap s*. Calibration
simulates the follower against a recorded leader and minimizes the sum of
squared log-gap errors SSE(ln g) with multistart Nelder-Mead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "IdmParams",
    "NAPOLI_CALIBRATED",
    "CALIBRATION_BOUNDS",
    "idm_accel",
    "equilibrium_gap",
    "simulate_follower",
    "sse_ln_gap",
    "calibrate",
]


@dataclass(frozen=True)
class IdmParams:
    v_des: float = 15.0
    T: float = 1.5
    g_min: float = 2.0
    a_max: float = 2.0
    b_comf: float = 2.0

    def __post_init__(self):
        for name, val in asdict(self).items():
            if val <= 0.0:
                raise ValueError(f"{name} must be positive")


# Reference parameter set calibrated to the Napoli platoon recordings.
NAPOLI_CALIBRATED = IdmParams(v_des=33.73, T=0.83, g_min=4.90, a_max=4.32, b_comf=2.34)

# Calibration search box, ordered (v_des, T, g_min, a_max, b_comf).
CALIBRATION_BOUNDS = ((10.0, 50.0), (0.3, 3.0), (0.5, 10.0), (0.5, 6.0), (0.5, 6.0))

# Crashed calibration candidates get this objective penalty.
_CRASH_PENALTY = 1e6


def idm_accel(v: float, v_l: float, g: float, p: IdmParams) -> float:
    """Raw IDM acceleration (unclamped; may exceed the RL action range)."""
    if g <= 0.0:
        raise ValueError(f"gap must be positive, got {g}")
    s_star = p.g_min + max(0.0, v * p.T + v * (v - v_l) / (2.0 * math.sqrt(p.a_max * p.b_comf)))
    return p.a_max * (1.0 - (v / p.v_des) ** 4 - (s_star / g) ** 2)


def equilibrium_gap(v: float, p: IdmParams) -> float:
    """Steady-state gap at common speed v: s*(v,v) / sqrt(1 - (v/v_des)^4)."""
    if v >= p.v_des:
        raise ValueError("no finite equilibrium at or above the desired speed")
    s_star = p.g_min + max(0.0, v * p.T)
    return s_star / math.sqrt(1.0 - (v / p.v_des) ** 4)


def simulate_follower(
    leader_speeds: np.ndarray,
    g0: float,
    v0: float,
    p: IdmParams,
    dt: float = 0.1,
    clamp: tuple[float, float] | None = None,
    return_speeds: bool = False,
):
    """Simulate an IDM follower against a recorded leader speed series.

    Returns the gap series aligned with ``leader_speeds`` (gaps[0] = g0),
    or (gaps, speeds) when ``return_speeds`` is set. The leader position is
    integrated by the trapezoidal rule; the follower uses the ballistic
    scheme. ``clamp`` optionally restricts the commanded acceleration (e.g.
    to the RL action range for fair comparisons). Returns early (shorter
    arrays) on collision.
    """
    u = np.asarray(leader_speeds, dtype=float)
    n = len(u)
    gaps = np.empty(n)
    speeds = np.empty(n)
    gaps[0] = g0
    speeds[0] = v0
    g, v = float(g0), float(v0)
    rows = n
    for i in range(n - 1):
        if g <= 0.0:
            rows = i + 1
            break
        a = idm_accel(v, float(u[i]), g, p)
        if clamp is not None:
            a = min(max(a, clamp[0]), clamp[1])
        v_new = v + a * dt
        if v_new < 0.0:
            dx = v * v / (2.0 * abs(a)) if a != 0.0 else 0.0
            v_new = 0.0
        else:
            dx = 0.5 * (v + v_new) * dt
        g = g + 0.5 * (u[i] + u[i + 1]) * dt - dx
        v = v_new
        gaps[i + 1] = g
        speeds[i + 1] = v
    if return_speeds:
        return gaps[:rows], speeds[:rows]
    return gaps[:rows]


def sse_ln_gap(sim_gaps: np.ndarray, ref_gaps: np.ndarray) -> float:
    """Sum of squared log-gap errors; the calibration objective."""
    sim = np.asarray(sim_gaps, dtype=float)
    ref = np.asarray(ref_gaps, dtype=float)
    if sim.shape != ref.shape:
        raise ValueError("gap series lengths differ")
    if np.any(sim <= 0.0) or np.any(ref <= 0.0):
        raise ValueError("gaps must be positive for the log objective")
    d = np.log(sim) - np.log(ref)
    return float(d @ d)


def _objective(
    x: np.ndarray,
    leader_speeds: np.ndarray,
    ref_gaps: np.ndarray,
    v0: float,
    dt: float,
    clamp,
) -> float:
    try:
        p = IdmParams(v_des=x[0], T=x[1], g_min=x[2], a_max=x[3], b_comf=x[4])
    except ValueError:
        return _CRASH_PENALTY
    gaps = simulate_follower(leader_speeds, float(ref_gaps[0]), v0, p, dt, clamp)
    if len(gaps) < len(ref_gaps) or np.any(gaps <= 0.0):
        return _CRASH_PENALTY  # crashed candidate: soft rejection
    d = np.log(gaps) - np.log(ref_gaps)
    return float(d @ d)


def calibrate(
    leader_speeds: np.ndarray,
    ref_gaps: np.ndarray,
    v0: float,
    init: IdmParams | None = None,
    bounds=CALIBRATION_BOUNDS,
    restarts: int = 10,
    seed: int = 0,
    dt: float = 0.1,
    clamp: tuple[float, float] | None = None,
) -> tuple[IdmParams, float]:
    """Fit IDM parameters to a recorded leader/follower pair.

    Runs Nelder-Mead from ``init`` plus ``restarts`` random points inside
    ``bounds``, then polishes the best candidate. Returns (params, SSE).
    Deterministic for a fixed seed.
    """
    u = np.asarray(leader_speeds, dtype=float)
    ref = np.asarray(ref_gaps, dtype=float)
    if len(u) != len(ref):
        raise ValueError("leader and gap series lengths differ")
    if np.any(ref <= 0.0):
        raise ValueError("reference gaps must be positive")
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    starts = []
    if init is not None:
        starts.append(np.array([init.v_des, init.T, init.g_min, init.a_max, init.b_comf]))
    starts.extend(lo + rng.uniform(size=(restarts, len(bounds))) * (hi - lo))

    args = (u, ref, float(v0), dt, clamp)
    best_x, best_f = None, np.inf
    for x0 in starts:
        res = minimize(
            _objective, x0, args=args, method="Nelder-Mead",
            options={"maxiter": 4000, "xatol": 1e-8, "fatol": 1e-12, "adaptive": True},
        )
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    # polish from the incumbent; cheap and tightens the basin
    res = minimize(
        _objective, best_x, args=args, method="Nelder-Mead",
        options={"maxiter": 8000, "xatol": 1e-10, "fatol": 1e-14, "adaptive": True},
    )
    if res.fun < best_f:
        best_x, best_f = res.x, float(res.fun)
    p = IdmParams(
        v_des=float(best_x[0]), T=float(best_x[1]), g_min=float(best_x[2]),
        a_max=float(best_x[3]), b_comf=float(best_x[4]),
    )
    return p, best_f
