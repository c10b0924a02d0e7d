"""Validation scenarios and metrics: string stability, TTC, cross-comparison.

Five scenario families mirror the validation protocol: response to an
external leader speed profile, platoon string stability, real-trajectory
replay, driver-characteristic sweeps over the desired time gap, and the
IDM cross-comparison. Metrics run through identical code paths for every
controller type.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .idm import sse_ln_gap
from .rewards import AgentParams, CRASH_REWARD, reward_follow
from .sim_core import Controller, EpisodeTrace, SimConfig, run_episode
from .stochastic import LEADER_OU, child_rngs, generate_leader_profile

__all__ = [
    "MetricsReport",
    "TtcResult",
    "Trajectory",
    "IngestError",
    "ScenarioFailure",
    "external_profile",
    "scenario_external_profile",
    "scenario_platoon",
    "scenario_driver_characteristics",
    "run_ou_episodes",
    "compute_ttc",
    "compute_metrics",
    "evaluate_follow_reward",
    "cross_compare",
    "ingest_trajectory",
    "export_trajectory",
    "export_trace_csv",
]

# Comfort band for jerk exceedance counting, m/s^3.
JERK_COMFORT = 1.5

# TTC histogram: 0.5 s bins on [0, 20] s; larger values counted as overflow.
TTC_BIN_WIDTH = 0.5
TTC_RANGE = (0.0, 20.0)

EXTERNAL_PROFILE_VERSION = 1


class ScenarioFailure(RuntimeError):
    """A scenario ended in a state the protocol treats as failure (e.g. crash)."""


@dataclass
class ScenarioSpec:
    """Declarative scenario description, runnable via run_scenario.

    leader: "external-profile", "ou", or a trajectory CSV path.
    followers: ordered controller stack (>= 1).
    init: optional (speeds, gaps); scenario defaults apply when omitted.
    seed drives the OU leader and any randomized initial conditions.
    """

    leader: str
    followers: list
    init: Optional[tuple[Sequence[float], Sequence[float]]] = None
    steps: int = 1000
    seed: int = 0
    dt: float = 0.1
    params: AgentParams = field(default_factory=AgentParams)
    checkpoint_ids: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.followers) < 1:
            raise ValueError("scenario needs at least one follower")


def run_scenario(spec: ScenarioSpec) -> tuple[EpisodeTrace, MetricsReport]:
    """Resolve a ScenarioSpec's leader source and run the episode."""
    if spec.leader == "external-profile":
        u = external_profile(spec.dt)
    elif spec.leader == "ou":
        rngs = child_rngs(spec.seed, "leader", "init")
        v0 = float(rngs["init"].uniform(0.0, spec.params.v_des))
        u = generate_leader_profile(LEADER_OU, spec.steps + 1, v0, rngs["leader"])
    else:
        traj = ingest_trajectory(spec.leader, spec.dt)
        u = traj.v_leader
    if spec.init is not None:
        speeds, gaps = spec.init
    elif spec.leader == "external-profile":
        speeds, gaps = [0.0] * len(spec.followers), [200.0] * len(spec.followers)
    else:
        speeds, gaps = equilibrium_init(float(u[0]), len(spec.followers), spec.params)
    cfg = SimConfig(dt=spec.dt, episode_steps=len(u) - 1, crash_mode="terminate")
    trace = run_episode(u, spec.followers, list(speeds), list(gaps), cfg, spec.params)
    return trace, compute_metrics(trace, checkpoint_ids=spec.checkpoint_ids)


@dataclass
class TtcResult:
    series: list[np.ndarray]  # one per follower, closing-in steps only
    hist: np.ndarray
    bin_edges: np.ndarray
    overflow: int

    @property
    def min_ttc(self) -> float:
        vals = [s.min() for s in self.series if len(s)]
        return float(min(vals)) if vals else float("inf")

    def sample_count(self) -> int:
        return sum(len(s) for s in self.series)


@dataclass
class MetricsReport:
    """Per-episode metrics; vehicle-ordered lists run leader, f1, ..., fN."""

    accel_variance: list[float]
    crash_count: int
    min_gap: list[float]
    mean_gap: list[float]
    accumulated_reward: list[float]
    jerk_exceedance: list[int]
    ttc: TtcResult
    sse_ln_gap: Optional[float] = None
    checkpoint_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accel_variance": self.accel_variance,
            "crash_count": self.crash_count,
            "min_gap": self.min_gap,
            "mean_gap": self.mean_gap,
            "accumulated_reward": self.accumulated_reward,
            "jerk_exceedance": self.jerk_exceedance,
            "ttc": {
                "min": self.ttc.min_ttc,
                "samples": self.ttc.sample_count(),
                "overflow": self.ttc.overflow,
                "hist": self.ttc.hist.tolist(),
                "bin_edges": self.ttc.bin_edges.tolist(),
            },
            "sse_ln_gap": self.sse_ln_gap,
            "checkpoint_ids": self.checkpoint_ids,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def compute_ttc(trace: EpisodeTrace) -> TtcResult:
    """Time-to-collision per follower at every closing-in step.

    TTC = g / (v - v_l) where the follower is faster than the vehicle
    ahead; other steps are undefined and excluded. Steps at or after a
    collision (gap <= 0) are excluded as well.
    """
    series = []
    leaders_v = [trace.leader_v] + [trace.v[:, j] for j in range(trace.n_followers - 1)]
    for j in range(trace.n_followers):
        v = trace.v[:, j]
        v_l = leaders_v[j]
        g = trace.gaps[:, j]
        mask = (v > v_l) & (g > 0.0)
        series.append(g[mask] / (v[mask] - v_l[mask]))
    all_vals = np.concatenate(series) if series else np.empty(0)
    edges = np.arange(TTC_RANGE[0], TTC_RANGE[1] + TTC_BIN_WIDTH / 2, TTC_BIN_WIDTH)
    hist, _ = np.histogram(all_vals[all_vals <= TTC_RANGE[1]], bins=edges)
    overflow = int(np.sum(all_vals > TTC_RANGE[1]))
    return TtcResult(series=series, hist=hist, bin_edges=edges, overflow=overflow)


def evaluate_follow_reward(
    trace: EpisodeTrace, params: AgentParams, follower: int = 0
) -> float:
    """Undiscounted accumulated car-following reward over a recorded trace.

    Re-evaluates the reward from the recorded kinematics, so traces from
    any controller (or parameter set) are scored on equal footing.
    """
    v = trace.v[:, follower]
    v_l = trace.leader_v if follower == 0 else trace.v[:, follower - 1]
    g = trace.gaps[:, follower]
    a = trace.a[:, follower]
    total = 0.0
    for i in range(trace.steps):
        if g[i] <= 0.0:
            total += CRASH_REWARD
            break
        jerk = 0.0 if i == 0 else (a[i] - a[i - 1]) / trace.dt
        total += reward_follow(float(v[i]), float(v_l[i]), float(g[i]), jerk, params).total
    return total


def compute_metrics(
    trace: EpisodeTrace,
    reference_gaps: Optional[np.ndarray] = None,
    checkpoint_ids: Sequence[str] = (),
) -> MetricsReport:
    """Assemble the standard per-episode metrics from a trace.

    Acceleration variance uses the population formula (ddof = 0).
    ``reference_gaps`` (aligned with the trace rows, follower 0) enables
    the SSE(ln g) entry.
    """
    accels = trace.accelerations()
    variance = [float(np.var(accels[:, k])) for k in range(accels.shape[1])]
    jerks = trace.jerks()
    n = trace.n_followers
    sse = None
    if reference_gaps is not None:
        sse = sse_ln_gap(trace.gaps[:, 0], reference_gaps)
    return MetricsReport(
        accel_variance=variance,
        crash_count=1 if trace.crashed else 0,
        min_gap=[float(trace.gaps[:, j].min()) for j in range(n)],
        mean_gap=[float(trace.gaps[:, j].mean()) for j in range(n)],
        accumulated_reward=[float(trace.r_total[:, j].sum()) for j in range(n)],
        jerk_exceedance=[int(np.sum(np.abs(jerks[:, j]) > JERK_COMFORT)) for j in range(n)],
        ttc=compute_ttc(trace),
        sse_ln_gap=sse,
        checkpoint_ids=list(checkpoint_ids),
    )


# --- external speed profile scenario ---------------------------------------


def external_profile(dt: float = 0.1) -> np.ndarray:
    """The reconstructed external leader speed profile, sampled at dt.

    Standing start, acceleration phase, full emergency braking, moderate
    oscillations, and a final stretch above the follower's desired speed.
    Shipped as versioned waypoints and expanded by linear interpolation.
    """
    ref = resources.files("rlfollow").joinpath("data/external_profile.csv")
    way_t, way_v = [], []
    with ref.open() as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "t":
                continue
            way_t.append(float(row[0]))
            way_v.append(float(row[1]))
    t_grid = np.arange(0.0, way_t[-1] + dt / 2, dt)
    return np.interp(t_grid, way_t, way_v)


def scenario_external_profile(
    controller: Controller,
    params: AgentParams | None = None,
    g0: float = 200.0,
    v0: float = 0.0,
    dt: float = 0.1,
    checkpoint_ids: Sequence[str] = (),
) -> tuple[EpisodeTrace, MetricsReport, dict]:
    """Drive one follower against the reconstructed external leader profile.

    Returns (trace, metrics, checks); the checks summarize the phases the
    protocol cares about: first standstill approach, emergency braking, and
    the free-driving speed cap after the leader outruns the follower.
    """
    p = params if params is not None else AgentParams()
    u = external_profile(dt)
    steps = len(u) - 1
    cfg = SimConfig(dt=dt, episode_steps=steps, crash_mode="terminate")
    trace = run_episode(u, [controller], [v0], [g0], cfg, p)
    report = compute_metrics(trace, checkpoint_ids=checkpoint_ids)

    t = trace.t
    # phase boundaries tied to the shipped profile
    approach_end = t <= 30.0
    emergency = (t >= 46.0) & (t <= 52.0)
    freeflow = t >= 90.0
    checks = {
        "crash_free": not trace.crashed,
        "approach_final_gap": float(trace.gaps[approach_end, 0][-1]) if approach_end.any() else float("nan"),
        "approach_peak_decel": float(-trace.a[approach_end, 0].min()) if approach_end.any() else float("nan"),
        "emergency_peak_decel": float(-trace.a[emergency, 0].min()) if emergency.any() else float("nan"),
        "emergency_min_gap": float(trace.gaps[emergency, 0].min()) if emergency.any() else float("nan"),
        "freeflow_max_speed": float(trace.v[freeflow, 0].max()) if freeflow.any() else float("nan"),
    }
    if trace.crashed:
        raise ScenarioFailure(
            f"crash at step {trace.crash_step} in external-profile scenario; "
            f"checks: {checks}"
        )
    return trace, report, checks


# --- platoon scenarios ------------------------------------------------------


def equilibrium_init(v0: float, n: int, params: AgentParams) -> tuple[list[float], list[float]]:
    """Initial speeds and gaps for a platoon starting in steady following."""
    speeds = [v0] * n
    gaps = [params.g_min + v0 * params.T] * n
    return speeds, gaps


def scenario_platoon(
    controllers: Sequence[Controller],
    leader_speeds: np.ndarray,
    params: AgentParams | None = None,
    init: tuple[Sequence[float], Sequence[float]] | None = None,
    dt: float = 0.1,
    checkpoint_ids: Sequence[str] = (),
) -> tuple[EpisodeTrace, MetricsReport]:
    """Run a leader followed by a chain of controllers; metrics per vehicle.

    The acceleration-variance vector in the report is ordered leader ->
    last follower, the quantity the string-stability reading is based on.
    """
    p = params if params is not None else AgentParams()
    u = np.asarray(leader_speeds, dtype=float)
    steps = len(u) - 1
    cfg = SimConfig(dt=dt, episode_steps=steps, crash_mode="terminate")
    if init is None:
        init = equilibrium_init(float(u[0]), len(controllers), p)
    speeds, gaps = init
    trace = run_episode(u, list(controllers), list(speeds), list(gaps), cfg, p)
    report = compute_metrics(trace, checkpoint_ids=checkpoint_ids)
    return trace, report


def _one_ou_episode(args) -> EpisodeTrace:
    controller_factory, episode_seed, p, steps, g0, dt = args
    rngs = child_rngs(episode_seed, "leader", "init")
    v0_l = float(rngs["init"].uniform(0.0, p.v_des))
    v0_f = float(rngs["init"].uniform(0.0, p.v_des))
    u = generate_leader_profile(LEADER_OU, steps + 1, v0_l, rngs["leader"])
    followers = controller_factory()
    n = len(followers)
    cfg = SimConfig(dt=dt, episode_steps=steps, crash_mode="terminate")
    if n == 1:
        init_speeds, init_gaps = [v0_f], [g0]
    else:
        init_speeds, init_gaps = equilibrium_init(v0_l, n, p)
    return run_episode(u, followers, init_speeds, init_gaps, cfg, p)


def run_ou_episodes(
    controller_factory,
    n_episodes: int,
    seed: int,
    params: AgentParams | None = None,
    steps: int = 500,
    g0: float = 120.0,
    dt: float = 0.1,
    jobs: int = 1,
) -> list[EpisodeTrace]:
    """Fresh OU-leader episodes with the training initial conditions.

    ``controller_factory()`` must return the follower stack for one episode
    (controllers may be reused; reset() is called by run_episode). Episode
    RNG streams derive from (seed, episode index), so results are identical
    for any ``jobs`` count and episodes may run in parallel workers.
    """
    p = params if params is not None else AgentParams()
    episode_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_episodes)]
    work = [(controller_factory, es, p, steps, g0, dt) for es in episode_seeds]
    if jobs <= 1:
        return [_one_ou_episode(w) for w in work]
    import multiprocessing

    with multiprocessing.Pool(jobs) as pool:
        return pool.map(_one_ou_episode, work)


# --- driver characteristics -------------------------------------------------


def realized_time_gap(
    trace: EpisodeTrace,
    params: AgentParams,
    follower: int = 0,
    v_floor: float = 2.0,
    warmup_s: float = 30.0,
    following_gap: float = 100.0,
) -> np.ndarray:
    """Actual time gap (g - g_min)/v over steady-following samples.

    Steady following means past the initial approach (t > warmup), moving
    (v > v_floor), and actually engaged with the leader (gap below
    ``following_gap``).
    """
    v = trace.v[:, follower]
    g = trace.gaps[:, follower]
    mask = (trace.t > warmup_s) & (v > v_floor) & (g < following_gap)
    return (g[mask] - params.g_min) / v[mask]


def scenario_driver_characteristics(
    controllers_by_T: dict[float, Controller],
    leader_speeds: np.ndarray,
    params_by_T: dict[float, AgentParams],
    g0: float = 120.0,
    v0: float = 0.0,
    dt: float = 0.1,
) -> dict:
    """Run differently parametrized agents against the same leader.

    Returns per-T realized time-gap statistics; closer-driving styles
    (smaller T) should realize smaller time gaps.
    """
    out = {}
    for T, ctl in sorted(controllers_by_T.items()):
        p = params_by_T[T]
        u = np.asarray(leader_speeds, dtype=float)
        cfg = SimConfig(dt=dt, episode_steps=len(u) - 1, crash_mode="terminate")
        trace = run_episode(u, [ctl], [v0], [g0], cfg, p)
        gaps_t = realized_time_gap(trace, p)
        out[T] = {
            "trace": trace,
            "crashed": trace.crashed,
            "mean_time_gap": float(np.mean(gaps_t)) if len(gaps_t) else float("nan"),
            "samples": int(len(gaps_t)),
        }
    return out


# --- cross-comparison -------------------------------------------------------


def cross_compare(
    rl_trace: EpisodeTrace,
    idm_trace: EpisodeTrace,
    reference_gaps: np.ndarray,
    params: AgentParams,
) -> dict:
    """Objective cross-table: SSE(ln g) and accumulated reward per controller.

    Both traces must be aligned with the reference gap series (same leader,
    same step grid). The accumulated reward applies the RL reward function
    to both trajectories; SSE(ln g) measures goodness-of-fit to the
    reference follower.
    """
    ref = np.asarray(reference_gaps, dtype=float)
    if len(ref) != rl_trace.steps or len(ref) != idm_trace.steps:
        raise ValueError("traces and reference are not time-aligned")
    return {
        "rl": {
            "sse_ln_gap": sse_ln_gap(rl_trace.gaps[:, 0], ref),
            "accumulated_reward": evaluate_follow_reward(rl_trace, params),
        },
        "idm": {
            "sse_ln_gap": sse_ln_gap(idm_trace.gaps[:, 0], ref),
            "accumulated_reward": evaluate_follow_reward(idm_trace, params),
        },
    }


# --- trajectory files -------------------------------------------------------


class IngestError(ValueError):
    """Malformed trajectory file; message carries the offending line number."""


@dataclass
class Trajectory:
    """Leader speed plus per-link gaps (and optional follower speeds) on a 0.1 s grid."""

    t: np.ndarray
    v_leader: np.ndarray
    gaps: list[np.ndarray]
    v_followers: list[Optional[np.ndarray]]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.1


def _parse_header(fields: list[str]) -> list[str]:
    if len(fields) < 3 or fields[0] != "t" or fields[1] != "v_leader" or fields[2] != "gap1":
        raise IngestError("header must start with 't,v_leader,gap1'")
    for k, name in enumerate(fields[3:], start=3):
        if not (name.startswith("gap") or name.startswith("v_follower")):
            raise IngestError(f"unexpected column name {name!r}")
    return fields


def ingest_trajectory(path, dt: float = 0.1) -> Trajectory:
    """Read a trajectory CSV and return series on a uniform ``dt`` grid.

    Format: header ``t,v_leader,gap1[,v_follower1,gap2,...]``, SI units.
    Files already on the target grid pass through untouched; others are
    linearly resampled. Malformed rows, non-monotone time, negative speeds
    or non-positive gaps raise IngestError with the line number.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = _parse_header([c.strip() for c in row])
                continue
            if len(row) != len(header):
                raise IngestError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise IngestError(f"line {lineno}: non-numeric value") from None
    if header is None or not rows:
        raise IngestError("empty trajectory file")
    data = np.asarray(rows)
    t = data[:, 0]
    if np.any(np.diff(t) <= 0.0):
        bad = int(np.argmax(np.diff(t) <= 0.0)) + 2
        raise IngestError(f"non-monotone time around data row {bad}")
    for k, name in enumerate(header[1:], start=1):
        col = data[:, k]
        if name.startswith("v") and np.any(col < 0.0):
            raise IngestError(f"negative speed in column {name!r}")
        if name.startswith("gap") and np.any(col <= 0.0):
            raise IngestError(f"non-positive gap in column {name!r}")

    native = np.diff(t)
    if np.all(np.abs(native - dt) < 1e-9):
        grid = t
        resampled = data
    else:
        duration = t[-1] - t[0]
        n_out = int(np.ceil(duration / dt)) + 1
        grid = t[0] + dt * np.arange(n_out)
        resampled = np.column_stack(
            [grid] + [np.interp(grid, t, data[:, k]) for k in range(1, data.shape[1])]
        )

    gaps, v_followers = [], []
    for k, name in enumerate(header):
        if name.startswith("gap"):
            gaps.append(resampled[:, k])
            v_followers.append(None)
        elif name.startswith("v_follower"):
            v_followers[-1] = resampled[:, k]
    return Trajectory(t=grid, v_leader=resampled[:, 1], gaps=gaps, v_followers=v_followers)


def export_trajectory(path, traj: Trajectory) -> None:
    """Write a Trajectory in the ingestible CSV format (full float precision)."""
    header = ["t", "v_leader"]
    for k in range(len(traj.gaps)):
        header.append(f"gap{k + 1}")
        if traj.v_followers[k] is not None:
            header.append(f"v_follower{k + 1}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(traj.t)):
            row = [repr(float(traj.t[i])), repr(float(traj.v_leader[i]))]
            for k in range(len(traj.gaps)):
                row.append(repr(float(traj.gaps[k][i])))
                if traj.v_followers[k] is not None:
                    row.append(repr(float(traj.v_followers[k][i])))
            writer.writerow(row)


def export_trace_csv(path, trace: EpisodeTrace) -> None:
    """Write a per-step trace CSV: time, leader kinematics, follower columns."""
    header = ["t", "leader_x", "leader_v", "leader_a"]
    for j in range(trace.n_followers):
        tag = f"f{j + 1}"
        header += [f"{tag}_x", f"{tag}_v", f"{tag}_a", f"{tag}_gap",
                   f"{tag}_r_safe", f"{tag}_r_gap", f"{tag}_r_jerk", f"{tag}_r_total"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(trace.steps):
            row = [trace.t[i], trace.leader_x[i], trace.leader_v[i], trace.leader_a[i]]
            for j in range(trace.n_followers):
                row += [trace.x[i, j], trace.v[i, j], trace.a[i, j], trace.gaps[i, j],
                        trace.r_safe[i, j], trace.r_gap[i, j],
                        trace.r_jerk[i, j], trace.r_total[i, j]]
            writer.writerow([repr(float(x)) for x in row])


def export_ttc_histogram_csv(path, ttc: TtcResult) -> None:
    """Plot-ready TTC histogram CSV (bin_lo, bin_hi, count)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for k in range(len(ttc.hist)):
            writer.writerow([ttc.bin_edges[k], ttc.bin_edges[k + 1], int(ttc.hist[k])])
        writer.writerow([TTC_RANGE[1], "inf", ttc.overflow])


def export_variance_csv(path, report: MetricsReport) -> None:
    """Plot-ready acceleration-variance bars (vehicle, variance)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle", "accel_variance"])
        labels = ["leader"] + [f"follower{j}" for j in range(1, len(report.accel_variance))]
        for label, var in zip(labels, report.accel_variance):
            writer.writerow([label, repr(float(var))])
