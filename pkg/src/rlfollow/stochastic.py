"""Ornstein-Uhlenbeck processes for leader speed profiles and exploration noise.

Both processes use the Euler-Maruyama recurrence
    x(n+1) = x(n) + theta * (mu - x(n)) * dt + sigma * dW,   dW ~ N(0, dt).
Leader profiles are generated unclipped and clipped to [0, 16.6] m/s
afterwards, so standstill and above-desired-speed phases appear while the
underlying process keeps its analytic stationary statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "OuParams",
    "LEADER_OU",
    "EXPLORATION_OU",
    "LEADER_CLIP",
    "ou_step",
    "generate_leader_profile",
    "OuNoise",
    "child_rngs",
    "export_profile_csv",
]

# Leader speed clip range, m/s.
LEADER_CLIP = (0.0, 16.6)


@dataclass(frozen=True)
class OuParams:
    """Mean-reverting process parameters; clip bounds apply inside ou_step only."""

    theta: float
    mu: float
    sigma: float
    dt: float = 0.1
    clip_lo: Optional[float] = None
    clip_hi: Optional[float] = None

    def __post_init__(self):
        if self.theta < 0.0 or self.sigma < 0.0:
            raise ValueError("theta and sigma must be non-negative")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        both = self.clip_lo is not None and self.clip_hi is not None
        if both and not (self.clip_lo < self.clip_hi):
            raise ValueError("require clip_lo < clip_hi")


# Leader-speed process (m/s), discretized on the 0.1 s simulation grid.
LEADER_OU = OuParams(theta=0.132, mu=7.5, sigma=3.847, dt=0.1)

# Zero-reverting exploration noise in normalized action units. The published
# theta/sigma pair is unitless and is applied per simulation step (dt = 1
# noise step per environment step, the convention of the DDPG lineage);
# the continuous-time dt = 0.1 s reading explores too slowly to train
# reliably (actor saturation collapse).
EXPLORATION_OU = OuParams(theta=0.15, mu=0.0, sigma=0.2, dt=1.0)


def ou_step(x: float, p: OuParams, noise: float) -> float:
    """One Euler-Maruyama step; ``noise`` is a standard normal draw."""
    if not np.isfinite(x):
        raise ValueError("non-finite process value")
    x_new = x + p.theta * (p.mu - x) * p.dt + p.sigma * np.sqrt(p.dt) * noise
    if p.clip_lo is not None:
        x_new = max(x_new, p.clip_lo)
    if p.clip_hi is not None:
        x_new = min(x_new, p.clip_hi)
    return x_new


def generate_leader_profile(
    p: OuParams,
    steps: int,
    v0: float,
    rng: np.random.Generator | int,
    clip: tuple[float, float] = LEADER_CLIP,
) -> np.ndarray:
    """Leader speed series of ``steps`` values starting at v0.

    The recurrence runs unclipped; the returned series is clipped to
    ``clip`` as a whole. Deterministic for a fixed seed.
    """
    if steps <= 0:
        raise ValueError("steps must be positive")
    gen = np.random.default_rng(rng) if isinstance(rng, int) else rng
    draws = gen.standard_normal(steps - 1)
    series = np.empty(steps)
    series[0] = v0
    scale = p.sigma * np.sqrt(p.dt)
    x = float(v0)
    for i in range(1, steps):
        x = x + p.theta * (p.mu - x) * p.dt + scale * draws[i - 1]
        series[i] = x
    return np.clip(series, clip[0], clip[1])


class OuNoise:
    """Stateful zero-or-mu-reverting noise generator for action exploration.

    Resets to 0 at episode start; one value per call. Not thread-safe; each
    episode/worker owns its instance.
    """

    def __init__(self, p: OuParams = EXPLORATION_OU):
        self.p = p
        self.x = 0.0

    def reset(self) -> None:
        self.x = 0.0

    def sample(self, rng: np.random.Generator) -> float:
        self.x = ou_step(self.x, self.p, float(rng.standard_normal()))
        return self.x


def child_rngs(seed: int, *names: str) -> dict[str, np.random.Generator]:
    """Independent child generators derived from one master seed.

    Streams are keyed by purpose (leader, exploration, init, batch, ...) so
    components stay individually reproducible.
    """
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def export_profile_csv(path, speeds: np.ndarray, dt: float = 0.1) -> None:
    """Write a (t, v) speed profile for inspection."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "v"])
        for i, v in enumerate(speeds):
            writer.writerow([f"{i * dt:.1f}", repr(float(v))])
