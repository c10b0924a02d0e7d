"""OU process tests: determinism, clipping, and stationary statistics."""

import numpy as np
import pytest

from rlfollow.stochastic import (
    EXPLORATION_OU,
    LEADER_OU,
    OuNoise,
    OuParams,
    child_rngs,
    export_profile_csv,
    generate_leader_profile,
    ou_step,
)


class TestOuStep:
    def test_fixed_point_at_mu(self):
        p = OuParams(theta=0.132, mu=7.5, sigma=0.0)
        assert ou_step(7.5, p, 0.0) == 7.5

    def test_deterministic_drift(self):
        p = OuParams(theta=0.132, mu=7.5, sigma=0.0)
        assert ou_step(0.0, p, 1.23) == pytest.approx(0.099, abs=1e-15)

    def test_clip_bounds_respected(self):
        p = OuParams(theta=0.132, mu=7.5, sigma=3.847, clip_lo=0.0, clip_hi=16.6)
        rng = np.random.default_rng(0)
        x = 8.0
        for _ in range(2000):
            x = ou_step(x, p, float(rng.standard_normal()))
            assert 0.0 <= x <= 16.6

    def test_param_validation(self):
        with pytest.raises(ValueError):
            OuParams(theta=-1.0, mu=0.0, sigma=1.0)
        with pytest.raises(ValueError):
            OuParams(theta=1.0, mu=0.0, sigma=1.0, dt=0.0)
        with pytest.raises(ValueError):
            OuParams(theta=1.0, mu=0.0, sigma=1.0, clip_lo=2.0, clip_hi=1.0)


class TestLeaderProfile:
    def test_deterministic_for_fixed_seed(self):
        a = generate_leader_profile(LEADER_OU, 500, 10.0, 123)
        b = generate_leader_profile(LEADER_OU, 500, 10.0, 123)
        assert np.array_equal(a, b)
        c = generate_leader_profile(LEADER_OU, 500, 10.0, 124)
        assert not np.array_equal(a, c)

    def test_clipped_range(self):
        v = generate_leader_profile(LEADER_OU, 20000, 10.0, 7)
        assert v.min() >= 0.0 and v.max() <= 16.6

    def test_sigma_zero_monotone_decay_toward_mu(self):
        p = OuParams(theta=0.132, mu=7.5, sigma=0.0)
        v = generate_leader_profile(p, 2000, 16.6, 1)
        assert np.all(np.diff(v) <= 0.0)
        assert v[-1] == pytest.approx(7.5, abs=1e-3)
        # exact deterministic recurrence
        x = 16.6
        for i in range(1, 50):
            x = x + 0.132 * (7.5 - x) * 0.1
            assert v[i] == x

    def test_stationary_mean_of_clipped_process(self):
        # Monte Carlo oracle on the clipped process itself
        v = generate_leader_profile(LEADER_OU, 1_000_000, 7.5, 2024)
        assert abs(v.mean() - 7.5) < 0.05 * 7.5

    def test_stationary_std_of_unclipped_process(self):
        p = LEADER_OU
        raw = generate_leader_profile(
            p, 1_000_000, 7.5, 99, clip=(-np.inf, np.inf)
        )
        expect = p.sigma / np.sqrt(2.0 * p.theta)
        assert raw.std() == pytest.approx(expect, rel=0.05)

    def test_lag1_autocorrelation(self):
        p = LEADER_OU
        raw = generate_leader_profile(p, 400_000, 7.5, 31, clip=(-np.inf, np.inf))
        x = raw - raw.mean()
        rho = float(x[1:] @ x[:-1] / (x @ x))
        assert rho == pytest.approx(np.exp(-p.theta * p.dt), abs=0.005)


class TestExplorationNoise:
    def test_geometric_decay_without_noise(self):
        p = OuParams(theta=0.15, mu=0.0, sigma=0.0)
        noise = OuNoise(p)
        noise.x = 1.0
        rng = np.random.default_rng(0)
        prev = 1.0
        for _ in range(10):
            x = noise.sample(rng)
            assert x == pytest.approx(prev * (1.0 - 0.15 * 0.1), abs=1e-15)
            prev = x

    def test_reset_to_zero(self):
        noise = OuNoise(EXPLORATION_OU)
        rng = np.random.default_rng(1)
        for _ in range(5):
            noise.sample(rng)
        noise.reset()
        assert noise.x == 0.0

    def test_identical_sequence_for_fixed_seed(self):
        seq = []
        for _ in range(2):
            noise = OuNoise(EXPLORATION_OU)
            rng = np.random.default_rng(42)
            seq.append([noise.sample(rng) for _ in range(100)])
        assert seq[0] == seq[1]


class TestChildRngs:
    def test_streams_reproducible_and_distinct(self):
        a = child_rngs(5, "leader", "explore")
        b = child_rngs(5, "leader", "explore")
        assert a["leader"].standard_normal() == b["leader"].standard_normal()
        x = child_rngs(5, "leader", "explore")
        assert x["leader"].standard_normal(5).tolist() != x["explore"].standard_normal(5).tolist()


def test_export_profile_csv(tmp_path):
    v = generate_leader_profile(LEADER_OU, 50, 10.0, 3)
    path = tmp_path / "profile.csv"
    export_profile_csv(path, v)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (50, 2)
    assert np.allclose(rows[:, 1], v)
    assert rows[1, 0] - rows[0, 0] == pytest.approx(0.1)
