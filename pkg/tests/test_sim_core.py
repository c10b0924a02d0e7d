"""Kinematics, episode stepping, and collision bookkeeping tests."""

import numpy as np
import pytest

from rlfollow.idm import IdmParams, equilibrium_gap
from rlfollow.agent import IdmController
from rlfollow.rewards import AgentParams
from rlfollow.sim_core import (
    VEHICLE_LENGTH,
    SimConfig,
    VehicleState,
    gap,
    run_episode,
    step_vehicle,
)

P = AgentParams()


class ConstantAccel:
    def __init__(self, a):
        self.a = a
        self.calls = 0

    def reset(self):
        pass

    def accel(self, own, leader_speed, g):
        self.calls += 1
        return self.a


class TestStepVehicle:
    def test_euler_ballistic(self):
        s = step_vehicle(VehicleState(v=10.0), 2.0, 0.1)
        assert s.v == pytest.approx(10.2)
        assert s.x == pytest.approx(1.01)

    def test_standstill_stays_put(self):
        s = step_vehicle(VehicleState(v=0.0), -9.0, 0.1)
        assert s.v == 0.0 and s.x == 0.0

    def test_ballistic_stop_distance(self):
        s = step_vehicle(VehicleState(v=0.5), -9.0, 0.1)
        assert s.v == 0.0
        assert s.x == pytest.approx(0.5**2 / (2 * 9), abs=1e-15)

    def test_prev_acceleration_tracked(self):
        s = step_vehicle(VehicleState(v=5.0, a=1.0), -2.0, 0.1)
        assert s.a == -2.0 and s.a_prev == 1.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            step_vehicle(VehicleState(v=float("inf")), 0.0, 0.1)
        with pytest.raises(ValueError):
            step_vehicle(VehicleState(v=1.0), float("nan"), 0.1)

    def test_zero_accel_advances_v_dt_exactly(self):
        st = VehicleState(v=7.3)
        for _ in range(50):
            new = step_vehicle(st, 0.0, 0.1)
            assert new.x - st.x == pytest.approx(st.v * 0.1, abs=1e-12)
            st = new


class TestGap:
    def test_basic(self):
        assert gap(VehicleState(x=120.0), VehicleState(x=0.0)) == 115.0

    def test_crash_boundary(self):
        assert gap(VehicleState(x=VEHICLE_LENGTH), VehicleState(x=0.0)) == 0.0


class TestRunEpisode:
    def test_trapezoid_constant_speed_exact(self):
        # u*dt = 1.0 exactly at u=8, dt=0.125: integer accumulation, bit-exact
        cfg = SimConfig(dt=0.125, episode_steps=400)
        u = np.full(401, 8.0)
        tr = run_episode(u, [ConstantAccel(0.0)], [8.0], [50.0], cfg, P)
        assert tr.leader_x[-1] == 400 * 8.0 * 0.125
        # and within float tolerance on the default grid
        cfg = SimConfig(dt=0.1, episode_steps=500)
        u = np.full(501, 7.3)
        tr = run_episode(u, [ConstantAccel(0.0)], [7.3, ], [50.0], cfg, P)
        assert tr.leader_x[-1] == pytest.approx(500 * 7.3 * 0.1, abs=1e-9)

    def test_each_controller_queried_once_per_step(self):
        cfg = SimConfig(episode_steps=200)
        ctls = [ConstantAccel(0.0), ConstantAccel(0.0)]
        u = np.full(201, 5.0)
        run_episode(u, ctls, [5.0, 5.0], [30.0, 30.0], cfg, P)
        assert ctls[0].calls == 200 and ctls[1].calls == 200

    def test_idm_standstill_equilibrium(self):
        ip = IdmParams(v_des=15.0, T=1.5, g_min=2.0, a_max=1.5, b_comf=2.0)
        cfg = SimConfig(episode_steps=300)
        tr = run_episode(np.zeros(301), [IdmController(ip)], [0.0], [2.0], cfg, P)
        assert not tr.crashed
        assert tr.gaps[:, 0].min() == pytest.approx(2.0, abs=1e-12)
        assert tr.gaps[:, 0].max() == pytest.approx(2.0, abs=1e-12)

    def test_idm_converges_to_equilibrium_gap(self):
        ip = IdmParams(v_des=15.0, T=1.5, g_min=2.0, a_max=1.5, b_comf=2.0)
        v_e = 10.0
        cfg = SimConfig(episode_steps=6000)
        u = np.full(6001, v_e)
        tr = run_episode(u, [IdmController(ip)], [8.0], [30.0], cfg, P)
        assert not tr.crashed
        assert tr.gaps[-1, 0] == pytest.approx(equilibrium_gap(v_e, ip), abs=1e-4)
        assert tr.v[-1, 0] == pytest.approx(v_e, abs=1e-5)

    def test_crash_terminates_and_flags(self):
        # fast follower, standing leader, no braking
        cfg = SimConfig(episode_steps=500)
        tr = run_episode(np.zeros(501), [ConstantAccel(0.0)], [10.0], [20.0], cfg, P)
        assert tr.crashed and tr.crash_step is not None
        assert tr.steps == tr.crash_step + 1
        assert tr.gaps[-1, 0] <= 0.0
        assert np.all(tr.gaps[:-1, 0] > 0.0)

    def test_no_crash_flag_when_gap_stays_positive(self):
        cfg = SimConfig(episode_steps=300)
        u = np.full(301, 10.0)
        tr = run_episode(u, [ConstantAccel(0.0)], [10.0], [15.0], cfg, P)
        assert not tr.crashed and tr.steps == 300

    def test_continue_clamped_mode(self):
        cfg = SimConfig(episode_steps=100, crash_mode="continue-clamped")
        tr = run_episode(np.zeros(101), [ConstantAccel(0.0)], [10.0], [20.0], cfg, P)
        assert tr.crashed and tr.steps == 100
        assert tr.gaps.min() >= 0.0  # clamped, never overlapping

    def test_speed_never_negative_and_position_monotone(self):
        rng = np.random.default_rng(3)

        class RandomController:
            def reset(self):
                pass

            def accel(self, own, leader_speed, g):
                return float(rng.uniform(-9.0, 2.0))

        cfg = SimConfig(episode_steps=400, crash_mode="continue-clamped")
        for trial in range(5):
            u = np.abs(rng.normal(8.0, 4.0, size=401))
            tr = run_episode(
                u, [RandomController(), RandomController()], [5.0, 5.0], [40.0, 40.0], cfg, P
            )
            assert np.all(tr.v >= 0.0)
            assert np.all(np.diff(tr.x, axis=0) >= 0.0)
            assert np.all(np.diff(tr.leader_x) >= -1e-12)

    def test_leader_series_validation(self):
        cfg = SimConfig(episode_steps=500)
        with pytest.raises(ValueError):
            run_episode(np.zeros(100), [ConstantAccel(0.0)], [0.0], [10.0], cfg, P)
        with pytest.raises(ValueError):
            run_episode(np.zeros(501), [ConstantAccel(0.0)], [0.0], [-1.0], cfg, P)
        with pytest.raises(ValueError):
            run_episode(np.full(501, -1.0), [ConstantAccel(0.0)], [0.0], [10.0], cfg, P)

    def test_exact_episode_steps_padding(self):
        # series of exactly episode_steps is padded by holding the last value
        cfg = SimConfig(episode_steps=100)
        u = np.full(100, 6.0)
        tr = run_episode(u, [ConstantAccel(0.0)], [6.0], [30.0], cfg, P)
        assert tr.steps == 100
        assert tr.leader_v[-1] == 6.0

    def test_reward_breakdown_recorded(self):
        ip = IdmParams(v_des=15.0, T=1.5, g_min=2.0, a_max=1.5, b_comf=2.0)
        cfg = SimConfig(episode_steps=50)
        u = np.full(51, 10.0)
        tr = run_episode(u, [IdmController(ip)], [10.0], [17.0], cfg, P)
        total = tr.r_safe + P.w_gap * tr.r_gap + P.w_jerk * tr.r_jerk
        assert np.allclose(total, tr.r_total, atol=1e-12)


class TestSimConfigValidation:
    def test_bad_values(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.0)
        with pytest.raises(ValueError):
            SimConfig(episode_steps=0)
        with pytest.raises(ValueError):
            SimConfig(crash_mode="explode")
