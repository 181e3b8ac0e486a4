"""
Bicycle-model dynamics and PD steering.
"""
import math

import numpy as np
import pytest

from raresim.config import ControllerConfig
from raresim.vehicle import (HEADING, V_LAT, X, Y, YAW_RATE, PdGains, VehicleParams,
                             VehicleState, lateral_rate, pd_steering, slip_angles, tire_forces,
                             vehicle_diffusion, vehicle_drift, vehicle_jump_vector, world_motion)

P = VehicleParams()


def _reference_drift(x, y, heading, v_lat, yaw, steer, p=P):
    """Second, scalar-only evaluator of the bicycle model."""
    a_f = (v_lat + p.dist_front * yaw) / p.v_long - steer
    a_r = (v_lat - p.dist_rear * yaw) / p.v_long
    fy_f = -p.stiffness_front * a_f
    fy_r = -p.stiffness_rear * a_r
    return [
        p.v_long * math.cos(heading) - v_lat * math.sin(heading),
        p.v_long * math.sin(heading) + v_lat * math.cos(heading),
        yaw,
        (fy_f * math.cos(steer) + fy_r) / p.mass - p.v_long * yaw,
        (p.dist_front * fy_f * math.cos(steer) - p.dist_rear * fy_r) / p.yaw_inertia,
    ]


def _analytic_jacobian(point, steer, p=P):
    """d(drift)/d(x, y, heading, v_lat, yaw_rate, steer), shape (5, 6)."""
    _, _, heading, v_lat, yaw = point
    v, cu, su = p.v_long, math.cos(steer), math.sin(steer)
    f_front = -p.stiffness_front * ((v_lat + p.dist_front * yaw) / v - steer)
    ff_v, ff_w, ff_u = -p.stiffness_front / v, -p.stiffness_front * p.dist_front / v, p.stiffness_front
    fr_v, fr_w = -p.stiffness_rear / v, p.stiffness_rear * p.dist_rear / v
    jac = np.zeros((5, 6))
    jac[X, HEADING] = -v * math.sin(heading) - v_lat * math.cos(heading)
    jac[X, V_LAT] = -math.sin(heading)
    jac[Y, HEADING] = v * math.cos(heading) - v_lat * math.sin(heading)
    jac[Y, V_LAT] = math.cos(heading)
    jac[HEADING, YAW_RATE] = 1.0
    jac[V_LAT, V_LAT] = (ff_v * cu + fr_v) / p.mass
    jac[V_LAT, YAW_RATE] = (ff_w * cu + fr_w) / p.mass - v
    jac[V_LAT, 5] = (ff_u * cu - f_front * su) / p.mass
    jac[YAW_RATE, V_LAT] = (p.dist_front * ff_v * cu - p.dist_rear * fr_v) / p.yaw_inertia
    jac[YAW_RATE, YAW_RATE] = (p.dist_front * ff_w * cu - p.dist_rear * fr_w) / p.yaw_inertia
    jac[YAW_RATE, 5] = p.dist_front * (ff_u * cu - f_front * su) / p.yaw_inertia
    return jac


class TestSlipAndForces:
    def test_rest(self):
        assert slip_angles(VehicleState(), 0.0, P) == (0.0, 0.0)

    def test_lateral_velocity(self):
        a_f, a_r = slip_angles(VehicleState(v_lat=2.0), 0.0, P)
        assert a_f == pytest.approx(0.1)
        assert a_r == pytest.approx(0.1)

    def test_yaw_rate_is_antisymmetric(self):
        a_f, a_r = slip_angles(VehicleState(yaw_rate=0.05), 0.0, P)
        assert a_f == pytest.approx(0.005)
        assert a_r == pytest.approx(-0.005)

    def test_forces(self):
        assert tire_forces(0.0, 0.0, P) == (0.0, 0.0)
        f_front, _ = tire_forces(0.1, 0.0, P)
        assert f_front == pytest.approx(-6000.0)


class TestDrift:
    def test_straight_cruise(self):
        d = vehicle_drift(VehicleState(), 0.0, P)
        assert np.allclose(d, [20.0, 0.0, 0.0, 0.0, 0.0])

    def test_rotated_heading(self):
        d = vehicle_drift(VehicleState(heading=math.pi / 2), 0.0, P)
        assert abs(d[X]) < 1e-12
        assert d[Y] == pytest.approx(20.0)

    def test_matches_independent_evaluator(self):
        point = (12.0, 1.3, 0.04, 0.25, 0.03)
        steer = 0.012
        got = vehicle_drift(VehicleState(*point), steer, P)
        want = np.array(_reference_drift(*point, steer))
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_batched_rows_match_single_points(self):
        rows = np.array([[0.0, 0.0, 0.0, 0.0, 0.0], [5.0, 2.0, 0.1, -0.3, 0.02]])
        steer = np.array([0.0, -0.01])
        batch = vehicle_drift(VehicleState.from_array(rows), steer, P)
        assert batch.shape == (2, 5)
        for i in range(2):
            assert np.allclose(batch[i], _reference_drift(*rows[i], steer[i]), rtol=1e-12)

    def test_state_array_round_trip(self):
        s = VehicleState(1.0, 2.0, 0.1, 0.2, 0.3)
        assert np.array_equal(VehicleState.from_array(s.to_array()).to_array(), s.to_array())
        assert s.to_array()[YAW_RATE] == 0.3

    @pytest.mark.parametrize("theta", [0.3, -1.1, math.pi / 2, 2.5])
    def test_rotation_equivariance(self, theta):
        point = np.array([12.0, 1.3, 0.04, 0.25, 0.03])
        steer = 0.012
        base = vehicle_drift(VehicleState(*point), steer, P)
        turned = point.copy()
        turned[HEADING] += theta
        # position does not enter the dynamics
        turned[[X, Y]] = [-40.0, 7.5]
        got = vehicle_drift(VehicleState(*turned), steer, P)
        c, s = math.cos(theta), math.sin(theta)
        want_xy = np.array([[c, -s], [s, c]]) @ base[[X, Y]]
        assert np.allclose(got[[X, Y]], want_xy, rtol=0.0, atol=1e-10)
        assert np.allclose(got[[HEADING, V_LAT, YAW_RATE]], base[[HEADING, V_LAT, YAW_RATE]],
                           rtol=1e-12, atol=0.0)

    @pytest.mark.parametrize("point,steer", [
        ((12.0, 1.3, 0.04, 0.25, 0.03), 0.012),
        ((0.0, 3.5, -0.2, -0.6, 0.1), -0.05),
        ((5.0, 0.0, 1.0, 0.0, 0.0), 0.3),
    ])
    def test_finite_difference_jacobian(self, point, steer):
        z0 = np.array(point + (steer,))
        fd = np.empty((5, 6))
        for j in range(6):
            h = 1e-6 * max(1.0, abs(z0[j]))
            up, down = z0.copy(), z0.copy()
            up[j] += h
            down[j] -= h
            f_up = vehicle_drift(VehicleState(*up[:5]), up[5], P)
            f_down = vehicle_drift(VehicleState(*down[:5]), down[5], P)
            fd[:, j] = (f_up - f_down) / (up[j] - down[j])
        jac = _analytic_jacobian(point, steer)
        np.testing.assert_allclose(fd, jac, rtol=1e-6, atol=1e-6 * np.abs(jac).max())

    def test_zero_stiffness_leaves_only_transport(self):
        p = VehicleParams(stiffness_front=0.0, stiffness_rear=0.0)
        rows = np.array([[0.0, 0.0, 0.1, 0.4, 0.05], [3.0, 1.0, -0.3, -0.2, -0.02]])
        state = VehicleState.from_array(rows)
        d = vehicle_drift(state, np.array([0.2, -0.1]), p)
        assert np.allclose(d[:, V_LAT], -p.v_long * rows[:, YAW_RATE], rtol=1e-12, atol=0.0)
        assert np.all(d[:, YAW_RATE] == 0.0)
        assert np.allclose(d[:, HEADING], rows[:, YAW_RATE])


class TestNoise:
    def test_diffusion_rows(self):
        g = vehicle_diffusion(P)
        assert g.shape == (5, 1)
        assert g[X, 0] == g[Y, 0] == 1e-2
        assert np.all(g[[HEADING, V_LAT, YAW_RATE]] == 0.0)

    def test_zero_diffusion(self):
        assert np.all(vehicle_diffusion(VehicleParams(diffusion_magnitude=0.0)) == 0.0)

    def test_jump_vector(self):
        j = vehicle_jump_vector(P)
        assert j[X] == j[Y] == 1e-6
        assert j[HEADING] == j[V_LAT] == j[YAW_RATE] == 0.0


class TestPdSteering:
    def test_gains_from_config(self):
        assert PdGains.from_config(ControllerConfig(), 3.5) == PdGains(1.5e-3, 1e-2, 3.5)
        assert PdGains.from_config(ControllerConfig(kp=2.0, kd=0.0)).y_target == 0.0

    def test_settled(self):
        assert pd_steering(VehicleState(y=3.5), PdGains(1.5e-3, 1e-2, 3.5), P) == 0.0

    def test_proportional(self):
        u = pd_steering(VehicleState(), PdGains(1.5e-3, 1e-2, 3.5), P)
        assert u == pytest.approx(5.25e-3)

    def test_pure_derivative(self):
        state = VehicleState(v_lat=1.0)
        assert lateral_rate(state, P) == pytest.approx(1.0)
        assert pd_steering(state, PdGains(1.5e-3, 1e-2, 0.0), P) == pytest.approx(-1e-2)

    def test_clamped(self):
        assert pd_steering(VehicleState(), PdGains(10.0, 0.0, 3.5), P) == P.max_steer
        assert pd_steering(VehicleState(), PdGains(10.0, 0.0, -3.5), P) == -P.max_steer


class TestWorldMotion:
    def test_straight_cruise_has_no_acceleration(self):
        (v, a) = world_motion(VehicleState(), 0.0, P, 2)
        assert v == pytest.approx((20.0, 0.0))
        assert a == pytest.approx((0.0, 0.0))

    def test_higher_orders_are_zero(self):
        out = world_motion(VehicleState(v_lat=0.5), 0.01, P, 4)
        assert len(out) == 4
        assert out[2] == (0.0, 0.0) and out[3] == (0.0, 0.0)

    def test_order_must_be_positive(self):
        with pytest.raises(ValueError):
            world_motion(VehicleState(), 0.0, P, 0)
