import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from escortplan.dynamics import AgentParams, RobotState, rollout, rollout_batch, step, wrap_angle


def test_straight_line_step():
    s = step(RobotState(0, 0, 0), 0.0, AgentParams(v=2, dt=1))
    assert (s.x, s.y, s.theta) == pytest.approx((2, 0, 0))


def test_step_rotated_heading():
    s = step(RobotState(0, 0, math.pi / 2), 0.0, AgentParams(v=2, dt=1))
    assert (s.x, s.y, s.theta) == pytest.approx((0, 2, math.pi / 2), abs=1e-12)


def test_euler_uses_old_heading():
    s = step(RobotState(0, 0, 0), 0.5, AgentParams(v=2, dt=0.1))
    assert (s.x, s.y, s.theta) == pytest.approx((0.2, 0.0, 0.05))


def test_control_is_clamped():
    p = AgentParams(v=1, u_max=0.3, dt=1)
    assert step(RobotState(0, 0, 0), 5.0, p).theta == pytest.approx(0.3)
    assert step(RobotState(0, 0, 0), -5.0, p).theta == pytest.approx(-0.3)


@pytest.mark.parametrize("theta", [math.pi, -math.pi, 3 * math.pi, -3 * math.pi])
def test_heading_wraps_to_half_open_interval(theta):
    assert RobotState(0, 0, theta).theta == pytest.approx(math.pi)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        AgentParams(v=0)
    with pytest.raises(ValueError):
        AgentParams(v=1, dt=-1)


def test_empty_plan():
    traj = rollout(RobotState(1, 2, 0.3), [], AgentParams(v=1))
    assert traj.shape == (1, 3)
    assert traj[0] == pytest.approx([1, 2, 0.3])


def test_zero_controls_straight_spacing():
    p = AgentParams(v=2, dt=0.5)
    traj = rollout(RobotState(0, 0, 0), np.zeros(6), p)
    assert np.allclose(np.diff(traj[:, 0]), 1.0)
    assert np.allclose(traj[:, 1:], 0)


def _ode_endpoint(state0, u, v, duration):
    def rhs(_, s):
        return [v * math.cos(s[2]), v * math.sin(s[2]), u]

    sol = solve_ivp(rhs, (0, duration), state0, rtol=1e-11, atol=1e-11)
    return sol.y[:, -1]


def test_half_circle_matches_fine_ode_to_order_dt():
    # u * dt * T = pi; the continuous path ends at (0, 2 v / u)
    errors = []
    for T in (40, 80, 160):
        u, dt, v = 0.5, math.pi / (0.5 * T), 1.0
        p = AgentParams(v=v, u_max=1.0, dt=dt)
        traj = rollout(RobotState(0, 0, 0), np.full(T, u), p)
        exact = _ode_endpoint([0, 0, 0], u, v, T * dt)
        assert exact[:2] == pytest.approx([0, 2 * v / u], abs=1e-7)
        errors.append(np.linalg.norm(traj[-1, :2] - exact[:2]))
        assert errors[-1] < 2 * v * dt
    # first order: halving dt roughly halves the gap
    assert errors[1] / errors[0] == pytest.approx(0.5, abs=0.05)
    assert errors[2] / errors[1] == pytest.approx(0.5, abs=0.05)


def test_batch_matches_stepwise():
    rng = np.random.default_rng(3)
    p = AgentParams(v=3, u_max=1.0, dt=0.7)
    controls = rng.normal(size=(5, 12)) * 2
    s0 = RobotState(4, -2, 2.9)
    batch = rollout_batch(s0, controls, p)
    for row, traj in zip(controls, batch):
        assert np.allclose(traj, rollout(s0, row, p), atol=1e-10)


angles = st.floats(-math.pi, math.pi, allow_nan=False)
controls = st.lists(st.floats(-3, 3, allow_nan=False), min_size=0, max_size=15)


@settings(max_examples=60, deadline=None)
@given(phi=angles, theta=angles, us=controls)
def test_rotational_equivariance(phi, theta, us):
    p = AgentParams(v=1.5, u_max=1.0, dt=0.5)
    s0 = RobotState(3.0, -1.0, theta)
    base = rollout(s0, us, p)
    c, s = math.cos(phi), math.sin(phi)
    rot = RobotState(c * 3.0 + s * 1.0, s * 3.0 - c * 1.0, theta + phi)
    turned = rollout(rot, us, p)
    expected_xy = base[:, :2] @ np.array([[c, s], [-s, c]])
    assert np.allclose(turned[:, :2], expected_xy, atol=1e-9)
    assert np.allclose(np.cos(turned[:, 2] - base[:, 2] - phi), 1.0)


@settings(max_examples=60, deadline=None)
@given(a=controls, b=controls, theta=angles)
def test_rollout_semigroup(a, b, theta):
    p = AgentParams(v=2.0, u_max=1.2, dt=0.3)
    s0 = RobotState(0.5, 0.5, theta)
    whole = rollout(s0, a + b, p)
    first = rollout(s0, a, p)
    second = rollout(RobotState.from_array(first[-1]), b, p)
    assert np.array_equal(whole, np.vstack([first, second[1:]]))


@settings(max_examples=60, deadline=None)
@given(us=controls, theta=angles)
def test_headings_stay_wrapped(us, theta):
    traj = rollout_batch(RobotState(0, 0, theta), np.array(us, dtype=float), AgentParams(v=1, u_max=3))
    assert np.all(traj[:, 2] > -math.pi) and np.all(traj[:, 2] <= math.pi)


def test_wrap_angle_array():
    out = wrap_angle(np.array([0.0, 2 * math.pi, -math.pi, 7.0]))
    assert np.allclose(out, [0.0, 0.0, math.pi, 7.0 - 2 * math.pi])
