import math

import numpy as np
import pytest

from felp.dynamics import VehicleControl, VehicleFootprint, VehicleState, step, wrap_angle


def propagate(state, control, dt, t_total):
    n = int(round(t_total / dt))
    for _ in range(n):
        state = step(state, control, dt)
    return state


def test_straight_constant_speed():
    s = step(VehicleState(0, 0, 0, 10.0), VehicleControl(0.0, 0.0), 0.1)
    assert s.x == pytest.approx(1.0, abs=1e-12)
    assert s.y == 0.0
    assert s.theta == 0.0
    assert s.v == 10.0


def test_zero_speed_no_motion():
    s = step(VehicleState(0, 0, 0, 0.0), VehicleControl(0.1, 0.0), 0.1)
    assert (s.x, s.y, s.theta, s.v) == (0.0, 0.0, 0.0, 0.0)


def test_quarter_circle_arc_oracle():
    # Constant curvature at constant speed runs a circle of radius 1/kappa.
    v, kappa = 10.0, 0.05
    radius = 1.0 / kappa
    t_total = (math.pi / 2.0) / (v * kappa)
    n = 64
    state = propagate(VehicleState(0, 0, 0, v), VehicleControl(kappa, 0.0),
                      t_total / n, t_total)
    assert state.x == pytest.approx(radius, abs=1e-6)
    assert state.y == pytest.approx(radius, abs=1e-6)
    assert state.theta == pytest.approx(math.pi / 2.0, abs=1e-7)


def test_full_arc_accuracy_over_100m():
    v, kappa, dt = 20.0, 0.02, 0.05
    radius = 1.0 / kappa
    t_total = 100.0 / v  # 100 m of arc
    state = propagate(VehicleState(0, 0, 0, v), VehicleControl(kappa, 0.0), dt, t_total)
    phi = v * kappa * t_total
    assert state.x == pytest.approx(radius * math.sin(phi), abs=1e-6)
    assert state.y == pytest.approx(radius * (1 - math.cos(phi)), abs=1e-6)


def test_convergence_order():
    # Halving dt shrinks the one-second error by at least 8x (4th order).
    control = VehicleControl(0.1, 0.5)
    start = VehicleState(0, 0, 0.2, 8.0)

    def end(dt):
        s = propagate(start, control, dt, 1.0)
        return np.array([s.x, s.y, s.theta, s.v])

    e1 = np.linalg.norm(end(0.1) - end(0.05))
    e2 = np.linalg.norm(end(0.05) - end(0.025))
    assert e1 / e2 >= 8.0


def test_speed_never_negative():
    rng = np.random.default_rng(7)
    for _ in range(200):
        v = rng.uniform(0.0, 30.0)
        a = rng.uniform(-50.0, 2.0)
        dt = rng.uniform(0.01, 0.2)
        s = step(VehicleState(0, 0, 0, v), VehicleControl(0.0, a), dt)
        assert s.v >= 0.0
        assert s.x >= -1e-12  # no reverse motion under braking


def test_braking_stops_at_rest_position():
    # Stopping distance v^2 / (2|a|) for a constant brake to rest.
    s = step(VehicleState(0, 0, 0, 4.0), VehicleControl(0.0, -8.0), 1.0)
    assert s.v == 0.0
    assert s.x == pytest.approx(1.0, abs=1e-9)


def test_heading_wraps():
    s = VehicleState(0, 0, 0, 10.0)
    for _ in range(100):
        s = step(s, VehicleControl(0.2, 0.0), 0.1)
    assert -math.pi < s.theta <= math.pi


def test_wrap_angle_interval():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(0.0) == 0.0


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        VehicleState(float("nan"), 0, 0, 1.0)
    with pytest.raises(ValueError):
        VehicleState(0, 0, 0, -1.0)
    with pytest.raises(ValueError):
        VehicleControl(float("inf"), 0.0)
    with pytest.raises(ValueError):
        step(VehicleState(0, 0, 0, 1.0), VehicleControl(0, 0), 0.0)
    with pytest.raises(ValueError):
        VehicleFootprint(0.0, 1.0)


def test_control_clamp():
    c = VehicleControl(kappa=0.5, a=-20.0).clamped()
    assert c.kappa == 0.2
    assert c.a == -8.0
