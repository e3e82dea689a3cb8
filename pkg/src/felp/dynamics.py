"""Single-vehicle kinematics: state and control types plus an RK4 integrator.

The vehicle is a kinematic unicycle

    d/dt (x, y, theta, v) = (v cos(theta), v sin(theta), v * kappa, a)

controlled by path curvature ``kappa`` and tangential acceleration ``a``.
Speed is clamped at zero (no reverse motion) and the heading is wrapped to
(-pi, pi] after every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi

# Default control limits, overridable through the config file.
KAPPA_MAX = 0.2
A_MIN = -8.0
A_MAX = 4.0


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the interval (-pi, pi]."""
    wrapped = (theta + math.pi) % TWO_PI
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


@dataclass(frozen=True)
class VehicleState:
    """Planar pose and speed of one vehicle."""

    x: float
    y: float
    theta: float
    v: float

    def __post_init__(self):
        for name in ("x", "y", "theta", "v"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"non-finite state component {name}={value!r}")
        if self.v < 0.0:
            raise ValueError(f"speed must be non-negative, got {self.v}")


@dataclass(frozen=True)
class VehicleControl:
    """Curvature and tangential acceleration command."""

    kappa: float
    a: float

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and math.isfinite(self.a)):
            raise ValueError("non-finite control")

    def clamped(self, kappa_max: float = KAPPA_MAX,
                a_min: float = A_MIN, a_max: float = A_MAX) -> "VehicleControl":
        return VehicleControl(
            kappa=min(max(self.kappa, -kappa_max), kappa_max),
            a=min(max(self.a, a_min), a_max),
        )


@dataclass(frozen=True)
class VehicleFootprint:
    """Bounding-box dimensions used for occupancy and collision checks."""

    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0.0 or self.width <= 0.0:
            raise ValueError("footprint dimensions must be positive")


def _derivative(x, y, theta, v, kappa, a):
    return (v * math.cos(theta), v * math.sin(theta), v * kappa, a)


def _rk4(state, kappa, a, dt):
    x, y, th, v = state
    k1 = _derivative(x, y, th, v, kappa, a)
    k2 = _derivative(x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1],
                     th + 0.5 * dt * k1[2], v + 0.5 * dt * k1[3], kappa, a)
    k3 = _derivative(x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1],
                     th + 0.5 * dt * k2[2], v + 0.5 * dt * k2[3], kappa, a)
    k4 = _derivative(x + dt * k3[0], y + dt * k3[1],
                     th + dt * k3[2], v + dt * k3[3], kappa, a)
    return (
        x + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        th + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        v + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    )


def step(state: VehicleState, control: VehicleControl, dt: float) -> VehicleState:
    """Advance a vehicle by one RK4 step under a constant control.

    If the commanded deceleration would drive the speed below zero within
    the step, the state is integrated only up to the stopping time and the
    vehicle is held at rest for the remainder. Heading is wrapped after
    the step.
    """
    if dt <= 0.0 or not math.isfinite(dt):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if not (math.isfinite(control.kappa) and math.isfinite(control.a)):
        raise ValueError("non-finite control")

    x, y, th, v = state.x, state.y, state.theta, state.v
    a = control.a
    kappa = control.kappa

    t_int = dt
    if a < 0.0 and v + a * dt < 0.0:
        # Stop partway through the step instead of integrating reverse motion.
        t_int = v / -a
    if t_int > 0.0:
        x, y, th, v = _rk4((x, y, th, v), kappa, a, t_int)
    if v < 0.0:
        v = 0.0
    return VehicleState(x=x, y=y, theta=wrap_angle(th), v=v)
