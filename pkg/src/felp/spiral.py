"""Cubic-curvature spiral paths between waypoint boundary conditions.

A path is parameterized by its curvature polynomial

    kappa(s) = kappa0 + b s + c s^2 + d s^3,  s in [0, s_f]

with heading theta(s) available in closed form and position obtained by
quadrature of (cos theta, sin theta). Boundary problems are posed in the
frame of the start pose: given a target endpoint (x, y, theta, kappa) with
x > 0, Newton shooting over (b, c, d, s_f) drives the integrated endpoint
onto the target. The Jacobian is estimated by central finite differences
and the pose integrals use composite Simpson quadrature with 64 panels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import dynamics
from .lane_graph import FRONT, LEFT, RIGHT, LaneGraph, Waypoint

TOL_POS = 1e-3
TOL_THETA = 1e-4
TOL_KAPPA = 1e-4
MAX_ITER = 50
_SIMPSON_PANELS = 64


class SpiralInfeasibleError(RuntimeError):
    """The shooting iteration failed; the planner skips this option."""


@dataclass(frozen=True)
class PathEndPoint:
    """Target boundary condition in the frame of the path's start pose."""

    x: float
    y: float
    theta: float
    kappa: float

    def __post_init__(self):
        for name in ("x", "y", "theta", "kappa"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite endpoint component {name}")
        if self.x <= 0.0:
            raise ValueError(f"endpoint must make forward progress, got x={self.x}")


@dataclass(frozen=True)
class SpiralPath:
    """Solved spiral: curvature polynomial coefficients and arc length."""

    kappa0: float
    b: float
    c: float
    d: float
    arc_length: float

    def kappa_at(self, s: float) -> float:
        return self.kappa0 + s * (self.b + s * (self.c + s * self.d))

    def theta_at(self, s: float) -> float:
        return s * (self.kappa0 + s * (self.b / 2.0 + s * (self.c / 3.0 + s * self.d / 4.0)))

    def max_abs_kappa(self) -> float:
        """Curvature extremum over the arc (endpoints and interior roots)."""
        candidates = [0.0, self.arc_length]
        # kappa'(s) = b + 2 c s + 3 d s^2
        if abs(self.d) > 1e-15:
            disc = 4.0 * self.c ** 2 - 12.0 * self.d * self.b
            if disc >= 0.0:
                root = math.sqrt(disc)
                for sign in (-1.0, 1.0):
                    s = (-2.0 * self.c + sign * root) / (6.0 * self.d)
                    if 0.0 < s < self.arc_length:
                        candidates.append(s)
        elif abs(self.c) > 1e-15:
            s = -self.b / (2.0 * self.c)
            if 0.0 < s < self.arc_length:
                candidates.append(s)
        return max(abs(self.kappa_at(s)) for s in candidates)


def _simpson_weights(n_panels: int) -> np.ndarray:
    w = np.ones(2 * n_panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * 2 * n_panels)


_U = np.linspace(0.0, 1.0, 2 * _SIMPSON_PANELS + 1)
_W = _simpson_weights(_SIMPSON_PANELS)


def _endpoint_scaled(kappa0: float, bh: float, ch: float, dh: float, sf: float):
    """Endpoint of the spiral with arc-normalized coefficients.

    The curvature is kappa0 + bh*u + ch*u^2 + dh*u^3 over u = s/sf, which
    keeps every unknown O(1) regardless of the arc length.
    """
    th = sf * _U * (kappa0 + _U * (bh / 2.0 + _U * (ch / 3.0 + _U * (dh / 4.0))))
    x = sf * float(np.dot(_W, np.cos(th)))
    y = sf * float(np.dot(_W, np.sin(th)))
    theta = float(th[-1])
    kappa = kappa0 + bh + ch + dh
    return x, y, theta, kappa


def _residual(q, kappa0, target):
    x, y, th, ka = _endpoint_scaled(kappa0, q[0], q[1], q[2], q[3])
    return np.array([
        x - target.x,
        y - target.y,
        dynamics.wrap_angle(th - target.theta),
        ka - target.kappa,
    ])


def solve_bvp(target: PathEndPoint, kappa0: float,
              kappa_max: float = dynamics.KAPPA_MAX,
              tol_pos: float = TOL_POS, tol_theta: float = TOL_THETA,
              tol_kappa: float = TOL_KAPPA, max_iter: int = MAX_ITER,
              check_kappa_max: bool = True) -> SpiralPath:
    """Solve the two-point boundary problem for a cubic spiral.

    Raises SpiralInfeasibleError when the Newton iteration does not meet
    the endpoint tolerances within ``max_iter`` iterations or when the
    solution exceeds the curvature bound.
    """
    dist = math.hypot(target.x, target.y)
    if dist < 1e-6:
        raise SpiralInfeasibleError("degenerate boundary: target at origin")
    s_min = 0.3 * dist

    def converged(res, scale: float = 1.0) -> bool:
        return (math.hypot(res[0], res[1]) < tol_pos * scale
                and abs(res[2]) < tol_theta * scale and abs(res[3]) < tol_kappa * scale)

    # The iteration budget is shared across restarts with progressively
    # longer initial arc guesses (helps S-shaped boundaries).
    budget = max_iter
    starts = (1.0 + target.theta ** 2 / 5.0, 1.2, 1.5, 2.0)
    q = None
    r = None
    for attempt, mult in enumerate(starts):
        if budget <= 0:
            break
        q = np.array([0.0, 0.0, 0.0, dist * mult])
        r = _residual(q, kappa0, target)
        for _ in range(min(budget, 14 if attempt + 1 < len(starts) else budget)):
            budget -= 1
            # Iterate well past the contract tolerances; Newton converges
            # quadratically so the extra steps are nearly free.
            if converged(r, 1e-3):
                break
            jac = np.empty((4, 4))
            for j in range(4):
                h = 1e-6 * max(1.0, abs(q[j]))
                qp = q.copy()
                qm = q.copy()
                qp[j] += h
                qm[j] -= h
                qm[3] = max(qm[3], s_min)
                jac[:, j] = (_residual(qp, kappa0, target)
                             - _residual(qm, kappa0, target)) / (qp[j] - qm[j])
            try:
                delta = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                break
            # Keep the arc-length update inside a sane trust region.
            if abs(delta[3]) > 0.5 * q[3]:
                delta *= 0.5 * q[3] / abs(delta[3])
            norm0 = float(np.dot(r, r))
            lam = 1.0
            for _ in range(8):
                q_new = q + lam * delta
                q_new[3] = max(q_new[3], s_min)
                r_new = _residual(q_new, kappa0, target)
                if float(np.dot(r_new, r_new)) < norm0 or converged(r_new, 1e-3):
                    break
                lam *= 0.5
            q, r = q_new, r_new
        if converged(r):
            break
    if r is None or not converged(r):
        raise SpiralInfeasibleError(
            f"no convergence to {target} after {max_iter} iterations")

    sf = float(q[3])
    path = SpiralPath(kappa0=kappa0, b=float(q[0]) / sf, c=float(q[1]) / sf ** 2,
                      d=float(q[2]) / sf ** 3, arc_length=sf)
    if check_kappa_max and path.max_abs_kappa() > kappa_max + 1e-9:
        raise SpiralInfeasibleError(
            f"solution exceeds curvature bound {kappa_max}")
    return path


def sample(path: SpiralPath, ds: float) -> np.ndarray:
    """Poses along the path at arclengths {0, ds, 2ds, ..., arc_length}.

    Returns an array of rows (x, y, theta, kappa); the final row lies
    exactly at the arc end. Position is integrated with per-interval
    Simpson quadrature on the closed-form heading.
    """
    if ds <= 0 or ds > path.arc_length + 1e-12:
        raise ValueError(f"need 0 < ds <= arc_length, got ds={ds}")
    s_values = [i * ds for i in range(int(math.ceil(path.arc_length / ds - 1e-9)))]
    s_values.append(path.arc_length)
    rows = np.empty((len(s_values), 4))
    x = y = 0.0
    prev_s = 0.0
    for i, s in enumerate(s_values):
        if s > prev_s:
            x, y = _advance_position(path, x, y, prev_s, s)
            prev_s = s
        rows[i] = (x, y, path.theta_at(s), path.kappa_at(s))
    return rows


def _advance_position(path: SpiralPath, x: float, y: float,
                      s_from: float, s_to: float, max_step: float = 0.25):
    """Advance (x, y) along the path by Simpson substeps of <= max_step."""
    span = s_to - s_from
    n_sub = max(1, int(math.ceil(span / max_step)))
    h = span / n_sub
    for i in range(n_sub):
        a = s_from + i * h
        th_a = path.theta_at(a)
        th_m = path.theta_at(a + 0.5 * h)
        th_b = path.theta_at(a + h)
        x += h / 6.0 * (math.cos(th_a) + 4.0 * math.cos(th_m) + math.cos(th_b))
        y += h / 6.0 * (math.sin(th_a) + 4.0 * math.sin(th_m) + math.sin(th_b))
    return x, y


@dataclass(frozen=True)
class ConformalOption:
    """A lattice option: path target in the start frame plus its vertex."""

    endpoint: PathEndPoint
    waypoint: Waypoint
    lateral: int  # -1 right, 0 keep, +1 left


def _front_chain_ok(graph: LaneGraph, lane: int, s_mm: int, hops: int) -> bool:
    key = (lane, s_mm)
    if key not in graph.vertices:
        return False
    end = (lane, s_mm + hops * graph.r0_mm)
    if end not in graph.vertices:
        return False
    return graph.run_id(key) == graph.run_id(end)


def _lateral_target(graph: LaneGraph, from_wp: Waypoint, n0: int, kind: str):
    """Adjacent-lane vertex n0 columns ahead, if some legal crossing exists."""
    provider = graph.provider
    lane = (provider.left_lane(from_wp.lane_id) if kind == LEFT
            else provider.right_lane(from_wp.lane_id))
    if lane is None:
        return None
    target = graph.vertices.get((lane, from_wp.s_mm + n0 * graph.r0_mm))
    if target is None:
        return None
    for j in range(n0 + 1):
        src = (from_wp.lane_id, from_wp.s_mm + j * graph.r0_mm)
        if src not in graph.vertices:
            continue
        dst = graph.out_edges[src].get(kind)
        if dst is None or dst[0] != lane:
            continue
        if (_front_chain_ok(graph, from_wp.lane_id, from_wp.s_mm, j)
                and _front_chain_ok(graph, lane, dst[1], n0 - j)):
            return target
    return None


def _to_frame(from_wp: Waypoint, wp: Waypoint) -> Optional[PathEndPoint]:
    ct, st = math.cos(from_wp.theta), math.sin(from_wp.theta)
    dx = wp.x - from_wp.x
    dy = wp.y - from_wp.y
    x = dx * ct + dy * st
    y = -dx * st + dy * ct
    if x <= 0.0:
        return None
    return PathEndPoint(x=x, y=y,
                        theta=dynamics.wrap_angle(wp.theta - from_wp.theta),
                        kappa=wp.kappa)


def conformal_endpoints(graph: LaneGraph, from_wp: Waypoint, n0: int) -> List[ConformalOption]:
    """Lane-keep, left and right path targets n0 front edges ahead.

    Orientation and curvature of every endpoint follow the road geometry
    at the target vertex. Options whose road is missing (lane end, solid
    boundary with no reachable crossing) are omitted.
    """
    if n0 < 1:
        raise ValueError("n0 must be at least one edge")
    options: List[ConformalOption] = []

    if _front_chain_ok(graph, from_wp.lane_id, from_wp.s_mm, n0):
        keep = graph.vertices[(from_wp.lane_id, from_wp.s_mm + n0 * graph.r0_mm)]
        ep = _to_frame(from_wp, keep)
        if ep is not None:
            options.append(ConformalOption(ep, keep, 0))

    for kind, lateral in ((LEFT, 1), (RIGHT, -1)):
        target = _lateral_target(graph, from_wp, n0, kind)
        if target is not None:
            ep = _to_frame(from_wp, target)
            if ep is not None:
                options.append(ConformalOption(ep, target, lateral))
    return options
