"""Synthetic road provider.

Roads are described by a reference line (piecewise constant-curvature
segments), a set of parallel lanes at fixed lateral offsets, per-lane
accessible arclength ranges (lane drops and ramps are gaps in a lane's
range list), and per-boundary lane-change permissions that may vary along
the road. The provider answers exactly four map queries: waypoints ahead,
left waypoint, right waypoint, and route membership. All other methods are
construction or geometry helpers.

Conventions: arclength ``s`` runs along the reference line, lateral offset
``l`` is positive to the left, and lane ``k`` is centered at ``l = k * w0``
(lane 0 rightmost). An optional lateral wrap closes the lanes into a ring
in the adjacency sense, which is useful for idealized planner benchmarks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .lane_graph import Waypoint

_EPS = 1e-6

PERM_NONE = "none"
PERM_BOTH = "both"
PERM_UP = "up"      # change allowed from the lower lane index to the higher
PERM_DOWN = "down"  # change allowed from the higher lane index to the lower
_PERMISSIONS = (PERM_NONE, PERM_BOTH, PERM_UP, PERM_DOWN)


@dataclass(frozen=True)
class _Segment:
    s0: float
    length: float
    x0: float
    y0: float
    th0: float
    kappa: float

    def pose(self, s: float):
        u = s - self.s0
        if abs(self.kappa) < 1e-12:
            return (self.x0 + u * math.cos(self.th0),
                    self.y0 + u * math.sin(self.th0),
                    self.th0)
        th = self.th0 + self.kappa * u
        r = 1.0 / self.kappa
        return (self.x0 + r * (math.sin(th) - math.sin(self.th0)),
                self.y0 - r * (math.cos(th) - math.cos(self.th0)),
                th)

    def project(self, px: float, py: float):
        """Return (u, l) of the point in this segment's frame; u unclamped."""
        if abs(self.kappa) < 1e-12:
            dx = px - self.x0
            dy = py - self.y0
            ct, st = math.cos(self.th0), math.sin(self.th0)
            return dx * ct + dy * st, -dx * st + dy * ct
        r = 1.0 / self.kappa
        cx = self.x0 - r * math.sin(self.th0)
        cy = self.y0 + r * math.cos(self.th0)
        phi = math.atan2(py - cy, px - cx)
        phi0 = math.atan2(self.y0 - cy, self.x0 - cx)
        dphi = math.remainder(phi - phi0, 2.0 * math.pi)
        u = dphi / self.kappa
        rho = math.hypot(px - cx, py - cy)
        l = (1.0 - abs(self.kappa) * rho) / self.kappa
        return u, l


class SyntheticRoad:
    """Multi-lane road behind the four-query map interface."""

    def __init__(self, n_lanes: int, lane_width: float, length: float,
                 kappa_segments: Sequence[tuple] = ((0.0, 0.0),),
                 lane_ranges: Optional[dict] = None,
                 boundaries: Optional[dict] = None,
                 lateral_wrap: bool = False,
                 route_lanes: Optional[Sequence[int]] = None,
                 route_ranges: Optional[dict] = None,
                 start_pose: tuple = (0.0, 0.0, 0.0)):
        """
        Args:
            n_lanes: number of parallel lanes.
            lane_width: lateral spacing w0 between lane centers (m).
            length: reference-line length (m).
            kappa_segments: breakpoints (s_start, kappa) of the reference
                line curvature, sorted by s_start, first at 0.
            lane_ranges: lane index -> list of inclusive (s_lo, s_hi)
                ranges where the lane exists; defaults to the full length.
            boundaries: (k, k+1) or the wrap pair (n_lanes-1, 0) ->
                list of (s_lo, s_hi, permission) entries; unlisted spans
                default to "both".
            lateral_wrap: close the lane adjacency into a ring.
            route_lanes: lanes on the planned route; defaults to all.
            route_ranges: lane index -> ranges where the lane is on the
                route; defaults to the lane's full extent. An exit-only
                continuation is a lane that exists beyond its route range.
            start_pose: (x, y, theta) of the reference line at s = 0.
        """
        if n_lanes < 1:
            raise ValueError("need at least one lane")
        if lane_width <= 0 or length <= 0:
            raise ValueError("lane_width and length must be positive")
        self.n_lanes = n_lanes
        self.w0 = float(lane_width)
        self.length = float(length)
        self.lateral_wrap = bool(lateral_wrap)
        self.route_lanes = set(range(n_lanes)) if route_lanes is None else set(route_lanes)

        self._segments = []
        x, y, th = start_pose
        pts = sorted(kappa_segments, key=lambda kv: kv[0])
        if not pts or pts[0][0] > _EPS:
            pts = [(0.0, 0.0)] + list(pts)
        for i, (s0, kappa) in enumerate(pts):
            s1 = pts[i + 1][0] if i + 1 < len(pts) else self.length
            seg = _Segment(s0=s0, length=s1 - s0, x0=x, y0=y, th0=th, kappa=kappa)
            self._segments.append(seg)
            x, y, th = seg.pose(s1)

        self._lane_ranges = {}
        for k in range(n_lanes):
            ranges = (lane_ranges or {}).get(k, [(0.0, self.length)])
            self._lane_ranges[k] = sorted((float(a), float(b)) for a, b in ranges)
        self._route_ranges = {}
        for k in range(n_lanes):
            ranges = (route_ranges or {}).get(k)
            if ranges is None:
                self._route_ranges[k] = self._lane_ranges[k]
            else:
                self._route_ranges[k] = sorted((float(a), float(b)) for a, b in ranges)

        self._boundaries = {}
        for pair, entries in (boundaries or {}).items():
            lo, hi = pair
            if not self._adjacent(lo, hi):
                raise ValueError(f"boundary {pair} is not between adjacent lanes")
            for (_, _, perm) in entries:
                if perm not in _PERMISSIONS:
                    raise ValueError(f"unknown boundary permission {perm!r}")
            self._boundaries[(lo, hi)] = sorted(entries, key=lambda e: e[0])

    # -- geometry ---------------------------------------------------------

    def _adjacent(self, a: int, b: int) -> bool:
        if b == a + 1:
            return True
        return self.lateral_wrap and a == self.n_lanes - 1 and b == 0

    def _segment_at(self, s: float) -> _Segment:
        segs = self._segments
        if s <= segs[0].s0:
            return segs[0]
        for seg in segs:
            if s < seg.s0 + seg.length - _EPS:
                return seg
        return segs[-1]

    def lane_offset(self, lane: int) -> float:
        return lane * self.w0

    def ref_pose(self, s: float):
        """(x, y, theta, kappa) of the reference line at arclength s."""
        seg = self._segment_at(s)
        x, y, th = seg.pose(s)
        return x, y, th, seg.kappa

    def lane_pose(self, lane: int, s: float):
        """(x, y, theta, kappa) of a lane center at arclength s."""
        x, y, th, kr = self.ref_pose(s)
        off = self.lane_offset(lane)
        kl = kr / (1.0 - off * kr) if abs(1.0 - off * kr) > 1e-9 else 0.0
        return (x - off * math.sin(th), y + off * math.cos(th), th, kl)

    def frenet(self, point) -> tuple:
        """Continuous (s, l) of an arbitrary point; extrapolates past the ends."""
        px, py = point
        best = None
        n = len(self._segments)
        for i, seg in enumerate(self._segments):
            u, l = seg.project(px, py)
            lo = -math.inf if i == 0 else 0.0
            hi = math.inf if i == n - 1 else seg.length
            if lo - _EPS <= u <= hi + _EPS:
                cand = (abs(l), seg.s0 + u, l)
                if best is None or cand[0] < best[0]:
                    best = cand
        if best is None:
            # Point sits in the wedge at a segment joint; fall back to the
            # closest clamped segment end.
            for i, seg in enumerate(self._segments):
                u, l = seg.project(px, py)
                uc = min(max(u, 0.0), seg.length)
                x, y, _ = seg.pose(seg.s0 + uc)
                cand = (math.hypot(px - x, py - y), seg.s0 + uc, l)
                if best is None or cand[0] < best[0]:
                    best = cand
        return best[1], best[2]

    # -- lane structure ---------------------------------------------------

    def lane_range_index(self, lane: int, s: float) -> Optional[int]:
        """Index of the accessible range containing s, or None."""
        for i, (lo, hi) in enumerate(self._lane_ranges.get(lane, ())):
            if lo - _EPS <= s <= hi + _EPS:
                return i
        return None

    def lane_exists(self, lane: int, s: float) -> bool:
        return 0 <= lane < self.n_lanes and self.lane_range_index(lane, s) is not None

    def boundary_permission(self, lower: int, upper: int, s: float) -> str:
        entries = self._boundaries.get((lower, upper))
        if entries is None:
            return PERM_BOTH
        # A shared breakpoint belongs to the later segment.
        for (lo, hi, perm) in reversed(entries):
            if lo - _EPS <= s <= hi + _EPS:
                return perm
        return PERM_BOTH

    def _change_allowed(self, from_lane: int, to_lane: int, s: float) -> bool:
        if self._adjacent(from_lane, to_lane):
            perm = self.boundary_permission(from_lane, to_lane, s)
            return perm in (PERM_BOTH, PERM_UP)
        if self._adjacent(to_lane, from_lane):
            perm = self.boundary_permission(to_lane, from_lane, s)
            return perm in (PERM_BOTH, PERM_DOWN)
        return False

    def left_lane(self, lane: int) -> Optional[int]:
        if lane + 1 < self.n_lanes:
            return lane + 1
        return 0 if (self.lateral_wrap and self.n_lanes > 1) else None

    def right_lane(self, lane: int) -> Optional[int]:
        if lane - 1 >= 0:
            return lane - 1
        return self.n_lanes - 1 if (self.lateral_wrap and self.n_lanes > 1) else None

    # -- waypoint construction -------------------------------------------

    def waypoint(self, lane: int, s: float) -> Waypoint:
        if not (0 <= lane < self.n_lanes):
            raise ValueError(f"lane {lane} out of range")
        x, y, th, kappa = self.lane_pose(lane, s)
        return Waypoint(lane_id=lane, s_mm=round(s * 1000.0),
                        x=x, y=y, theta=th, kappa=kappa,
                        s=s, l=self.lane_offset(lane))

    # -- the four map queries ----------------------------------------------

    def front_waypoints(self, p: Waypoint, x: float) -> list:
        """Waypoints exactly x meters ahead along each successor lane."""
        s2 = p.s + x
        idx = self.lane_range_index(p.lane_id, p.s)
        if idx is None or self.lane_range_index(p.lane_id, s2) != idx:
            return []
        return [self.waypoint(p.lane_id, s2)]

    def left_waypoint(self, p: Waypoint) -> Optional[Waypoint]:
        lane = self.left_lane(p.lane_id)
        if lane is None or not self.lane_exists(lane, p.s):
            return None
        if not self._change_allowed(p.lane_id, lane, p.s):
            return None
        return self.waypoint(lane, p.s)

    def right_waypoint(self, p: Waypoint) -> Optional[Waypoint]:
        lane = self.right_lane(p.lane_id)
        if lane is None or not self.lane_exists(lane, p.s):
            return None
        if not self._change_allowed(p.lane_id, lane, p.s):
            return None
        return self.waypoint(lane, p.s)

    def on_route(self, p: Waypoint) -> bool:
        if p.lane_id not in self.route_lanes or not self.lane_exists(p.lane_id, p.s):
            return False
        for (lo, hi) in self._route_ranges.get(p.lane_id, ()):
            if lo - _EPS <= p.s <= hi + _EPS:
                return True
        return False

    def route_end(self, lane: int, s: float) -> Optional[float]:
        """End of the route range containing s on this lane, if any."""
        for (lo, hi) in self._route_ranges.get(lane, ()):
            if lo - _EPS <= s <= hi + _EPS:
                return hi
        return None
