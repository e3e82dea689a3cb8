"""Directed-graph map of the local road.

Vertices are waypoints sampled every ``r0`` meters along lane centers;
directed edges connect each vertex to at most three neighbors: front (the
next waypoint on the same lane, metric length r0), left and right (the
adjacent-lane waypoints at the same arclength, metric length w0, present
only where a lane change in that direction is legal). The graph supports
incremental extension and shortening, vehicle registration into an
occupancy registry, nearest-vertex Frenet lookup, and exact shortest-path
length/count queries used by the planner's traffic-rule constraints.

Vertex identity is the pair ``(lane_id, s_mm)`` with ``s_mm`` the
millimeter-rounded arclength, which makes rebuilt windows comparable
key-by-key.
"""
from __future__ import annotations

import heapq
import json
import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Set, Tuple

FRONT = "front"
LEFT = "left"
RIGHT = "right"
EDGE_KINDS = (FRONT, LEFT, RIGHT)

DEFAULT_R0 = 1.0
DEFAULT_W0 = 3.7
DEFAULT_RANGE_BACK = 50.0
DEFAULT_RANGE_AHEAD = 100.0
OCCUPANCY_MARGIN = 0.5
PERCEPTION_RANGE = 100.0

Key = Tuple[int, int]


@dataclass(frozen=True)
class Waypoint:
    """A lane-center sample: pose, curvature, and road-frame coordinates."""

    lane_id: int
    s_mm: int
    x: float
    y: float
    theta: float
    kappa: float
    s: float
    l: float

    @property
    def key(self) -> Key:
        return (self.lane_id, self.s_mm)


class MapError(ValueError):
    pass


class LaneGraph:
    """Mutable container; the module-level operations return fresh copies."""

    def __init__(self, provider, r0: float, w0: float, rm: float):
        self.provider = provider
        self.r0 = float(r0)
        self.w0 = float(w0)
        self.rm = float(rm)
        self.r0_mm = round(self.r0 * 1000.0)
        self.vertices: Dict[Key, Waypoint] = {}
        self.out_edges: Dict[Key, Dict[str, Key]] = {}
        self.in_edges: Dict[Key, Dict[str, Key]] = {}
        self.ranges: Dict[Key, float] = {}
        self.entrance_set: Set[Key] = set()
        self.exit_set: Set[Key] = set()
        self.occupancy: Dict[Key, Set] = {}
        self.vehicle_vertices: Dict[object, Set[Key]] = {}
        self.vehicle_info: Dict[object, tuple] = {}
        self.margin = OCCUPANCY_MARGIN
        self._lane_sorted: Dict[int, list] = {}
        self._runs: Dict[Key, int] = {}
        self._dphi_cache: Dict[tuple, tuple] = {}
        self._tables = None  # lazily built simulation tables

    # -- bookkeeping -------------------------------------------------------

    @property
    def n_lanes(self) -> int:
        return self.provider.n_lanes

    @property
    def lateral_wrap(self) -> bool:
        return getattr(self.provider, "lateral_wrap", False)

    def lane_offset(self, lane: int) -> float:
        return self.provider.lane_offset(lane)

    def s_bounds(self) -> Tuple[float, float]:
        if not self.vertices:
            raise MapError("empty graph")
        lo = min(k[1] for k in self.vertices) / 1000.0
        hi = max(k[1] for k in self.vertices) / 1000.0
        return lo, hi

    def _invalidate(self):
        self._lane_sorted = {}
        self._runs = {}
        self._dphi_cache = {}
        self._tables = None

    def _add_vertex(self, wp: Waypoint, rng: float):
        existing = self.vertices.get(wp.key)
        if existing is not None:
            if (abs(existing.x - wp.x) > 1e-6 or abs(existing.y - wp.y) > 1e-6
                    or abs(existing.theta - wp.theta) > 1e-6):
                raise MapError(f"provider returned conflicting poses for vertex {wp.key}")
            return
        self.vertices[wp.key] = wp
        self.out_edges[wp.key] = {}
        self.in_edges[wp.key] = {}
        self.ranges[wp.key] = rng

    def _add_edge(self, src: Key, dst: Key, kind: str):
        self.out_edges[src][kind] = dst
        self.in_edges[dst][kind] = src

    def _recompute_entrance_exit(self):
        self.entrance_set = {k for k in self.vertices if FRONT not in self.in_edges[k]}
        self.exit_set = {k for k in self.vertices if FRONT not in self.out_edges[k]}

    def lane_sorted(self, lane: int) -> list:
        """Sorted s_mm values of this lane's vertices."""
        if not self._lane_sorted:
            by_lane: Dict[int, list] = {}
            for (ln, s_mm) in self.vertices:
                by_lane.setdefault(ln, []).append(s_mm)
            for values in by_lane.values():
                values.sort()
            self._lane_sorted = by_lane
        return self._lane_sorted.get(lane, [])

    def run_id(self, key: Key) -> int:
        """Contiguous front-connected run of a vertex within its lane."""
        if not self._runs:
            runs: Dict[Key, int] = {}
            next_id = 0
            for lane in sorted({k[0] for k in self.vertices}):
                prev_mm = None
                for s_mm in self.lane_sorted(lane):
                    key2 = (lane, s_mm)
                    if (prev_mm is not None and s_mm - prev_mm == self.r0_mm
                            and self.out_edges[(lane, prev_mm)].get(FRONT) == key2):
                        runs[key2] = runs[(lane, prev_mm)]
                    else:
                        next_id += 1
                        runs[key2] = next_id
                    prev_mm = s_mm
            self._runs = runs
        return self._runs[key]

    def lane_distance(self, a: Waypoint, b: Waypoint) -> int:
        """Lane-index separation, shortest way around on wrapped roads."""
        d = abs(b.lane_id - a.lane_id)
        if self.lateral_wrap and self.n_lanes > 1:
            d = min(d, self.n_lanes - d)
        return d

    # -- copies ------------------------------------------------------------

    def clone(self) -> "LaneGraph":
        g = LaneGraph(self.provider, self.r0, self.w0, self.rm)
        g.vertices = dict(self.vertices)
        g.out_edges = {k: dict(v) for k, v in self.out_edges.items()}
        g.in_edges = {k: dict(v) for k, v in self.in_edges.items()}
        g.ranges = dict(self.ranges)
        g.entrance_set = set(self.entrance_set)
        g.exit_set = set(self.exit_set)
        g.occupancy = {k: set(v) for k, v in self.occupancy.items()}
        g.vehicle_vertices = {k: set(v) for k, v in self.vehicle_vertices.items()}
        g.vehicle_info = dict(self.vehicle_info)
        g.margin = self.margin
        return g


def _bfs_grow(graph: LaneGraph, seeds: Iterable[Key], rm: float):
    """Alg.-1 style breadth-first growth from the given seed vertices."""
    provider = graph.provider
    r0 = graph.r0
    queue = deque(sorted(seeds))
    while queue:
        key = queue.popleft()
        p = graph.vertices[key]
        rng = graph.ranges[key]

        # Forward extension.
        candidates = [f for f in provider.front_waypoints(p, r0) if provider.on_route(f)]
        if candidates:
            pf = candidates[0]
            if pf.key not in graph.vertices and rng + r0 <= rm + 1e-9:
                graph._add_vertex(pf, rng + r0)
                queue.append(pf.key)
            if pf.key in graph.vertices:
                graph._add_edge(key, pf.key, FRONT)

        # Lateral extension; new lateral vertices inherit the source range
        # so sideways growth never outruns the longitudinal window.
        for kind, q in ((LEFT, provider.left_waypoint(p)),
                        (RIGHT, provider.right_waypoint(p))):
            if q is None or not provider.on_route(q):
                continue
            if q.key not in graph.vertices:
                graph._add_vertex(q, rng)
                queue.append(q.key)
            graph._add_edge(key, q.key, kind)


def build(provider, p0: Waypoint, rm: float, r0: float = DEFAULT_R0) -> LaneGraph:
    """Construct the directed-graph map by BFS from the starting waypoint."""
    if r0 <= 0 or rm < r0:
        raise MapError("need 0 < r0 <= rm")
    if not provider.on_route(p0):
        raise MapError("starting waypoint is off route")
    graph = LaneGraph(provider, r0=r0, w0=provider.w0, rm=rm)
    graph._add_vertex(p0, 0.0)
    _bfs_grow(graph, [p0.key], rm)
    graph._recompute_entrance_exit()
    return graph


def extend(graph: LaneGraph, provider, delta: float) -> LaneGraph:
    """Grow the map forward by delta meters, seeding from the exit set."""
    _check_multiple(delta, graph.r0)
    g = graph.clone()
    g.rm = graph.rm + delta
    seeds = set(g.exit_set)
    # Re-seed every frontier vertex so newly legal lateral links appear too.
    _bfs_grow(g, seeds, g.rm)
    g._recompute_entrance_exit()
    g._invalidate()
    return g


def shorten(graph: LaneGraph, delta: float) -> LaneGraph:
    """Remove delta meters of map from the entrance side."""
    _check_multiple(delta, graph.r0)
    lo, hi = graph.s_bounds()
    if delta >= hi - lo:
        raise MapError(f"cannot shorten by {delta}; map range is {hi - lo}")
    g = graph.clone()
    cutoff_mm = round((lo + delta) * 1000.0)
    doomed = [k for k in g.vertices if k[1] < cutoff_mm]
    for key in doomed:
        for kind, dst in g.out_edges[key].items():
            g.in_edges[dst].pop(kind, None)
        for kind, src in g.in_edges[key].items():
            g.out_edges[src].pop(kind, None)
        del g.vertices[key]
        del g.out_edges[key]
        del g.in_edges[key]
        del g.ranges[key]
        occupants = g.occupancy.pop(key, set())
        for vid in occupants:
            g.vehicle_vertices[vid].discard(key)
    g._recompute_entrance_exit()
    g._invalidate()
    return g


def _check_multiple(delta: float, r0: float):
    if delta <= 0:
        raise MapError("delta must be positive")
    ratio = delta / r0
    if abs(ratio - round(ratio)) > 1e-9:
        raise MapError(f"delta {delta} is not a multiple of the resolution {r0}")


# -- Frenet projection ------------------------------------------------------

def frenet_waypoint(graph: LaneGraph, point) -> Waypoint:
    """Euclidean-nearest vertex; ties break toward the lowest vertex id."""
    if not graph.vertices:
        raise MapError("empty graph")
    px, py = point
    s_guess, _ = graph.provider.frenet(point)
    window_mm = round((2.0 * graph.w0 + 2.0 * graph.r0) * 1000.0)
    center_mm = round(s_guess * 1000.0)
    best = None
    for lane in sorted({k[0] for k in graph.vertices}):
        s_list = graph.lane_sorted(lane)
        i_lo = bisect_left(s_list, center_mm - window_mm)
        i_hi = bisect_left(s_list, center_mm + window_mm)
        for s_mm in s_list[i_lo:i_hi]:
            wp = graph.vertices[(lane, s_mm)]
            d2 = (wp.x - px) ** 2 + (wp.y - py) ** 2
            cand = (d2, wp.key)
            if best is None or cand < best:
                best = cand
    if best is None:
        # Point far outside the local window; fall back to a full scan.
        for key in sorted(graph.vertices):
            wp = graph.vertices[key]
            d2 = (wp.x - px) ** 2 + (wp.y - py) ** 2
            cand = (d2, key)
            if best is None or cand < best:
                best = cand
    return graph.vertices[best[1]]


def frenet(graph: LaneGraph, point) -> Tuple[float, float]:
    """(s, l) of the nearest vertex to the point."""
    wp = frenet_waypoint(graph, point)
    return wp.s, wp.l


# -- shortest paths ----------------------------------------------------------

def _as_key(graph: LaneGraph, p) -> Key:
    if isinstance(p, Waypoint):
        if p.key in graph.vertices:
            return p.key
        return frenet_waypoint(graph, (p.x, p.y)).key
    return frenet_waypoint(graph, p).key


def _edge_weights_um(graph: LaneGraph) -> Dict[str, int]:
    return {FRONT: round(graph.r0 * 1e6),
            LEFT: round(graph.w0 * 1e6),
            RIGHT: round(graph.w0 * 1e6)}


def _dijkstra_count(graph: LaneGraph, src: Key, dst: Key,
                    max_dist_um: Optional[int] = None) -> Tuple[float, int]:
    """Exact shortest-path length and path count via integer weights."""
    if src == dst:
        return 0.0, 1
    weights = _edge_weights_um(graph)
    dist: Dict[Key, int] = {src: 0}
    counts: Dict[Key, int] = {src: 1}
    settled: Set[Key] = set()
    heap = [(0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u == dst:
            return d / 1e6, counts[u]
        if max_dist_um is not None and d > max_dist_um:
            break
        for kind, v in graph.out_edges[u].items():
            nd = d + weights[kind]
            old = dist.get(v)
            if old is None or nd < old:
                dist[v] = nd
                counts[v] = counts[u]
                heapq.heappush(heap, (nd, v))
            elif nd == old and v not in settled:
                counts[v] += counts[u]
    return math.inf, 0


def shortest_path_length(graph: LaneGraph, p, q) -> float:
    """Metric length of the shortest directed path; +inf when unreachable."""
    d, _ = _cached_dphi(graph, _as_key(graph, p), _as_key(graph, q))
    return d


def shortest_path_count(graph: LaneGraph, p, q) -> int:
    """Number of distinct shortest directed paths (exact integer)."""
    _, phi = _cached_dphi(graph, _as_key(graph, p), _as_key(graph, q))
    return phi


def _cached_dphi(graph: LaneGraph, src: Key, dst: Key) -> Tuple[float, int]:
    cached = graph._dphi_cache.get((src, dst))
    if cached is None:
        cached = _dijkstra_count(graph, src, dst)
        graph._dphi_cache[(src, dst)] = cached
    return cached


# -- occupancy registry ------------------------------------------------------

def register(graph: LaneGraph, vehicle_id, state, footprint) -> Set[Key]:
    """Mark the vertices covered by a vehicle's inflated footprint.

    A vertex is occupied when its center falls inside the vehicle's
    oriented rectangle inflated by the safety margin; a vehicle always
    occupies at least its nearest vertex.
    """
    if vehicle_id in graph.vehicle_vertices:
        deregister(graph, vehicle_id)
    margin = graph.margin
    hl = footprint.length / 2.0 + margin
    hw = footprint.width / 2.0 + margin
    half_diag = math.hypot(hl, hw)
    ct, st = math.cos(state.theta), math.sin(state.theta)

    s_v, l_v = graph.provider.frenet((state.x, state.y))
    occupied: Set[Key] = set()
    window_mm = round((half_diag + graph.r0) * 1000.0)
    center_mm = round(s_v * 1000.0)
    nearest = None
    for lane in sorted({k[0] for k in graph.vertices}):
        if abs(graph.lane_offset(lane) - l_v) > half_diag + graph.w0:
            continue
        s_list = graph.lane_sorted(lane)
        i_lo = bisect_left(s_list, center_mm - window_mm)
        i_hi = bisect_left(s_list, center_mm + window_mm)
        for s_mm in s_list[i_lo:i_hi]:
            wp = graph.vertices[(lane, s_mm)]
            dx = wp.x - state.x
            dy = wp.y - state.y
            local_x = dx * ct + dy * st
            local_y = -dx * st + dy * ct
            d2 = dx * dx + dy * dy
            if nearest is None or (d2, wp.key) < nearest[:2]:
                nearest = (d2, wp.key)
            if abs(local_x) <= hl and abs(local_y) <= hw:
                occupied.add(wp.key)

    if not occupied:
        if nearest is None:
            near_wp = frenet_waypoint(graph, (state.x, state.y))
            d2 = (near_wp.x - state.x) ** 2 + (near_wp.y - state.y) ** 2
            nearest = (d2, near_wp.key)
        limit = half_diag + 2.0 * graph.w0
        if nearest[0] > limit * limit:
            raise MapError(f"vehicle {vehicle_id!r} is fully off the map")
        occupied.add(nearest[1])

    for key in occupied:
        graph.occupancy.setdefault(key, set()).add(vehicle_id)
    graph.vehicle_vertices[vehicle_id] = occupied
    graph.vehicle_info[vehicle_id] = (state, footprint)
    return set(occupied)


def deregister(graph: LaneGraph, vehicle_id):
    for key in graph.vehicle_vertices.pop(vehicle_id, set()):
        occupants = graph.occupancy.get(key)
        if occupants is not None:
            occupants.discard(vehicle_id)
            if not occupants:
                del graph.occupancy[key]
    graph.vehicle_info.pop(vehicle_id, None)


def _occupied_by_other(graph: LaneGraph, key: Key, vehicle_id):
    for vid in graph.occupancy.get(key, ()):
        if vid != vehicle_id:
            return vid
    return None


def _walk(graph: LaneGraph, vehicle_id, start: Key, forward: bool,
          max_range: float):
    """First other vehicle found walking front edges from ``start``."""
    edges = graph.out_edges if forward else graph.in_edges
    key = start
    walked = 0.0
    while walked < max_range:
        nxt = edges[key].get(FRONT)
        if nxt is None:
            return None
        walked += graph.r0
        key = nxt
        vid = _occupied_by_other(graph, key, vehicle_id)
        if vid is not None:
            return vid
    return None


def _gap_between(graph: LaneGraph, vid_a, vid_b) -> float:
    """Bumper-to-bumper arclength gap from a (rear) to b (front)."""
    state_a, fp_a = graph.vehicle_info[vid_a]
    state_b, fp_b = graph.vehicle_info[vid_b]
    s_a, _ = graph.provider.frenet((state_a.x, state_a.y))
    s_b, _ = graph.provider.frenet((state_b.x, state_b.y))
    return (s_b - s_a) - (fp_a.length + fp_b.length) / 2.0


def leader_of(graph: LaneGraph, vehicle_id, lane: str = "same",
              max_range: float = PERCEPTION_RANGE):
    """Nearest vehicle ahead on the same or an adjacent lane.

    Returns (vehicle_id, bumper_to_bumper_gap) or None. The walk starts at
    the vehicle's frontmost occupied vertex, shifted through the lateral
    edge first for the left/right variants.
    """
    return _neighbor_of(graph, vehicle_id, lane, forward=True, max_range=max_range)


def follower_of(graph: LaneGraph, vehicle_id, lane: str = "same",
                max_range: float = PERCEPTION_RANGE):
    """Mirror of leader_of, walking rearward from the rearmost vertex."""
    return _neighbor_of(graph, vehicle_id, lane, forward=False, max_range=max_range)


def _neighbor_of(graph: LaneGraph, vehicle_id, lane: str, forward: bool,
                 max_range: float):
    if vehicle_id not in graph.vehicle_vertices:
        raise MapError(f"vehicle {vehicle_id!r} is not registered")
    keys = graph.vehicle_vertices[vehicle_id]
    anchor = max(keys, key=lambda k: (k[1], -k[0])) if forward else \
        min(keys, key=lambda k: (k[1], k[0]))
    if lane == "left":
        anchor = graph.out_edges[anchor].get(LEFT)
    elif lane == "right":
        anchor = graph.out_edges[anchor].get(RIGHT)
    elif lane != "same":
        raise ValueError(f"unknown lane selector {lane!r}")
    if anchor is None:
        return None
    vid = _occupied_by_other(graph, anchor, vehicle_id)
    if vid is None:
        vid = _walk(graph, vehicle_id, anchor, forward, max_range)
    if vid is None:
        return None
    gap = _gap_between(graph, vehicle_id, vid) if forward else \
        _gap_between(graph, vid, vehicle_id)
    return vid, gap


# -- export -------------------------------------------------------------------

def to_json_dict(graph: LaneGraph, vehicles: Optional[dict] = None) -> dict:
    data = {
        "version": 1,
        "r0": graph.r0,
        "w0": graph.w0,
        "n_lanes": graph.n_lanes,
        "lateral_wrap": graph.lateral_wrap,
        "vertices": [
            {
                "id": list(key),
                "x": wp.x, "y": wp.y, "theta": wp.theta, "kappa": wp.kappa,
                "s": wp.s, "l": wp.l,
            }
            for key, wp in sorted(graph.vertices.items())
        ],
        "edges": [
            {"from": list(src), "to": list(dst), "kind": kind,
             "length": graph.r0 if kind == FRONT else graph.w0}
            for src, edges in sorted(graph.out_edges.items())
            for kind, dst in sorted(edges.items())
        ],
    }
    if vehicles:
        data["vehicles"] = vehicles
    return data


def dump_json(graph: LaneGraph, path, vehicles: Optional[dict] = None):
    with open(path, "w") as fh:
        json.dump(to_json_dict(graph, vehicles), fh, indent=1)
