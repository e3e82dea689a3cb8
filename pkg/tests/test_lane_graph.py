import math
from fractions import Fraction

import numpy as np
import pytest

from felp import lane_graph
from felp.dynamics import VehicleFootprint, VehicleState
from felp.lane_graph import (FRONT, LEFT, RIGHT, MapError, build, deregister, extend,
                             follower_of, frenet, frenet_waypoint, leader_of, register,
                             shorten, shortest_path_count, shortest_path_length,
                             to_json_dict)
from felp.road import SyntheticRoad

from conftest import FP


def graph_signature(g):
    """Canonical (vertices, edges) signature for equality checks."""
    verts = frozenset(g.vertices)
    edges = frozenset((src, dst, kind)
                      for src, out in g.out_edges.items()
                      for kind, dst in out.items())
    return verts, edges


# -- construction -------------------------------------------------------------

def test_single_lane_chain():
    road = SyntheticRoad(n_lanes=1, lane_width=3.7, length=100.0)
    p0 = road.waypoint(0, 0.0)
    g = build(road, p0, rm=10.0, r0=1.0)
    assert len(g.vertices) == 11
    assert g.entrance_set == {p0.key}
    assert g.exit_set == {(0, 10000)}
    # single front chain
    for i in range(10):
        assert g.out_edges[(0, i * 1000)][FRONT] == (0, (i + 1) * 1000)


def test_solid_boundary_blocks_and_isolates():
    road = SyntheticRoad(n_lanes=3, lane_width=3.7, length=60.0,
                         boundaries={(0, 1): [(0.0, 60.0, "none")]})
    g = build(road, road.waypoint(0, 0.0), rm=40.0, r0=1.0)
    # No lateral edge crosses the solid boundary, and the lanes beyond it
    # are unreachable from the start lane, so they hold no vertices.
    assert all(k[0] == 0 for k in g.vertices)
    assert all(LEFT not in out for out in g.out_edges.values())


def test_one_way_boundary_single_direction():
    road = SyntheticRoad(n_lanes=2, lane_width=3.7, length=60.0,
                         boundaries={(0, 1): [(0.0, 60.0, "up")]})
    g = build(road, road.waypoint(0, 0.0), rm=40.0, r0=1.0)
    ups = sum(1 for out in g.out_edges.values() if LEFT in out)
    downs = sum(1 for out in g.out_edges.values() if RIGHT in out)
    assert ups > 0 and downs == 0


def test_on_ramp_initial_section_excluded():
    # The ramp lane exists from s=20 but may only be entered from s=40 on;
    # its initial stretch is unreachable from the highway and gets no
    # vertices.
    road = SyntheticRoad(
        n_lanes=2, lane_width=3.7, length=120.0,
        lane_ranges={0: [(20.0, 120.0)], 1: [(0.0, 120.0)]},
        boundaries={(0, 1): [(20.0, 40.0, "none"), (40.0, 120.0, "both")]})
    g = build(road, road.waypoint(1, 0.0), rm=100.0, r0=1.0)
    ramp_vertices = sorted(k[1] for k in g.vertices if k[0] == 0)
    assert ramp_vertices, "merge section must be reachable"
    assert min(ramp_vertices) == 40000
    # highway lane is fully covered
    assert sum(1 for k in g.vertices if k[0] == 1) == 101


def test_off_route_start_rejected():
    road = SyntheticRoad(n_lanes=2, lane_width=3.7, length=60.0,
                         route_lanes=[1])
    with pytest.raises(MapError):
        build(road, road.waypoint(0, 0.0), rm=40.0, r0=1.0)


def test_degree_bounds(graph3):
    for key in graph3.vertices:
        assert len(graph3.out_edges[key]) <= 3
        assert len(graph3.in_edges[key]) <= 3
        for kind in graph3.out_edges[key]:
            assert kind in (FRONT, LEFT, RIGHT)


# -- incremental update --------------------------------------------------------

def test_extend_chain():
    road = SyntheticRoad(n_lanes=1, lane_width=3.7, length=100.0)
    g = build(road, road.waypoint(0, 0.0), rm=10.0, r0=1.0)
    g2 = extend(g, road, 5.0)
    assert len(g2.vertices) == 16
    assert g2.entrance_set == g.entrance_set


def test_extend_matches_fresh_build():
    road = SyntheticRoad(
        n_lanes=3, lane_width=3.7, length=300.0,
        lane_ranges={0: [(0.0, 80.0), (120.0, 300.0)]},
        boundaries={(1, 2): [(0.0, 40.0, "none"), (40.0, 300.0, "both")]})
    p0 = road.waypoint(1, 0.0)
    g = build(road, p0, rm=100.0, r0=1.0)
    g_ext = extend(g, road, 30.0)
    g_fresh = build(road, p0, rm=130.0, r0=1.0)
    assert graph_signature(g_ext) == graph_signature(g_fresh)


def test_extend_rejects_fractional_delta():
    road = SyntheticRoad(n_lanes=1, lane_width=3.7, length=100.0)
    g = build(road, road.waypoint(0, 0.0), rm=10.0, r0=1.0)
    with pytest.raises(MapError):
        extend(g, road, 0.5)


def test_shorten_chain():
    road = SyntheticRoad(n_lanes=1, lane_width=3.7, length=100.0)
    g = build(road, road.waypoint(0, 0.0), rm=10.0, r0=1.0)
    g2 = shorten(g, 3.0)
    assert len(g2.vertices) == 8
    assert g2.entrance_set == {(0, 3000)}


def test_shorten_matches_shifted_build():
    road = SyntheticRoad(n_lanes=3, lane_width=3.7, length=300.0)
    g = build(road, road.waypoint(1, 0.0), rm=100.0, r0=1.0)
    g2 = shorten(extend(g, road, 20.0), 20.0)
    fresh = build(road, road.waypoint(1, 20.0), rm=100.0, r0=1.0)
    assert graph_signature(g2) == graph_signature(fresh)


def test_overshorten_rejected():
    road = SyntheticRoad(n_lanes=1, lane_width=3.7, length=100.0)
    g = build(road, road.waypoint(0, 0.0), rm=10.0, r0=1.0)
    with pytest.raises(MapError):
        shorten(g, 10.0)


# -- Frenet projection -----------------------------------------------------------

def test_frenet_vertex_identity(graph3):
    wp = graph3.vertices[(1, 50000)]
    assert frenet(graph3, (wp.x, wp.y)) == (wp.s, wp.l)


def test_frenet_midpoint_tie_break(graph3):
    # Exactly between (1, 50) and (1, 51): the lower vertex id wins.
    s, l = frenet(graph3, (50.5, 3.7))
    assert (s, l) == (50.0, 3.7)


def test_frenet_random_against_scan(straight3, graph3):
    rng = np.random.default_rng(5)
    for _ in range(25):
        p = (rng.uniform(0, 200), rng.uniform(-2, 10))
        got = frenet_waypoint(graph3, p)
        best = min(graph3.vertices.values(),
                   key=lambda wp: ((wp.x - p[0]) ** 2 + (wp.y - p[1]) ** 2, wp.key))
        assert got.key == best.key


def test_frenet_empty_graph(straight3):
    g = build(straight3, straight3.waypoint(0, 0.0), rm=1.0, r0=1.0)
    g.vertices.clear()
    with pytest.raises(MapError):
        frenet(g, (0.0, 0.0))


# -- shortest paths ---------------------------------------------------------------

def fig2b_graph():
    """Three lanes where the lower boundary opens only at the far column:
    equal shortest lengths to both sides but three paths left, one right."""
    road = SyntheticRoad(
        n_lanes=3, lane_width=3.7, length=60.0,
        boundaries={(0, 1): [(0.0, 1.5, "none"), (1.5, 60.0, "both")]})
    g = build(road, road.waypoint(1, 0.0), rm=10.0, r0=1.0)
    a = g.vertices[(1, 0)]
    b = g.vertices[(2, 2000)]
    c = g.vertices[(0, 2000)]
    return g, a, b, c


def test_fig2b_values():
    g, a, b, c = fig2b_graph()
    w0, r0 = 3.7, 1.0
    assert shortest_path_length(g, a, b) == pytest.approx(w0 + 2 * r0)
    assert shortest_path_length(g, a, c) == pytest.approx(w0 + 2 * r0)
    assert shortest_path_count(g, a, b) == 3
    assert shortest_path_count(g, a, c) == 1


def test_d_phi_self(graph3):
    wp = graph3.vertices[(1, 40000)]
    assert shortest_path_length(graph3, wp, wp) == 0.0
    assert shortest_path_count(graph3, wp, wp) == 1


def test_unreachable(graph3):
    ahead = graph3.vertices[(1, 50000)]
    behind = graph3.vertices[(1, 10000)]
    assert shortest_path_length(graph3, ahead, behind) == math.inf
    assert shortest_path_count(graph3, ahead, behind) == 0


def enumerate_paths(g, src, dst):
    """Exhaustive DFS with branch-and-bound; exact arithmetic lengths."""
    weights = {FRONT: Fraction(g.r0), LEFT: Fraction(g.w0), RIGHT: Fraction(g.w0)}
    best = [None]
    counts = {}

    def dfs(node, length, visited):
        if best[0] is not None and length > best[0]:
            return
        if node == dst:
            if best[0] is None or length < best[0]:
                best[0] = length
                counts.clear()
            counts[length] = counts.get(length, 0) + 1
            return
        for kind, nxt in sorted(g.out_edges[node].items()):
            if nxt in visited:
                continue
            dfs(nxt, length + weights[kind], visited | {nxt})

    dfs(src, Fraction(0), {src})
    if best[0] is None:
        return math.inf, 0
    return float(best[0]), counts[best[0]]


def random_road(rng):
    n_lanes = int(rng.integers(2, 4))
    length = float(rng.integers(6, 14))
    lane_ranges = {}
    boundaries = {}
    for k in range(n_lanes):
        if rng.random() < 0.3:
            cut = float(rng.integers(2, max(3, int(length) - 2)))
            if rng.random() < 0.5:
                lane_ranges[k] = [(0.0, cut)]
            else:
                lane_ranges[k] = [(0.0, cut), (cut + 2.0, length)]
    for k in range(n_lanes - 1):
        perm = rng.choice(["both", "both", "up", "down", "none"])
        mid = float(rng.integers(1, max(2, int(length) - 1)))
        perm2 = rng.choice(["both", "none"])
        boundaries[(k, k + 1)] = [(0.0, mid, perm), (mid, length, perm2)]
    return SyntheticRoad(n_lanes=n_lanes, lane_width=3.7, length=length,
                         lane_ranges=lane_ranges or None,
                         boundaries=boundaries or None)


def test_d_phi_against_enumeration():
    rng = np.random.default_rng(21)
    tested = 0
    for _ in range(60):
        road = random_road(rng)
        start_lane = int(rng.integers(road.n_lanes))
        if not road.lane_exists(start_lane, 0.0):
            continue
        g = build(road, road.waypoint(start_lane, 0.0),
                  rm=road.length - 1.0, r0=1.0)
        if len(g.vertices) < 4 or len(g.vertices) > 60:
            continue
        keys = sorted(g.vertices)
        for _ in range(6):
            src = g.vertices[keys[rng.integers(len(keys))]]
            dst = g.vertices[keys[rng.integers(len(keys))]]
            d_ref, phi_ref = enumerate_paths(g, src.key, dst.key)
            assert shortest_path_length(g, src, dst) == pytest.approx(d_ref)
            assert shortest_path_count(g, src, dst) == phi_ref
            tested += 1
    assert tested >= 50


def test_quasi_metric_triangle(graph3):
    rng = np.random.default_rng(9)
    keys = sorted(graph3.vertices)
    for _ in range(40):
        p, q, r = (graph3.vertices[keys[rng.integers(len(keys))]] for _ in range(3))
        dpq = shortest_path_length(graph3, p, q)
        dqr = shortest_path_length(graph3, q, r)
        dpr = shortest_path_length(graph3, p, r)
        if math.isinf(dpq) or math.isinf(dqr):
            continue
        assert dpr <= dpq + dqr + 1e-9


def test_phi_consistency(graph3):
    rng = np.random.default_rng(13)
    keys = sorted(graph3.vertices)
    for _ in range(40):
        p = graph3.vertices[keys[rng.integers(len(keys))]]
        q = graph3.vertices[keys[rng.integers(len(keys))]]
        d = shortest_path_length(graph3, p, q)
        phi = shortest_path_count(graph3, p, q)
        assert (phi >= 1) == (d < math.inf)


# -- occupancy -------------------------------------------------------------------

def occupancy_oracle(g, state, footprint, margin=0.5):
    """Direct point-in-rectangle scan over every vertex."""
    hl = footprint.length / 2.0 + margin
    hw = footprint.width / 2.0 + margin
    ct, st = math.cos(state.theta), math.sin(state.theta)
    out = set()
    for key, wp in g.vertices.items():
        dx, dy = wp.x - state.x, wp.y - state.y
        lx = dx * ct + dy * st
        ly = -dx * st + dy * ct
        if abs(lx) <= hl and abs(ly) <= hw:
            out.add(key)
    return out


def test_register_centered_vehicle(graph3):
    state = VehicleState(x=80.0, y=3.7, theta=0.0, v=20.0)
    keys = register(graph3, "v1", state, FP)
    try:
        same_lane = sorted(k[1] for k in keys if k[0] == 1)
        assert len(same_lane) >= 5
        # consecutive stretch
        assert same_lane[-1] - same_lane[0] == (len(same_lane) - 1) * 1000
        assert keys == occupancy_oracle(graph3, state, FP)
    finally:
        deregister(graph3, "v1")


def test_register_straddling_vehicle(graph3):
    # Mid lane change the heading is diagonal, which stretches the
    # footprint's lateral reach across both lane centers.
    state = VehicleState(x=80.0, y=3.7 / 2.0, theta=0.25, v=20.0)
    keys = register(graph3, "v1", state, FP)
    try:
        lanes = {k[0] for k in keys}
        assert {0, 1} <= lanes
        assert keys == occupancy_oracle(graph3, state, FP)
    finally:
        deregister(graph3, "v1")


def test_register_degenerate_nearest_rule(graph3):
    # A tiny footprint with no margin placed between vertices still
    # occupies its nearest vertex.
    graph3.margin = 0.0
    try:
        state = VehicleState(x=80.4, y=3.7 + 0.3, theta=0.0, v=0.0)
        keys = register(graph3, "dot", state, VehicleFootprint(0.2, 0.2))
        assert keys == {(1, 80000)}
    finally:
        deregister(graph3, "dot")
        graph3.margin = 0.5


def test_register_off_map_rejected(graph3):
    with pytest.raises(MapError):
        register(graph3, "far", VehicleState(x=80.0, y=60.0, theta=0.0, v=0.0), FP)


def test_register_deregister_roundtrip(graph3):
    before = {k: set(v) for k, v in graph3.occupancy.items()}
    register(graph3, "tmp", VehicleState(x=90.0, y=0.0, theta=0.0, v=5.0), FP)
    deregister(graph3, "tmp")
    after = {k: set(v) for k, v in graph3.occupancy.items()}
    assert before == after


# -- leader and follower queries ----------------------------------------------------

def test_leader_gap(graph3):
    a = VehicleState(x=60.0, y=3.7, theta=0.0, v=20.0)
    b = VehicleState(x=90.0, y=3.7, theta=0.0, v=20.0)
    register(graph3, "a", a, FP)
    register(graph3, "b", b, FP)
    try:
        found = leader_of(graph3, "a", "same")
        assert found is not None
        vid, gap = found
        assert vid == "b"
        assert gap == pytest.approx(30.0 - FP.length, abs=1e-9)
        assert leader_of(graph3, "b", "same") is None
    finally:
        deregister(graph3, "a")
        deregister(graph3, "b")


def test_follower_mirror(graph3):
    a = VehicleState(x=60.0, y=3.7, theta=0.0, v=20.0)
    b = VehicleState(x=90.0, y=3.7, theta=0.0, v=20.0)
    register(graph3, "a", a, FP)
    register(graph3, "b", b, FP)
    try:
        found = follower_of(graph3, "b", "same")
        assert found is not None
        vid, gap = found
        assert vid == "a"
        assert gap == pytest.approx(30.0 - FP.length, abs=1e-9)
    finally:
        deregister(graph3, "a")
        deregister(graph3, "b")


def test_adjacent_lane_leader(graph3):
    ego = VehicleState(x=60.0, y=3.7, theta=0.0, v=20.0)
    left = VehicleState(x=80.0, y=7.4, theta=0.0, v=20.0)
    register(graph3, "e", ego, FP)
    register(graph3, "l", left, FP)
    try:
        found = leader_of(graph3, "e", "left")
        assert found is not None and found[0] == "l"
        assert leader_of(graph3, "e", "right") is None
    finally:
        deregister(graph3, "e")
        deregister(graph3, "l")


def test_empty_road_no_leader(graph3):
    register(graph3, "solo", VehicleState(x=60.0, y=0.0, theta=0.0, v=20.0), FP)
    try:
        assert leader_of(graph3, "solo", "same") is None
    finally:
        deregister(graph3, "solo")


# -- export ---------------------------------------------------------------------

def test_json_dump_shape(graph3):
    data = to_json_dict(graph3, vehicles={"0": {"length": 4.7, "width": 1.9}})
    assert data["version"] == 1
    assert len(data["vertices"]) == len(graph3.vertices)
    kinds = {e["kind"] for e in data["edges"]}
    assert kinds <= {FRONT, LEFT, RIGHT}
    front_lengths = {e["length"] for e in data["edges"] if e["kind"] == FRONT}
    assert front_lengths == {graph3.r0}
    assert data["vehicles"]["0"]["length"] == 4.7
