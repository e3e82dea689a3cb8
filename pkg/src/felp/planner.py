"""Graph search over motion primitives.

Three variants share one expansion loop. The exhaustive search keeps every
simulated traffic state and explores all constraint-satisfying options
stage by stage. The constrained variant additionally allows at most one
lane change over the whole horizon (equivalently, every endpoint stays
within one lane width of the start lane). The reduced variant keeps a
single traffic state per lattice vertex, replacing it only when a cheaper
arrival appears, which trades optimality for a per-vertex state bound.

Each expansion solves a boundary problem for the connecting spiral and
forward-simulates the full traffic state along it; nothing is cached
between expansions except the geometry of repeated boundary problems,
so the rollout counter reflects the work the search actually does.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import dynamics, engine, idm as idm_mod, lane_graph, simulation, spiral
from .idm import IdmParams
from .lane_graph import LaneGraph, Waypoint
from .simulation import CostConfig, TrafficState
from .spiral import ConformalOption, PathEndPoint, SpiralInfeasibleError, SpiralPath

VARIANTS = ("felp", "cfelp", "rfelp")
PREDICTIONS = ("idm", "cv")


class NoPlanError(RuntimeError):
    """Every first-stage option collided; the caller should fall back to
    in-lane braking."""


@dataclass(frozen=True)
class PlannerConfig:
    variant: str = "felp"
    prediction: str = "idm"
    s_m: float = 100.0
    n0: int = 20
    cost: CostConfig = field(default_factory=CostConfig)
    dt: float = simulation.DT
    t_max: float = simulation.T_MAX
    kappa_max: float = dynamics.KAPPA_MAX
    a_min: float = dynamics.A_MIN
    a_max: float = dynamics.A_MAX
    max_rollouts: int = 200_000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.prediction not in PREDICTIONS:
            raise ValueError(f"unknown prediction mode {self.prediction!r}")

    def n_stages(self, r0: float) -> int:
        stages = self.s_m / (self.n0 * r0)
        if abs(stages - round(stages)) > 1e-9:
            raise ValueError(
                f"horizon {self.s_m} is not a multiple of the primitive "
                f"length {self.n0 * r0}")
        return int(round(stages))


class Snapshot:
    """Search node: traffic state arrays at a lattice vertex."""

    __slots__ = ("veh", "time", "waypoint", "cost_to_come", "parent", "primitive",
                 "path", "stage", "lateral_moves", "changed", "reached", "dead",
                 "order", "anchor", "kappa_exit", "terminal_cost", "no_children",
                 "_template")

    def __init__(self, veh, time, waypoint, cost_to_come, parent, primitive,
                 path, stage, lateral_moves, changed, reached, order, anchor,
                 kappa_exit, template):
        self.veh = veh
        self.time = time
        self.waypoint = waypoint
        self.cost_to_come = cost_to_come
        self.parent = parent
        self.primitive = primitive
        self.path = path
        self.stage = stage
        self.lateral_moves = lateral_moves
        self.changed = changed
        self.reached = reached
        self.dead = False
        self.order = order
        self.anchor = anchor
        self.kappa_exit = kappa_exit
        self.terminal_cost = 0.0
        self.no_children = False
        self._template = template

    @property
    def traffic(self) -> TrafficState:
        """Traffic state at this node, rebuilt from the stored arrays."""
        from dataclasses import replace

        from .dynamics import VehicleState
        row = self.veh
        ego = VehicleState(x=row[0, 0], y=row[0, 1], theta=row[0, 2],
                           v=max(0.0, row[0, 3]))
        agents = tuple(
            replace(agent, state=VehicleState(x=row[i, 0], y=row[i, 1],
                                              theta=row[i, 2],
                                              v=max(0.0, row[i, 3])))
            for i, agent in enumerate(self._template.agents, start=1))
        return TrafficState(ego=ego, ego_footprint=self._template.ego_footprint,
                            agents=agents, time=self.time)

    def __repr__(self):
        return (f"Snapshot(stage={self.stage}, wp={self.waypoint.key}, "
                f"c={self.cost_to_come:.3f}, reached={self.reached})")


@dataclass
class SearchState:
    """Mutable S and Q of the search plus the reduced-variant index.

    The exhaustive and constrained variants pop in stage order (FIFO);
    exhaustive search makes the order irrelevant beyond memory. The
    reduced variant pops depth-first: stage-ordered popping would enqueue
    every arrival at a vertex before that vertex is ever expanded, so the
    replacement path of the modified extension rule would never fire and
    the variant would degenerate to minimal work. Depth-first order keeps
    replacements live while leaving free-road expansion counts unchanged
    (cost ties reject later arrivals).
    """

    snapshots: List[Snapshot] = field(default_factory=list)
    terminals: List[Snapshot] = field(default_factory=list)
    queue: deque = field(default_factory=deque)
    by_waypoint: Dict[tuple, Snapshot] = field(default_factory=dict)
    order: int = 0
    lifo: bool = False

    def next_order(self) -> int:
        self.order += 1
        return self.order

    def push(self, snap: Snapshot):
        self.queue.append(snap)

    def pop(self) -> Optional[Snapshot]:
        while self.queue:
            snap = self.queue.pop() if self.lifo else self.queue.popleft()
            if not snap.dead:
                return snap
        return None

    def live_snapshots(self) -> List[Snapshot]:
        return [s for s in self.snapshots if not s.dead]


def satisfy_constraints(graph: LaneGraph, p_prev: Waypoint, p_next: Waypoint,
                        cfg: PlannerConfig, p0: Optional[Waypoint] = None) -> bool:
    """Traffic-rule filter for one primitive between lattice vertices.

    The shortest-path count must equal the single-lane-change value
    (rejecting crossings that lack a legal lateral edge) and the shortest
    path length must not exceed one primitive plus one lane width
    (rejecting same-lane hops across a discontinuous road). The
    constrained variant also keeps endpoints within one lane of the
    start.
    """
    dlanes = graph.lane_distance(p_prev, p_next)
    expected_phi = dlanes * cfg.n0 + 1
    d = lane_graph.shortest_path_length(graph, p_prev, p_next)
    if d > cfg.n0 * graph.r0 + graph.w0 + 1e-9:
        return False
    phi = lane_graph.shortest_path_count(graph, p_prev, p_next)
    if phi != expected_phi:
        return False
    if cfg.variant == "cfelp" and p0 is not None:
        if graph.lane_distance(p0, p_next) > 1:
            return False
    return True


def extend_graph_felp(snapshot: Snapshot, endpoint: PathEndPoint, result,
                      search: SearchState) -> None:
    """Exhaustive-variant bookkeeping for one simulated option."""
    if result["collision"]:
        return
    child = result["child"]
    search.snapshots.append(child)
    if child.reached:
        search.push(child)
    else:
        search.terminals.append(child)


def extend_graph_rfelp(snapshot: Snapshot, endpoint: PathEndPoint, result,
                       search: SearchState) -> None:
    """Reduced-variant bookkeeping: one snapshot per lattice vertex."""
    if result["collision"]:
        return
    child = result["child"]
    if not child.reached:
        search.snapshots.append(child)
        search.terminals.append(child)
        return
    key = child.waypoint.key
    existing = search.by_waypoint.get(key)
    if existing is not None:
        if child.cost_to_come >= existing.cost_to_come:
            return
        existing.dead = True
    search.by_waypoint[key] = child
    search.snapshots.append(child)
    search.push(child)


@dataclass
class PlanResult:
    primitives: List[PathEndPoint]
    paths: List[SpiralPath]
    waypoints: List[Waypoint]
    total_cost: float
    expected_trace: List[TrafficState]
    stats: dict
    terminal: Snapshot


def backtrace(terminal: Snapshot) -> PlanResult:
    """Follow parent links to the root and order the primitives."""
    primitives: List[PathEndPoint] = []
    paths: List[SpiralPath] = []
    waypoints: List[Waypoint] = []
    node = terminal
    while node.parent is not None:
        if node.primitive is None or node.path is None:
            raise RuntimeError("broken parent chain in backtrace")
        primitives.append(node.primitive)
        paths.append(node.path)
        waypoints.append(node.waypoint)
        node = node.parent
    primitives.reverse()
    paths.reverse()
    waypoints.reverse()
    return PlanResult(primitives=primitives, paths=paths, waypoints=waypoints,
                      total_cost=terminal.cost_to_come + terminal.terminal_cost,
                      expected_trace=[], stats={}, terminal=terminal)


_BVP_CACHE: Dict[tuple, object] = {}


def _solve_cached(target: PathEndPoint, kappa0: float, kappa_max: float):
    key = (round(kappa0, 9), round(target.x, 6), round(target.y, 6),
           round(target.theta, 9), round(target.kappa, 9), round(kappa_max, 9))
    hit = _BVP_CACHE.get(key)
    if hit is None:
        try:
            hit = spiral.solve_bvp(target, kappa0, kappa_max=kappa_max)
        except SpiralInfeasibleError as exc:
            hit = exc
        if len(_BVP_CACHE) > 100_000:
            _BVP_CACHE.clear()
        _BVP_CACHE[key] = hit
    if isinstance(hit, SpiralInfeasibleError):
        raise hit
    return hit


def _endpoint_in_frame(pose: Tuple[float, float, float], wp: Waypoint) -> Optional[PathEndPoint]:
    px, py, pth = pose
    ct, st = math.cos(pth), math.sin(pth)
    dx = wp.x - px
    dy = wp.y - py
    x = dx * ct + dy * st
    if x <= 0.0:
        return None
    return PathEndPoint(x=x, y=-dx * st + dy * ct,
                        theta=dynamics.wrap_angle(wp.theta - pth), kappa=wp.kappa)


class _PlanContext:
    """Array buffers and kernel parameters reused across expansions."""

    def __init__(self, traffic: TrafficState, graph: LaneGraph, cfg: PlannerConfig,
                 ego_idm: IdmParams):
        self.graph = graph
        self.cfg = cfg
        self.tables = engine.build_tables(graph)
        veh, lane_idx, lengths, widths, idm_arr = simulation.traffic_arrays(traffic, graph)
        idm_arr[0] = (ego_idm.v0, ego_idm.T, ego_idm.s0, ego_idm.alpha, ego_idm.beta)
        self.veh0 = veh
        self.lane_idx = lane_idx
        self.lengths = lengths
        self.widths = widths
        self.idm_arr = idm_arr
        self.v0_now = idm_arr[:, 0].copy()
        self.cv_mode = 1 if cfg.prediction == "cv" else 0
        self.template = traffic
        self._dummy_state = np.empty((1, 1, 5))
        self._dummy_t = np.empty(1)

    def simulate(self, veh_in: np.ndarray, path: SpiralPath, anchor, record=False,
                 tr_state=None, tr_t=None):
        t = self.tables
        cfg = self.cfg
        cost = cfg.cost
        veh = veh_in.copy()
        if not record:
            tr_state, tr_t = self._dummy_state, self._dummy_t
        status, t_end, sigma, cost_val, brake_min, rows, max_disp = engine.simulate(
            veh, self.lane_idx, self.lengths, self.widths, self.idm_arr, self.v0_now,
            t.s0, t.r0, t.w0, t.margin,
            t.ref_x, t.ref_y, t.ref_th, t.lane_off, t.lane_valid, t.lane_run,
            t.lane_ka, t.lane_vx, t.lane_vy,
            anchor[0], anchor[1], anchor[2],
            path.kappa0, path.b, path.c, path.d, path.arc_length,
            cfg.dt, cfg.t_max, cfg.a_min, cfg.a_max, cfg.kappa_max,
            idm_mod.PERCEPTION_RANGE, self.cv_mode,
            cost.w_accel, cost.w_headway, cost.t_safe, cost.w_agent_brake,
            cost.b_comfort,
            1 if record else 0, tr_state, tr_t)
        return status, t_end, sigma, cost_val, brake_min, veh, rows


def plan(traffic: TrafficState, graph: LaneGraph, cfg: PlannerConfig,
         ego_kappa: float = 0.0, ego_idm: Optional[IdmParams] = None,
         want_trace: bool = True, search_out: Optional[list] = None) -> PlanResult:
    """Search for the minimum-cost primitive sequence from the current state.

    The root boundary condition is the true ego pose (not necessarily a
    lattice vertex); its first-stage endpoints come from the projection
    of the ego onto the graph. Raises NoPlanError when no terminal state
    survives (every option collides immediately).
    """
    t_wall = time.perf_counter()
    if ego_idm is None:
        ego_idm = IdmParams(v0=cfg.cost.v_des)
    n_stages = cfg.n_stages(graph.r0)
    ctx = _PlanContext(traffic, graph, cfg, ego_idm)
    root_wp = lane_graph.frenet_waypoint(graph, (traffic.ego.x, traffic.ego.y))
    root_pose = (traffic.ego.x, traffic.ego.y, traffic.ego.theta)

    search = SearchState(lifo=(cfg.variant == "rfelp"))
    root = Snapshot(veh=ctx.veh0.copy(), time=traffic.time, waypoint=root_wp,
                    cost_to_come=0.0, parent=None, primitive=None, path=None,
                    stage=0, lateral_moves=0, changed=False, reached=True,
                    order=search.next_order(), anchor=root_pose,
                    kappa_exit=ego_kappa, template=traffic)
    search.snapshots.append(root)
    search.by_waypoint[root_wp.key] = root
    search.push(root)

    stats = {"variant": cfg.variant, "prediction": cfg.prediction,
             "n_stages": n_stages, "rollouts": 0, "bvp_failures": 0,
             "collisions_pruned": 0, "infeasible_options": 0}
    extend_fn = extend_graph_rfelp if cfg.variant == "rfelp" else extend_graph_felp

    while True:
        snap = search.pop()
        if snap is None:
            break
        if snap.stage >= n_stages:
            continue
        n_legal = 0
        options = spiral.conformal_endpoints(graph, snap.waypoint, cfg.n0)
        for opt in options:
            if (cfg.variant == "cfelp" and snap.changed and opt.lateral != 0):
                continue
            if not satisfy_constraints(graph, snap.waypoint, opt.waypoint, cfg, root_wp):
                continue
            if snap.parent is None:
                target = _endpoint_in_frame(root_pose, opt.waypoint)
                if target is None:
                    continue
            else:
                target = opt.endpoint
            n_legal += 1
            try:
                path = _solve_cached(target, snap.kappa_exit, cfg.kappa_max)
            except SpiralInfeasibleError:
                stats["bvp_failures"] += 1
                continue
            status, t_end, sigma, cost_val, brake_min, veh_end, _ = ctx.simulate(
                snap.veh, path, snap.anchor)
            stats["rollouts"] += 1
            if stats["rollouts"] > cfg.max_rollouts:
                raise RuntimeError("rollout budget exhausted; check the config")
            collision = status == engine.STATUS_COLLISION
            reached = status == engine.STATUS_REACHED
            if collision:
                stats["collisions_pruned"] += 1
                extend_fn(snap, target, {"collision": True, "child": None}, search)
                continue
            if reached:
                wp_end = opt.waypoint
            else:
                wp_end = lane_graph.frenet_waypoint(graph, (veh_end[0, 0], veh_end[0, 1]))
            child = Snapshot(
                veh=veh_end, time=snap.time + t_end, waypoint=wp_end,
                cost_to_come=snap.cost_to_come + cost_val, parent=snap,
                primitive=target, path=path, stage=snap.stage + 1,
                lateral_moves=snap.lateral_moves + (1 if opt.lateral != 0 else 0),
                changed=snap.changed or opt.lateral != 0, reached=reached,
                order=search.next_order(),
                anchor=(wp_end.x, wp_end.y, wp_end.theta),
                kappa_exit=target.kappa, template=traffic)
            extend_fn(snap, target, {"collision": False, "child": child}, search)
        if n_legal == 0:
            # The route offers no legal continuation (exit lane running
            # out): the chain ends here as a terminal penalized by its
            # travel shortfall. Chains whose continuations exist but all
            # collide are doomed, not terminals, and die with no entry.
            snap.no_children = True

    if search_out is not None:
        search_out.append(search)

    # Terminal set: horizon snapshots, congestion (non-reached) snapshots,
    # and dead-end chains.
    candidates: List[Snapshot] = []
    for snap in search.live_snapshots():
        if snap.reached and (snap.stage >= n_stages or snap.no_children):
            candidates.append(snap)
        elif not snap.reached:
            candidates.append(snap)
    candidates = [s for s in candidates if s.parent is not None]
    if not candidates:
        stats["wall_time_ms"] = (time.perf_counter() - t_wall) * 1e3
        raise NoPlanError("no executable plan; every first-stage option fails")

    horizon_s = root_wp.s + cfg.s_m
    best = None
    best_key = None
    for snap in candidates:
        v_end = snap.veh[0, 3]
        travelled = snap.waypoint.s - root_wp.s
        snap.terminal_cost = (cfg.cost.w_speed * (v_end - cfg.cost.v_des) ** 2
                              + cfg.cost.w_dist * (cfg.s_m - travelled))
        total = snap.cost_to_come + snap.terminal_cost
        key = (total, -travelled, snap.lateral_moves, snap.waypoint.key)
        if best_key is None or key < best_key:
            best_key = key
            best = snap
    del horizon_s

    result = backtrace(best)
    result.stats = stats
    stats["total_cost"] = result.total_cost
    stats["no_plan"] = False

    # Re-simulate the winning chain once for the expected trace; this is
    # reporting, not search work, so it stays out of the rollout counter
    # and is skipped when the caller only executes the plan head.
    if want_trace:
        trace: List[TrafficState] = []
        node_chain = []
        node = best
        while node.parent is not None:
            node_chain.append(node)
            node = node.parent
        node_chain.reverse()
        veh = ctx.veh0.copy()
        t_acc = traffic.time
        max_rows = int(math.ceil(cfg.t_max / cfg.dt)) + 3
        tr_state = np.empty((max_rows, veh.shape[0], 5))
        tr_t = np.empty(max_rows)
        anchor = root_pose
        for node in node_chain:
            status, t_end, sigma, cost_val, brake_min, veh, rows = ctx.simulate(
                veh, node.path, anchor, record=True, tr_state=tr_state, tr_t=tr_t)
            # Drop each stage's final row; it reappears as the next stage's
            # first row.
            for r in range(rows - 1):
                trace.append(simulation._traffic_from_row(
                    tr_state[r], traffic, t_acc + tr_t[r], ctx.lane_idx))
            t_acc += t_end
            anchor = (node.waypoint.x, node.waypoint.y, node.waypoint.theta)
        if node_chain:
            trace.append(simulation._traffic_from_row(
                tr_state[rows - 1], traffic, t_acc, ctx.lane_idx))
        result.expected_trace = trace

    stats["wall_time_ms"] = (time.perf_counter() - t_wall) * 1e3
    return result
