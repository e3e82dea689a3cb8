"""Traffic-state types and closed-loop rollout of one ego motion primitive.

A rollout steps every vehicle at a fixed dt: the ego follows a spiral path
open loop (its pose is the path pose at its arclength progress, which is
exact under the kinematic model) with the shared speed feedback choosing
its acceleration; agents are lane followers under the same feedback. The
rollout terminates when the ego reaches the path end, on the first
occupancy-registry collision, or at the time budget (congestion), and
accumulates the running cost along the way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import dynamics, engine, idm as idm_mod, lane_graph
from .dynamics import VehicleControl, VehicleFootprint, VehicleState
from .idm import IdmParams, LeadObservation
from .lane_graph import LaneGraph, Waypoint
from .spiral import SpiralPath

DT = 0.05
T_MAX = 30.0
DEFAULT_FOOTPRINT = VehicleFootprint(length=4.7, width=1.9)


@dataclass(frozen=True)
class AgentSpec:
    """One agent vehicle: state, footprint, driver parameters, home lane."""

    state: VehicleState
    footprint: VehicleFootprint
    idm: IdmParams
    lane_id: Optional[int] = None
    agent_id: Optional[int] = None


@dataclass(frozen=True)
class TrafficState:
    """Ego plus agent states at one instant."""

    ego: VehicleState
    ego_footprint: VehicleFootprint
    agents: Tuple[AgentSpec, ...]
    time: float = 0.0


@dataclass(frozen=True)
class CostConfig:
    """Weights of the running and terminal cost terms."""

    w_accel: float = 0.3
    w_headway: float = 1.0
    t_safe: float = 1.0
    w_agent_brake: float = 0.5
    b_comfort: float = 2.0
    w_speed: float = 1.0
    w_dist: float = 0.1
    v_des: float = 20.0


@dataclass
class RolloutResult:
    """Outcome of simulating one motion primitive."""

    end_state: TrafficState
    reached_endpoint: bool
    actual_endpoint: Waypoint
    stage_cost: float
    collision: bool
    trace: List[TrafficState]
    agent_brake_min: float
    duration: float
    progress: float


class FrameMismatchError(ValueError):
    pass


def resolve_agent_lane(graph: LaneGraph, agent: AgentSpec) -> int:
    if agent.lane_id is not None:
        return agent.lane_id
    _, l = graph.provider.frenet((agent.state.x, agent.state.y))
    lane = min(range(graph.n_lanes), key=lambda k: abs(graph.lane_offset(k) - l))
    return lane


def traffic_arrays(traffic: TrafficState, graph: LaneGraph):
    """Flatten a TrafficState into the kernel's array layout (ego row 0)."""
    n = 1 + len(traffic.agents)
    veh = np.empty((n, 4))
    lane_idx = np.zeros(n, np.int64)
    lengths = np.empty(n)
    widths = np.empty(n)
    idm_arr = np.empty((n, 5))
    veh[0] = (traffic.ego.x, traffic.ego.y, traffic.ego.theta, traffic.ego.v)
    lengths[0] = traffic.ego_footprint.length
    widths[0] = traffic.ego_footprint.width
    for i, agent in enumerate(traffic.agents, start=1):
        veh[i] = (agent.state.x, agent.state.y, agent.state.theta, agent.state.v)
        lengths[i] = agent.footprint.length
        widths[i] = agent.footprint.width
        lane_idx[i] = resolve_agent_lane(graph, agent)
        idm_arr[i] = (agent.idm.v0, agent.idm.T, agent.idm.s0,
                      agent.idm.alpha, agent.idm.beta)
    return veh, lane_idx, lengths, widths, idm_arr


def _traffic_from_row(row: np.ndarray, template: TrafficState, time: float,
                      lane_idx: np.ndarray) -> TrafficState:
    ego = VehicleState(x=row[0, 0], y=row[0, 1], theta=row[0, 2], v=max(0.0, row[0, 3]))
    agents = []
    for i, agent in enumerate(template.agents, start=1):
        state = VehicleState(x=row[i, 0], y=row[i, 1], theta=row[i, 2],
                             v=max(0.0, row[i, 3]))
        agents.append(replace(agent, state=state, lane_id=int(lane_idx[i])))
    return TrafficState(ego=ego, ego_footprint=template.ego_footprint,
                        agents=tuple(agents), time=time)


def run_kernel(traffic: TrafficState, path: SpiralPath, graph: LaneGraph,
               cost: CostConfig, *, anchor_pose, ego_idm: IdmParams,
               prediction: str = "idm", dt: float = DT, t_budget: float = T_MAX,
               v0_now: Optional[np.ndarray] = None, record: bool = False,
               a_min: float = dynamics.A_MIN, a_max: float = dynamics.A_MAX,
               kappa_max: float = dynamics.KAPPA_MAX):
    """Low-level kernel invocation shared by rollout and the harness."""
    tables = engine.build_tables(graph)
    veh, lane_idx, lengths, widths, idm_arr = traffic_arrays(traffic, graph)
    idm_arr[0] = (ego_idm.v0, ego_idm.T, ego_idm.s0, ego_idm.alpha, ego_idm.beta)
    if v0_now is None:
        v0_now = idm_arr[:, 0].copy()
    cv_mode = 1 if prediction == "cv" else 0
    max_rows = int(math.ceil(t_budget / dt)) + 3
    if record:
        tr_state = np.empty((max_rows, veh.shape[0], 5))
        tr_t = np.empty(max_rows)
    else:
        tr_state = np.empty((1, 1, 5))
        tr_t = np.empty(1)
    ax, ay, ath = anchor_pose
    status, t_end, sigma, cost_val, brake_min, rows, max_disp = engine.simulate(
        veh, lane_idx, lengths, widths, idm_arr, v0_now,
        tables.s0, tables.r0, tables.w0, tables.margin,
        tables.ref_x, tables.ref_y, tables.ref_th, tables.lane_off,
        tables.lane_valid, tables.lane_run, tables.lane_ka,
        tables.lane_vx, tables.lane_vy,
        ax, ay, ath, path.kappa0, path.b, path.c, path.d, path.arc_length,
        dt, t_budget, a_min, a_max, kappa_max, idm_mod.PERCEPTION_RANGE,
        cv_mode,
        cost.w_accel, cost.w_headway, cost.t_safe, cost.w_agent_brake, cost.b_comfort,
        1 if record else 0, tr_state, tr_t)
    min_len = float(min(lengths))
    if max_disp >= min_len:
        raise RuntimeError(
            f"per-step displacement {max_disp:.2f} m reached the smallest "
            f"footprint length {min_len:.2f} m; collision checks could tunnel")
    return {
        "status": status,
        "t_end": t_end,
        "sigma": sigma,
        "cost": cost_val,
        "brake_min": brake_min,
        "veh": veh,
        "lane_idx": lane_idx,
        "rows": rows,
        "tr_state": tr_state[:rows] if record else None,
        "tr_t": tr_t[:rows] if record else None,
    }


def _check_start(traffic: TrafficState, path: SpiralPath, graph: LaneGraph,
                 anchor_pose) -> None:
    ax, ay, _ = anchor_pose
    if math.hypot(traffic.ego.x - ax, traffic.ego.y - ay) > 0.1:
        raise FrameMismatchError(
            "path does not start at the ego pose "
            f"(ego at {(traffic.ego.x, traffic.ego.y)}, path anchor {(ax, ay)})")


def rollout(traffic: TrafficState, path: SpiralPath, graph: LaneGraph,
            cost: CostConfig, *, prediction: str = "idm",
            ego_idm: Optional[IdmParams] = None, anchor_pose=None,
            dt: float = DT, t_max: float = T_MAX,
            record_trace: bool = True) -> RolloutResult:
    """Simulate the traffic while the ego executes one motion primitive."""
    if ego_idm is None:
        ego_idm = IdmParams(v0=cost.v_des)
    if anchor_pose is None:
        anchor_pose = (traffic.ego.x, traffic.ego.y, traffic.ego.theta)
    _check_start(traffic, path, graph, anchor_pose)
    out = run_kernel(traffic, path, graph, cost, anchor_pose=anchor_pose,
                     ego_idm=ego_idm, prediction=prediction, dt=dt,
                     t_budget=t_max, record=record_trace)
    if out["status"] == engine.STATUS_COLLISION and out["t_end"] == 0.0:
        raise ValueError("rollout started from a colliding traffic state")
    end_state = _traffic_from_row(out["veh"], traffic, traffic.time + out["t_end"],
                                  out["lane_idx"])
    trace = []
    if record_trace:
        for r in range(out["rows"]):
            trace.append(_traffic_from_row(out["tr_state"][r], traffic,
                                           traffic.time + out["tr_t"][r],
                                           out["lane_idx"]))
    actual = lane_graph.frenet_waypoint(graph, (end_state.ego.x, end_state.ego.y))
    return RolloutResult(
        end_state=end_state,
        reached_endpoint=out["status"] == engine.STATUS_REACHED,
        actual_endpoint=actual,
        stage_cost=out["cost"],
        collision=out["status"] == engine.STATUS_COLLISION,
        trace=trace,
        agent_brake_min=out["brake_min"],
        duration=out["t_end"],
        progress=out["sigma"],
    )


def predict_constant_velocity(traffic: TrafficState, path: SpiralPath,
                              graph: LaneGraph, cost: CostConfig,
                              **kwargs) -> RolloutResult:
    """Rollout variant where agents hold speed and lane (no feedback)."""
    kwargs["prediction"] = "cv"
    return rollout(traffic, path, graph, cost, **kwargs)


# -- leader helpers ------------------------------------------------------------

def register_traffic(graph: LaneGraph, traffic: TrafficState):
    """Register the ego (id 0) and agents (ids 1..M) on the map."""
    lane_graph.register(graph, 0, traffic.ego, traffic.ego_footprint)
    for i, agent in enumerate(traffic.agents, start=1):
        lane_graph.register(graph, i, agent.state, agent.footprint)


def deregister_traffic(graph: LaneGraph, traffic: TrafficState):
    lane_graph.deregister(graph, 0)
    for i in range(1, len(traffic.agents) + 1):
        lane_graph.deregister(graph, i)


def traffic_collision_free(graph: LaneGraph, traffic: TrafficState) -> bool:
    register_traffic(graph, traffic)
    try:
        ego_keys = graph.vehicle_vertices[0]
        for i in range(1, len(traffic.agents) + 1):
            if ego_keys & graph.vehicle_vertices[i]:
                return False
        return True
    finally:
        deregister_traffic(graph, traffic)


def leader_observation_for_agent(agent_index: int, traffic: TrafficState,
                                 graph: LaneGraph) -> Optional[LeadObservation]:
    """Same-lane leader of an agent via the occupancy registry."""
    vid = agent_index + 1
    if vid not in graph.vehicle_vertices:
        raise lane_graph.MapError(f"agent {agent_index} is not registered")
    found = lane_graph.leader_of(graph, vid, "same")
    if found is None:
        return None
    lead_vid, gap = found
    if gap <= 0.0:
        raise ValueError(f"agent {agent_index} overlaps its leader")
    lead_state = (traffic.ego if lead_vid == 0
                  else traffic.agents[lead_vid - 1].state)
    return LeadObservation(gap_s=gap,
                           delta_v=traffic.agents[agent_index].state.v - lead_state.v)


def ego_leader(traffic: TrafficState, graph: LaneGraph) -> Optional[LeadObservation]:
    """Leader of the ego: the agent on the same lane as the ego's front.

    The ego switches leaders exactly when its front bumper crosses the
    lane boundary.
    """
    half_len = traffic.ego_footprint.length / 2.0
    fx = traffic.ego.x + math.cos(traffic.ego.theta) * half_len
    fy = traffic.ego.y + math.sin(traffic.ego.theta) * half_len
    s_f, l_f = graph.provider.frenet((fx, fy))
    lane_f = min(range(graph.n_lanes), key=lambda k: abs(graph.lane_offset(k) - l_f))
    s_e, _ = graph.provider.frenet((traffic.ego.x, traffic.ego.y))
    best = None
    for agent in traffic.agents:
        lane_a = resolve_agent_lane(graph, agent)
        if lane_a != lane_f:
            continue
        s_a, _ = graph.provider.frenet((agent.state.x, agent.state.y))
        ds = s_a - s_e
        if ds <= 0.0 or ds > idm_mod.PERCEPTION_RANGE:
            continue
        gap = ds - (traffic.ego_footprint.length + agent.footprint.length) / 2.0
        if best is None or gap < best[0]:
            best = (gap, agent)
    if best is None:
        return None
    gap, agent = best
    return LeadObservation(gap_s=max(gap, 0.01),
                           delta_v=traffic.ego.v - agent.state.v)


def ego_policy(traffic: TrafficState, path: SpiralPath, graph: LaneGraph,
               progress: float, ego_idm: Optional[IdmParams] = None) -> VehicleControl:
    """Ego feedback control while tracking a path: path curvature at the
    current progress plus the shared speed feedback."""
    if progress < -1e-9 or progress > path.arc_length + 1e-9:
        raise ValueError(f"progress {progress} outside [0, {path.arc_length}]")
    if ego_idm is None:
        ego_idm = IdmParams()
    lead = ego_leader(traffic, graph)
    a = idm_mod.idm_acceleration(traffic.ego.v, lead, ego_idm)
    return VehicleControl(kappa=path.kappa_at(progress), a=a)


# -- cost terms ----------------------------------------------------------------

def running_cost(snapshot: TrafficState, ego_accel: float, cfg: CostConfig,
                 graph: Optional[LaneGraph] = None,
                 agent_accels: Optional[Sequence[float]] = None) -> float:
    """Instantaneous running cost: ego accel, headway deficit, agent braking.

    The headway term needs the map to find the ego's leader; without a
    graph the ego is treated as unled. Agent accelerations are recomputed
    from their policies when not supplied.
    """
    total = cfg.w_accel * ego_accel * ego_accel
    if graph is not None:
        lead = ego_leader(snapshot, graph)
        if lead is not None and snapshot.ego.v > 1e-6:
            headway = lead.gap_s / snapshot.ego.v
            if headway < cfg.t_safe:
                total += cfg.w_headway * (cfg.t_safe - headway) ** 2
    if agent_accels is None:
        if graph is not None and snapshot.agents:
            register_traffic(graph, snapshot)
            try:
                agent_accels = [
                    idm_mod.agent_policy(i, snapshot, graph).a
                    for i in range(len(snapshot.agents))
                ]
            finally:
                deregister_traffic(graph, snapshot)
        else:
            agent_accels = []
    for a_i in agent_accels:
        over = -a_i - cfg.b_comfort
        if over > 0.0:
            total += cfg.w_agent_brake * over * over
    return total


def terminal_cost(end: TrafficState, start: TrafficState, cfg: CostConfig,
                  graph: Optional[LaneGraph] = None,
                  s_m: float = 100.0) -> float:
    """Terminal penalty: desired-speed deviation plus distance shortfall."""
    total = cfg.w_speed * (end.ego.v - cfg.v_des) ** 2
    if graph is not None:
        s_end, _ = lane_graph.frenet(graph, (end.ego.x, end.ego.y))
        s_start, _ = lane_graph.frenet(graph, (start.ego.x, start.ego.y))
        total += cfg.w_dist * (s_m - (s_end - s_start))
    return total
