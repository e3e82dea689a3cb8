"""Closed-loop scenario orchestration.

A scenario advances in replan intervals: plan from the latest traffic
state, execute the head of the plan for one interval (agents under their
own feedback with slowly drifting desired speeds), then update the map
window, despawn agents that left the perception window, and spawn
replacements near its edges. Everything is driven by one seeded generator
so a (config, seed) pair reproduces bit-identically.
"""
from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import engine, idm as idm_mod, lane_graph, metrics as metrics_mod, simulation
from .dynamics import VehicleFootprint, VehicleState
from .idm import IdmParams, equilibrium_gap
from .lane_graph import LaneGraph
from .metrics import MetricsReport, Trace
from .planner import NoPlanError, PlannerConfig, plan
from .road import SyntheticRoad
from .simulation import AgentSpec, CostConfig, TrafficState
from .spiral import SpiralPath


@dataclass
class ScenarioConfig:
    road: SyntheticRoad
    scenario: str = "highway"
    duration: float = 300.0
    replan_period: float = 0.25
    agent_count: int = 8
    seed: int = 1
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    idm_nominal: IdmParams = field(default_factory=IdmParams)
    footprint: VehicleFootprint = field(default_factory=lambda: VehicleFootprint(4.7, 1.9))
    r0: float = 1.0
    range_back: float = 50.0
    range_ahead: float = 100.0
    jitter: float = 0.1
    ou_theta: float = 0.05
    ou_sigma: float = 0.5
    ou_clamp: float = 3.0

    def __post_init__(self):
        steps = self.replan_period / self.planner.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("replan_period must be a multiple of dt")


@dataclass
class _Agent:
    agent_id: int
    lane: int
    state: VehicleState
    idm: IdmParams
    footprint: VehicleFootprint
    ou: float = 0.0

    def spec(self) -> AgentSpec:
        return AgentSpec(state=self.state, footprint=self.footprint,
                         idm=self.idm, lane_id=self.lane, agent_id=self.agent_id)


@dataclass
class EpisodeResult:
    report: MetricsReport
    trace: Trace
    planner_stats: List[dict]
    events: dict


class SpawnDeadlockError(RuntimeError):
    pass


class Episode:
    """One closed-loop run of the receding-horizon loop."""

    def __init__(self, cfg: ScenarioConfig, ego_state: VehicleState,
                 agents: List[_Agent], ego_lane: int):
        self.cfg = cfg
        self.road = cfg.road
        self.rng = np.random.default_rng(cfg.seed)
        self.ego = ego_state
        self.ego_lane = ego_lane
        self.ego_kappa = 0.0
        self.agents = agents
        self.next_agent_id = 1 + (max((a.agent_id for a in agents), default=0))
        self.t = 0.0
        self.collisions = 0
        self.plan_times_ms: List[float] = []
        self.planner_stats: List[dict] = []
        self.rows_time: List[np.ndarray] = []
        self.rows_vid: List[np.ndarray] = []
        self.rows_state: List[np.ndarray] = []
        self.no_plan_intervals = 0
        self.spawn_failures = 0.0
        self.rel_s_min = math.inf
        self.rel_s_max = -math.inf
        self.events: dict = {"collision_times": [], "spawns": [], "despawns": []}
        self._build_window()

    # -- map window -------------------------------------------------------

    def _ego_s(self) -> float:
        s, _ = self.road.frenet((self.ego.x, self.ego.y))
        return s

    def _build_window(self):
        cfg = self.cfg
        s_e = self._ego_s()
        rear = max(0.0, s_e - cfg.range_back)
        rear = round(rear / cfg.r0) * cfg.r0
        anchor_lane = self.ego_lane
        p0 = self.road.waypoint(anchor_lane, rear)
        if not self.road.on_route(p0):
            for lane in range(self.road.n_lanes):
                p0 = self.road.waypoint(lane, rear)
                if self.road.on_route(p0):
                    break
            else:
                raise lane_graph.MapError("no on-route lane at the window rear")
        rm = cfg.range_back + cfg.range_ahead
        self.graph = lane_graph.build(self.road, p0, rm=rm, r0=cfg.r0)
        self.window_rear = rear

    def _shift_window(self):
        cfg = self.cfg
        target_rear = self._ego_s() - cfg.range_back
        shift = math.floor((target_rear - self.window_rear) / cfg.r0) * cfg.r0
        if shift >= 5.0 * cfg.r0:
            self.graph = lane_graph.extend(self.graph, self.road, shift)
            self.graph = lane_graph.shorten(self.graph, shift)
            self.window_rear += shift

    # -- traffic assembly ---------------------------------------------------

    def traffic(self) -> TrafficState:
        return TrafficState(ego=self.ego, ego_footprint=self.cfg.footprint,
                            agents=tuple(a.spec() for a in self.agents),
                            time=self.t)

    def _v0_now(self) -> np.ndarray:
        v0 = np.empty(1 + len(self.agents))
        v0[0] = self.cfg.planner.cost.v_des
        for i, a in enumerate(self.agents, start=1):
            v0[i] = max(1.0, a.idm.v0 + a.ou)
        return v0

    def _update_ou(self):
        cfg = self.cfg
        dt_r = cfg.replan_period
        for a in self.agents:
            noise = self.rng.standard_normal()
            a.ou += cfg.ou_theta * (0.0 - a.ou) * dt_r + cfg.ou_sigma * math.sqrt(dt_r) * noise
            a.ou = min(max(a.ou, -cfg.ou_clamp), cfg.ou_clamp)

    # -- execution -----------------------------------------------------------

    def _record(self, tr_state: np.ndarray, tr_t: np.ndarray, rows: int,
                include_final: bool):
        n = rows if include_final else rows - 1
        if n <= 0:
            return
        nveh = tr_state.shape[1]
        vids = np.array([0] + [a.agent_id for a in self.agents], np.int64)
        times = np.repeat(tr_t[:n] + self.t, nveh)
        vid_col = np.tile(vids, n)
        state = tr_state[:n].reshape(n * nveh, 5)
        self.rows_time.append(times)
        self.rows_vid.append(vid_col)
        self.rows_state.append(state.copy())

    def _track_window_invariant(self):
        s_e = self._ego_s()
        for a in self.agents:
            s_a, _ = self.road.frenet((a.state.x, a.state.y))
            rel = s_a - s_e
            self.rel_s_min = min(self.rel_s_min, rel)
            self.rel_s_max = max(self.rel_s_max, rel)

    def _apply_kernel_result(self, out: dict, path: SpiralPath):
        veh = out["veh"]
        self.ego = VehicleState(x=veh[0, 0], y=veh[0, 1], theta=veh[0, 2],
                                v=max(0.0, veh[0, 3]))
        self.ego_kappa = path.kappa_at(min(out["sigma"], path.arc_length))
        for i, a in enumerate(self.agents, start=1):
            a.state = VehicleState(x=veh[i, 0], y=veh[i, 1], theta=veh[i, 2],
                                   v=max(0.0, veh[i, 3]))
        _, l_e = self.road.frenet((self.ego.x, self.ego.y))
        self.ego_lane = min(range(self.road.n_lanes),
                            key=lambda k: abs(self.road.lane_offset(k) - l_e))

    def _execute(self, path: SpiralPath, anchor):
        cfg = self.cfg
        out = simulation.run_kernel(
            self.traffic(), path, self.graph, cfg.planner.cost,
            anchor_pose=anchor, ego_idm=self.cfg.idm_nominal,
            prediction="idm", dt=cfg.planner.dt, t_budget=cfg.replan_period,
            v0_now=self._v0_now(), record=True,
            a_min=cfg.planner.a_min, a_max=cfg.planner.a_max,
            kappa_max=cfg.planner.kappa_max)
        collided = out["status"] == engine.STATUS_COLLISION
        self._record(out["tr_state"], out["tr_t"], out["rows"],
                     include_final=collided)
        self._apply_kernel_result(out, path)
        if collided:
            self.collisions += 1
            self.events["collision_times"].append(self.t + out["t_end"])
        self.t += out["t_end"]
        return not collided

    def _fallback_path(self) -> Tuple[SpiralPath, tuple]:
        # Straight hold along the current heading; braking comes from the
        # feedback once a (possibly virtual) leader is present.
        return (SpiralPath(kappa0=0.0, b=0.0, c=0.0, d=0.0, arc_length=500.0),
                (self.ego.x, self.ego.y, self.ego.theta))

    def _route_end_phantom(self) -> Optional[_Agent]:
        s_e = self._ego_s()
        end = self.road.route_end(self.ego_lane, s_e)
        if end is None or end - s_e > idm_mod.PERCEPTION_RANGE:
            return None
        pose = self.road.lane_pose(self.ego_lane, min(end + 3.0, self.road.length))
        return _Agent(agent_id=-1, lane=self.ego_lane,
                      state=VehicleState(x=pose[0], y=pose[1], theta=pose[2], v=0.0),
                      idm=self.cfg.idm_nominal,
                      footprint=VehicleFootprint(0.5, 0.5))

    def _execute_fallback(self):
        phantom = self._route_end_phantom()
        if phantom is not None:
            self.agents.append(phantom)
        try:
            path, anchor = self._fallback_path()
            ok = self._execute(path, anchor)
        finally:
            if phantom is not None:
                self.agents = [a for a in self.agents if a.agent_id != -1]
        return ok

    # -- spawn management -----------------------------------------------------

    def _lane_neighbors(self, lane: int, s: float):
        ahead = None
        behind = None
        for a in self.agents:
            if a.lane != lane:
                continue
            s_a, _ = self.road.frenet((a.state.x, a.state.y))
            ds = s_a - s
            if ds >= 0.0 and (ahead is None or ds < ahead[0]):
                ahead = (ds, a)
            if ds < 0.0 and (behind is None or -ds < behind[0]):
                behind = (-ds, a)
        s_e = self._ego_s()
        if self.ego_lane == lane or abs(
                self.road.lane_offset(lane)
                - self.road.frenet((self.ego.x, self.ego.y))[1]) < self.road.w0 * 0.75:
            ds = s_e - s
            if ds >= 0.0 and (ahead is None or ds < ahead[0]):
                ahead = (ds, None)
            if ds < 0.0 and (behind is None or -ds < behind[0]):
                behind = (-ds, None)
        return ahead, behind

    def _spawn_speed(self, lane: int, s: float, v_desired: float):
        """Speed at which the spawn gap is at least the equilibrium gap.

        The newcomer enters at most at its desired speed and slower when
        the slot is tight, so its own following distance is equilibrium
        or better by construction. Returns None when no speed >= 3 m/s
        fits or the vehicle behind would be squeezed below half its own
        equilibrium gap.
        """
        nom = self.cfg.idm_nominal
        length = self.cfg.footprint.length
        ahead, behind = self._lane_neighbors(lane, s)
        v = v_desired
        if ahead is not None:
            gap_front = ahead[0] - length
            v_fit = (gap_front - nom.s0 - 1.0) / nom.T
            v = min(v, v_fit)
        if v < 3.0:
            return None
        if behind is not None:
            v_b = behind[1].state.v if behind[1] is not None else self.ego.v
            if behind[0] - length < 0.5 * equilibrium_gap(v_b, nom) + 1.0:
                return None
        return v

    def _jittered_idm(self) -> IdmParams:
        cfg = self.cfg
        nom = cfg.idm_nominal
        j = cfg.jitter

        def jit(value):
            return value * (1.0 + j * (2.0 * self.rng.random() - 1.0))

        return IdmParams(v0=jit(nom.v0), T=jit(nom.T), s0=jit(nom.s0),
                         alpha=jit(nom.alpha), beta=jit(nom.beta))

    def _try_spawn(self, side: str) -> bool:
        cfg = self.cfg
        s_e = self._ego_s()
        idm = self._jittered_idm()
        # Several candidate depths near the window edge; dense traffic can
        # block a single slot on every lane for a while.
        depths = 3.0 + np.array([0.0, 5.0, 10.0]) + 2.0 * self.rng.random(3)
        for depth in depths:
            if side == "front":
                s = s_e + cfg.range_ahead - depth
            else:
                s = s_e - cfg.range_back + depth
            for lane in self.rng.permutation(self.road.n_lanes):
                lane = int(lane)
                if not self.road.lane_exists(lane, s):
                    continue
                v = self._spawn_speed(lane, s, idm.v0)
                if v is None:
                    continue
                pose = self.road.lane_pose(lane, s)
                agent = _Agent(agent_id=self.next_agent_id, lane=lane,
                               state=VehicleState(x=pose[0], y=pose[1],
                                                  theta=pose[2], v=v),
                               idm=idm, footprint=cfg.footprint)
                self.next_agent_id += 1
                self.agents.append(agent)
                self.events["spawns"].append((self.t, agent.agent_id, lane, s, side))
                return True
        return False

    def _despawn_and_spawn(self):
        cfg = self.cfg
        s_e = self._ego_s()
        keep: List[_Agent] = []
        deficit_sides: List[str] = []
        for a in self.agents:
            s_a, _ = self.road.frenet((a.state.x, a.state.y))
            rel = s_a - s_e
            if rel > cfg.range_ahead - 3.0:
                deficit_sides.append("rear")
                self.events["despawns"].append((self.t, a.agent_id, "front"))
            elif rel < -(cfg.range_back - 3.0):
                deficit_sides.append("front")
                self.events["despawns"].append((self.t, a.agent_id, "rear"))
            else:
                keep.append(a)
        self.agents = keep
        deficit = cfg.agent_count - len(self.agents)
        sides = deficit_sides + ["front", "rear"] * max(0, deficit)
        spawned_any = deficit <= 0
        for _ in range(deficit):
            side = sides.pop(0)
            other = "rear" if side == "front" else "front"
            if self._try_spawn(side) or self._try_spawn(other):
                spawned_any = True
            else:
                break
        if len(self.agents) < cfg.agent_count:
            if not spawned_any:
                self.spawn_failures += cfg.replan_period
                if self.spawn_failures > 10.0:
                    raise SpawnDeadlockError(
                        "no feasible spawn gap for 10 consecutive seconds")
            else:
                self.spawn_failures = 0.0
        else:
            self.spawn_failures = 0.0

    # -- main loop -------------------------------------------------------------

    def run(self, duration: float, stop_when=None) -> None:
        cfg = self.cfg
        n_intervals = int(round(duration / cfg.replan_period))
        for _ in range(n_intervals):
            self._shift_window()
            traffic = self.traffic()
            t0 = time.perf_counter()
            try:
                result = plan(traffic, self.graph, cfg.planner,
                              ego_kappa=self.ego_kappa,
                              ego_idm=cfg.idm_nominal, want_trace=False)
                wall = (time.perf_counter() - t0) * 1e3
                stats = dict(result.stats)
                plan_ok = len(result.primitives) > 0
            except NoPlanError:
                wall = (time.perf_counter() - t0) * 1e3
                stats = {"variant": cfg.planner.variant,
                         "prediction": cfg.planner.prediction,
                         "n_stages": cfg.planner.n_stages(self.graph.r0),
                         "rollouts": 0, "bvp_failures": 0,
                         "collisions_pruned": 0, "no_plan": True,
                         "total_cost": None, "wall_time_ms": wall}
                plan_ok = False
                self.no_plan_intervals += 1
            stats["time"] = self.t
            stats["agents"] = len(self.agents)
            self.plan_times_ms.append(wall)
            self.planner_stats.append(stats)

            if plan_ok:
                anchor = (self.ego.x, self.ego.y, self.ego.theta)
                ok = self._execute(result.paths[0], anchor)
            else:
                ok = self._execute_fallback()
            self._track_window_invariant()
            if not ok:
                break
            self._update_ou()
            if cfg.scenario == "highway":
                self._despawn_and_spawn()
            if stop_when is not None and stop_when(self):
                break
        self._finalize_trace()

    def _finalize_trace(self):
        # Append the final state row for every live vehicle.
        vids = np.array([0] + [a.agent_id for a in self.agents], np.int64)
        nveh = len(vids)
        state = np.empty((nveh, 5))
        state[0] = (self.ego.x, self.ego.y, self.ego.theta, self.ego.v, 0.0)
        for i, a in enumerate(self.agents, start=1):
            state[i] = (a.state.x, a.state.y, a.state.theta, a.state.v, 0.0)
        self.rows_time.append(np.full(nveh, self.t))
        self.rows_vid.append(vids)
        self.rows_state.append(state)

    def trace(self) -> Trace:
        times = np.concatenate(self.rows_time)
        vids = np.concatenate(self.rows_vid)
        state = np.concatenate(self.rows_state, axis=0)
        return Trace(time=times, vehicle_id=vids, x=state[:, 0], y=state[:, 1],
                     theta=state[:, 2], v=state[:, 3], a=state[:, 4])

    def footprints(self) -> Dict[int, tuple]:
        fp = {0: (self.cfg.footprint.length, self.cfg.footprint.width)}
        for a in self.agents:
            fp[a.agent_id] = (a.footprint.length, a.footprint.width)
        fp.update({vid: (self.cfg.footprint.length, self.cfg.footprint.width)
                   for vid in np.unique(np.concatenate(self.rows_vid))
                   if vid not in fp})
        return fp

    def metrics(self) -> MetricsReport:
        return metrics_mod.compute_metrics(
            self.trace(), self.road, self.cfg.footprint,
            margin=self.graph.margin, dt=self.cfg.planner.dt,
            plan_times_ms=self.plan_times_ms,
            collision_count=self.collisions,
            footprints=self.footprints())

    def result(self) -> EpisodeResult:
        events = dict(self.events)
        events["rel_s_min"] = self.rel_s_min
        events["rel_s_max"] = self.rel_s_max
        events["no_plan_intervals"] = self.no_plan_intervals
        return EpisodeResult(report=self.metrics(), trace=self.trace(),
                             planner_stats=self.planner_stats, events=events)


# -- scenarios ------------------------------------------------------------------

MERGE_ROAD_LENGTH = 1200.0
MERGE_EGO_START = 50.0


def merging_road() -> SyntheticRoad:
    """Plain two-lane stretch for the merging scenario."""
    return SyntheticRoad(n_lanes=2, lane_width=3.7, length=MERGE_ROAD_LENGTH)


def merging_config(seed: int = 1, prediction: str = "idm",
                   variant: str = "felp", duration: float = 30.0) -> ScenarioConfig:
    return ScenarioConfig(road=merging_road(), scenario="merging",
                          duration=duration, agent_count=3, seed=seed,
                          planner=PlannerConfig(variant=variant,
                                                prediction=prediction))


def merging_scene(road: SyntheticRoad, footprint: VehicleFootprint,
                  left_gap: float = 20.0) -> Tuple[VehicleState, List[_Agent]]:
    """Ego at 15 m/s with an equal-speed leader 20 m ahead; two left-lane
    vehicles at 20 m/s, ``left_gap`` meters ahead and behind the ego."""
    ego = VehicleState(x=MERGE_EGO_START, y=0.0, theta=0.0, v=15.0)

    def mk(agent_id, lane, s, v, v0):
        x, y, th, _ = road.lane_pose(lane, s)
        return _Agent(agent_id=agent_id, lane=lane,
                      state=VehicleState(x=x, y=y, theta=th, v=v),
                      idm=IdmParams(v0=v0), footprint=footprint)

    agents = [
        mk(1, 0, MERGE_EGO_START + 20.0, 15.0, 15.0),
        mk(2, 1, MERGE_EGO_START + left_gap, 20.0, 20.0),
        mk(3, 1, MERGE_EGO_START - left_gap, 20.0, 20.0),
    ]
    return ego, agents


def merge_state_series(episode: Episode) -> Tuple[bool, Optional[float], bool]:
    """Detect a completed merge: the ego settles on the left lane center.

    Returns (merged, merge_time, into_gap) where into_gap tells whether
    the ego ended up between the two original left-lane vehicles, i.e.
    performed the cooperative gap merge rather than falling in behind
    the stream after being passed.
    """
    trace = episode.trace()
    ego_rows = np.flatnonzero(trace.vehicle_id == 0)
    road = episode.road
    target_l = road.lane_offset(1)
    t_merge = None
    run_start = None
    for r in ego_rows:
        _, l = road.frenet((trace.x[r], trace.y[r]))
        on_target = abs(l - target_l) < 0.25 * road.w0
        t = trace.time[r]
        if on_target:
            if run_start is None:
                run_start = t
            if t - run_start >= 1.0:
                t_merge = run_start
                break
        else:
            run_start = None
    if t_merge is None:
        return False, None, False
    # Position relative to the original left-lane pair at settle time.
    frame = np.flatnonzero(np.abs(trace.time - t_merge) < 1e-6)
    s_of = {}
    for r in frame:
        s_of[int(trace.vehicle_id[r])], _ = road.frenet((trace.x[r], trace.y[r]))
    into_gap = (2 in s_of and 3 in s_of and 0 in s_of
                and s_of[3] < s_of[0] < s_of[2])
    return True, t_merge, into_gap


def run_merging(cfg: ScenarioConfig, left_gap: float = 20.0) -> EpisodeResult:
    """The highway merging scenario with the pinched left-lane gap."""
    if cfg.scenario != "merging":
        raise ValueError(f"run_merging got scenario {cfg.scenario!r}")
    ego, agents = merging_scene(cfg.road, cfg.footprint, left_gap=left_gap)
    episode = Episode(cfg, ego, agents, ego_lane=0)

    def merged(ep: Episode) -> bool:
        _, l = ep.road.frenet((ep.ego.x, ep.ego.y))
        if not hasattr(ep, "_merge_run"):
            ep._merge_run = None
        if abs(l - ep.road.lane_offset(1)) < 0.25 * ep.road.w0:
            if ep._merge_run is None:
                ep._merge_run = ep.t
            return ep.t - ep._merge_run >= 3.0
        ep._merge_run = None
        return False

    episode.run(cfg.duration, stop_when=merged)
    result = episode.result()
    ok, t_merge, into_gap = merge_state_series(episode)
    result.events["merged"] = ok
    result.events["merge_time"] = t_merge
    result.events["merged_into_gap"] = into_gap
    return result


HIGHWAY_EGO_START = 100.0


def highway_initial_agents(cfg: ScenarioConfig, rng: np.random.Generator,
                           ego_s: float, ego_lane: int) -> List[_Agent]:
    """Seeded initial population of the perception window.

    Placement is rejection sampling over (lane, s); the entry speed adapts
    to the available front gap so that nobody starts deeper than its own
    equilibrium following distance.
    """
    road = cfg.road
    nom = cfg.idm_nominal
    length = cfg.footprint.length
    agents: List[_Agent] = []

    def jit(value):
        return value * (1.0 + cfg.jitter * (2.0 * rng.random() - 1.0))

    def neighbors(lane, s):
        ahead = behind = None
        rows = [(road.frenet((a.state.x, a.state.y))[0], a.state.v)
                for a in agents if a.lane == lane]
        if lane == ego_lane:
            rows.append((ego_s, cfg.planner.cost.v_des))
        for s_a, v_a in rows:
            ds = s_a - s
            if ds >= 0.0 and (ahead is None or ds < ahead[0]):
                ahead = (ds, v_a)
            if ds < 0.0 and (behind is None or -ds < behind[0]):
                behind = (-ds, v_a)
        return ahead, behind

    next_id = 1
    tries = 0
    while len(agents) < cfg.agent_count and tries < 2000:
        tries += 1
        idm = IdmParams(v0=jit(nom.v0), T=jit(nom.T), s0=jit(nom.s0),
                        alpha=jit(nom.alpha), beta=jit(nom.beta))
        lane = int(rng.integers(road.n_lanes))
        s = ego_s - (cfg.range_back - 10.0) + rng.random() * (
            cfg.range_back + cfg.range_ahead - 20.0)
        if not road.lane_exists(lane, s):
            continue
        ahead, behind = neighbors(lane, s)
        v = idm.v0
        if ahead is not None:
            v = min(v, (ahead[0] - length - idm.s0 - 1.0) / idm.T)
        if v < 3.0:
            continue
        if behind is not None:
            if behind[0] - length < 0.5 * equilibrium_gap(behind[1], nom) + 1.0:
                continue
        pose = road.lane_pose(lane, s)
        agents.append(_Agent(agent_id=next_id, lane=lane,
                             state=VehicleState(x=pose[0], y=pose[1],
                                                theta=pose[2], v=v),
                             idm=idm, footprint=cfg.footprint))
        next_id += 1
    if len(agents) < cfg.agent_count:
        raise SpawnDeadlockError("could not place the initial agents")
    return agents


def run_highway(cfg: ScenarioConfig) -> EpisodeResult:
    """Continuous highway traffic around the ego with replacement spawns."""
    if cfg.scenario != "highway":
        raise ValueError(f"run_highway got scenario {cfg.scenario!r}")
    rng = np.random.default_rng(cfg.seed + 777)
    ego_lane = min(1, cfg.road.n_lanes - 1)
    pose = cfg.road.lane_pose(ego_lane, HIGHWAY_EGO_START)
    ego = VehicleState(x=pose[0], y=pose[1], theta=pose[2],
                       v=cfg.planner.cost.v_des)
    agents = highway_initial_agents(cfg, rng, HIGHWAY_EGO_START, ego_lane)
    episode = Episode(cfg, ego, agents, ego_lane=ego_lane)
    episode.run(cfg.duration)
    return episode.result()


def run_density_sweep(cfg: ScenarioConfig, counts=(4, 8, 12)) -> List[EpisodeResult]:
    """run_highway at several agent counts with a shared seed."""
    results = []
    for count in counts:
        sub = replace(cfg, agent_count=count)
        results.append(run_highway(sub))
    return results


# -- output files ------------------------------------------------------------

def write_outputs(out_dir: str, result: EpisodeResult, episode_graph=None,
                  footprints: Optional[dict] = None):
    os.makedirs(out_dir, exist_ok=True)
    metrics_mod.write_trace_csv(os.path.join(out_dir, "trace.csv"), result.trace)
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        fh.write(result.report.to_json())
    with open(os.path.join(out_dir, "planner_stats.jsonl"), "w") as fh:
        for record in result.planner_stats:
            fh.write(json.dumps(record) + "\n")
    if episode_graph is not None:
        vehicles = None
        if footprints:
            vehicles = {str(vid): {"length": lw[0], "width": lw[1]}
                        for vid, lw in footprints.items()}
        lane_graph.dump_json(episode_graph, os.path.join(out_dir, "graph.json"),
                             vehicles=vehicles)
