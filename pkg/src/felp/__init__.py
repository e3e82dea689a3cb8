"""Feedback-enhanced lattice planning for highway driving.

A library for closed-loop motion planning experiments: unicycle vehicle
dynamics, intelligent-driver-model speed feedback, a directed-graph lane
map, cubic-spiral motion primitives, three graph-search planner variants,
and a receding-horizon traffic harness with metrics.
"""

from .dynamics import VehicleControl, VehicleFootprint, VehicleState, step, wrap_angle
from .idm import IdmParams, LeadObservation, agent_policy, equilibrium_gap, idm_acceleration
from .lane_graph import (LaneGraph, MapError, Waypoint, build, deregister, dump_json,
                         extend, follower_of, frenet, frenet_waypoint, leader_of,
                         register, shorten, shortest_path_count, shortest_path_length)
from .metrics import MetricsReport, Trace, compute_metrics, read_trace_csv, write_trace_csv
from .planner import (NoPlanError, PlanResult, PlannerConfig, SearchState, Snapshot,
                      backtrace, extend_graph_felp, extend_graph_rfelp, plan,
                      satisfy_constraints)
from .road import SyntheticRoad
from .simulation import (AgentSpec, CostConfig, RolloutResult, TrafficState, ego_policy,
                         predict_constant_velocity, rollout, running_cost, terminal_cost)
from .spiral import (ConformalOption, PathEndPoint, SpiralInfeasibleError, SpiralPath,
                     conformal_endpoints, sample, solve_bvp)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
