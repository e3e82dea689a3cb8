"""Intelligent-driver-model speed feedback.

One acceleration law is shared by the agents and by the ego while it tracks
a path: free road gives ``alpha * (1 - (v / v0)^4)``, and with a leader the
interaction term ``(s* / s)^2`` is subtracted, where

    s* = s0 + max(0, v T + v dv / (2 sqrt(alpha beta)))

is the desired gap. The acceleration exponent is fixed at 4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from . import dynamics

# Nominal parameters; the config file can override them per scenario.
DEFAULT_V0 = 20.0
DEFAULT_T = 1.5
DEFAULT_S0 = 2.0
DEFAULT_ALPHA = 1.5
DEFAULT_BETA = 2.5

PERCEPTION_RANGE = 100.0


@dataclass(frozen=True)
class IdmParams:
    """Driver parameters: desired speed, headway, jam gap, comfort limits."""

    v0: float = DEFAULT_V0
    T: float = DEFAULT_T
    s0: float = DEFAULT_S0
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        for name in ("v0", "T", "s0", "alpha", "beta"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"IDM parameter {name} must be positive")


@dataclass(frozen=True)
class LeadObservation:
    """Relative observation of the leading vehicle.

    ``gap_s`` is the bumper-to-bumper distance and ``delta_v`` the speed of
    the follower minus the speed of the leader.
    """

    gap_s: float
    delta_v: float

    def __post_init__(self):
        if self.gap_s <= 0.0:
            raise ValueError(
                f"leader gap must be positive, got {self.gap_s}; "
                "overlapping vehicles must be rejected upstream")


def idm_acceleration(v: float, lead: Optional[LeadObservation], params: IdmParams,
                     a_min: float = dynamics.A_MIN,
                     a_max: float = dynamics.A_MAX) -> float:
    """Longitudinal acceleration for a vehicle at speed ``v``.

    Clamped to the vehicle's physical acceleration limits.
    """
    if v < 0.0:
        raise ValueError(f"speed must be non-negative, got {v}")
    free = 1.0 - (v / params.v0) ** 4
    if lead is None:
        a = params.alpha * free
    else:
        s_star = params.s0 + max(
            0.0, v * params.T + v * lead.delta_v / (2.0 * math.sqrt(params.alpha * params.beta)))
        a = params.alpha * (free - (s_star / lead.gap_s) ** 2)
    return min(max(a, a_min), a_max)


def equilibrium_gap(v: float, params: IdmParams) -> float:
    """Desired gap at zero closing speed: ``s0 + v T``."""
    if v < 0.0:
        raise ValueError(f"speed must be non-negative, got {v}")
    return params.s0 + v * params.T


def agent_policy(agent_index: int, traffic, graph) -> "dynamics.VehicleControl":
    """Feedback control for a lane-following agent.

    Curvature is read from the lane centerline at the agent's projection on
    the map; acceleration comes from the IDM law against the same-lane
    leader found by walking the occupancy graph (free-road term when no
    leader lies within perception range).
    """
    from .lane_graph import frenet_waypoint
    from .simulation import leader_observation_for_agent

    agent = traffic.agents[agent_index]
    wp = frenet_waypoint(graph, (agent.state.x, agent.state.y))
    if math.hypot(wp.x - agent.state.x, wp.y - agent.state.y) > graph.w0:
        raise ValueError(f"agent {agent_index} is not on any lane of the map")
    lead = leader_observation_for_agent(agent_index, traffic, graph)
    a = idm_acceleration(agent.state.v, lead, agent.idm)
    return dynamics.VehicleControl(kappa=wp.kappa, a=a)
