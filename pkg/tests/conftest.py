import numpy as np
import pytest

from felp import SyntheticRoad, build
from felp.dynamics import VehicleFootprint, VehicleState
from felp.idm import IdmParams
from felp.simulation import AgentSpec, TrafficState

FP = VehicleFootprint(length=4.7, width=1.9)


@pytest.fixture(scope="session")
def straight3():
    """Three straight lanes, open boundaries, long enough for plans."""
    return SyntheticRoad(n_lanes=3, lane_width=3.7, length=500.0)


@pytest.fixture(scope="session")
def graph3(straight3):
    return build(straight3, straight3.waypoint(1, 0.0), rm=220.0, r0=1.0)


@pytest.fixture(scope="session")
def ring3():
    """Idealized three-lane ring: every vertex has a left and a right."""
    return SyntheticRoad(n_lanes=3, lane_width=3.7, length=500.0, lateral_wrap=True)


@pytest.fixture(scope="session")
def ring_graph(ring3):
    return build(ring3, ring3.waypoint(0, 0.0), rm=220.0, r0=1.0)


def agent(road, lane, s, v, v0=None, fp=FP, **idm_kwargs):
    x, y, th, _ = road.lane_pose(lane, s)
    params = IdmParams(v0=v0 if v0 is not None else v, **idm_kwargs)
    return AgentSpec(state=VehicleState(x=x, y=y, theta=th, v=v),
                     footprint=fp, idm=params, lane_id=lane)


def ego_state(road, lane, s, v):
    x, y, th, _ = road.lane_pose(lane, s)
    return VehicleState(x=x, y=y, theta=th, v=v)


def make_traffic(road, ego_lane, ego_s, ego_v, agents=()):
    return TrafficState(ego=ego_state(road, ego_lane, ego_s, ego_v),
                        ego_footprint=FP, agents=tuple(agents))
