"""Key-value text configuration.

INI sections cover the road, map resolution, vehicle limits, driver
nominals, cost weights, planner choice, and scenario parameters. Every
key has a default; a config file and CLI flags override selectively.
Range-valued road keys use ``lane:lo-hi,lo-hi | lane:...`` and boundary
permissions use ``a-b:lo-hi:perm | ...``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

from .dynamics import VehicleFootprint
from .idm import IdmParams
from .road import SyntheticRoad
from .simulation import CostConfig
from .planner import PlannerConfig

DEFAULTS = {
    "road": {
        "lanes": "3",
        "lane_width": "3.7",
        "length": "10000",
        "curvature": "0:0",
        "lane_ranges": "",
        "route_ranges": "",
        "boundaries": "",
        "lateral_wrap": "false",
    },
    "map": {
        "r0": "1.0",
        "range_back": "50",
        "range_ahead": "100",
    },
    "vehicle": {
        "length": "4.7",
        "width": "1.9",
        "kappa_max": "0.2",
        "a_min": "-8.0",
        "a_max": "4.0",
    },
    "idm": {
        "v0": "20.0",
        "T": "1.5",
        "s0": "2.0",
        "alpha": "1.5",
        "beta": "2.5",
    },
    "cost": {
        "w_accel": "0.3",
        "w_headway": "1.0",
        "t_safe": "1.0",
        "w_agent_brake": "0.5",
        "b_comfort": "2.0",
        "w_speed": "1.0",
        "w_dist": "0.1",
        "v_des": "20.0",
    },
    "planner": {
        "variant": "felp",
        "prediction": "idm",
        "horizon": "100",
        "primitive_edges": "20",
        "dt": "0.05",
        "t_max": "30",
    },
    "scenario": {
        "type": "highway",
        "duration": "300",
        "replan_period": "0.25",
        "agents": "8",
        "seed": "1",
        "jitter": "0.1",
        "ou_theta": "0.05",
        "ou_sigma": "0.5",
        "ou_clamp": "3.0",
    },
}


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None):
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULTS)
    if path is not None:
        read = parser.read(path)
        if not read:
            raise FileNotFoundError(f"config file {path!r} not found")
    for (section, key), value in (overrides or {}).items():
        parser.set(section, key, str(value))
    return parser


def _parse_ranges(text: str) -> dict:
    """'0:0-40,80-150 | 1:0-150' -> {0: [(0, 40), (80, 150)], 1: [(0, 150)]}"""
    out = {}
    for chunk in filter(None, (c.strip() for c in text.split("|"))):
        lane_txt, ranges_txt = chunk.split(":", 1)
        ranges = []
        for rng in filter(None, (r.strip() for r in ranges_txt.split(","))):
            lo, hi = rng.split("-")
            ranges.append((float(lo), float(hi)))
        out[int(lane_txt)] = ranges
    return out


def _parse_boundaries(text: str) -> dict:
    """'0-1:0-40:both | 0-1:40-80:none' -> {(0,1): [(0,40,'both'), ...]}"""
    out = {}
    for chunk in filter(None, (c.strip() for c in text.split("|"))):
        pair_txt, rng_txt, perm = (p.strip() for p in chunk.split(":"))
        a, b = (int(v) for v in pair_txt.split("-"))
        lo, hi = (float(v) for v in rng_txt.split("-"))
        out.setdefault((a, b), []).append((lo, hi, perm))
    return out


def _parse_curvature(text: str) -> list:
    """'0:0, 500:0.01' -> [(0.0, 0.0), (500.0, 0.01)]"""
    pts = []
    for chunk in filter(None, (c.strip() for c in text.replace("|", ",").split(","))):
        s_txt, k_txt = chunk.split(":")
        pts.append((float(s_txt), float(k_txt)))
    return pts or [(0.0, 0.0)]


def build_road(parser) -> SyntheticRoad:
    sec = parser["road"]
    return SyntheticRoad(
        n_lanes=sec.getint("lanes"),
        lane_width=sec.getfloat("lane_width"),
        length=sec.getfloat("length"),
        kappa_segments=_parse_curvature(sec.get("curvature")),
        lane_ranges=_parse_ranges(sec.get("lane_ranges")) or None,
        route_ranges=_parse_ranges(sec.get("route_ranges")) or None,
        boundaries=_parse_boundaries(sec.get("boundaries")) or None,
        lateral_wrap=sec.getboolean("lateral_wrap"),
    )


def build_idm(parser) -> IdmParams:
    sec = parser["idm"]
    return IdmParams(v0=sec.getfloat("v0"), T=sec.getfloat("T"),
                     s0=sec.getfloat("s0"), alpha=sec.getfloat("alpha"),
                     beta=sec.getfloat("beta"))


def build_cost(parser) -> CostConfig:
    sec = parser["cost"]
    return CostConfig(
        w_accel=sec.getfloat("w_accel"), w_headway=sec.getfloat("w_headway"),
        t_safe=sec.getfloat("t_safe"), w_agent_brake=sec.getfloat("w_agent_brake"),
        b_comfort=sec.getfloat("b_comfort"), w_speed=sec.getfloat("w_speed"),
        w_dist=sec.getfloat("w_dist"), v_des=sec.getfloat("v_des"))


def build_planner(parser, cost: Optional[CostConfig] = None) -> PlannerConfig:
    sec = parser["planner"]
    veh = parser["vehicle"]
    return PlannerConfig(
        variant=sec.get("variant"),
        prediction=sec.get("prediction"),
        s_m=sec.getfloat("horizon"),
        n0=sec.getint("primitive_edges"),
        cost=cost if cost is not None else build_cost(parser),
        dt=sec.getfloat("dt"),
        t_max=sec.getfloat("t_max"),
        kappa_max=veh.getfloat("kappa_max"),
        a_min=veh.getfloat("a_min"),
        a_max=veh.getfloat("a_max"),
    )


def build_footprint(parser) -> VehicleFootprint:
    sec = parser["vehicle"]
    return VehicleFootprint(length=sec.getfloat("length"), width=sec.getfloat("width"))
