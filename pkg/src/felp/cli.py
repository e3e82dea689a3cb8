"""Command-line entry points.

Subcommands: ``merge`` (the pinched-gap merging scenario), ``highway``
(continuous traffic with replacement spawns), ``density`` (the agent-count
sweep), and ``plan-once`` (a single planner invocation on a configured
scene). Outputs are written to the ``--out`` directory: trace.csv,
metrics.json, planner_stats.jsonl, and graph.json.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import config as config_mod
from . import harness, lane_graph
from .harness import ScenarioConfig
from .planner import NoPlanError, plan
from .simulation import TrafficState


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="INI config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", choices=("felp", "cfelp", "rfelp"), default=None)
    p.add_argument("--prediction", choices=("idm", "cv"), default=None)
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--out", default="out", help="output directory")


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out[("scenario", "seed")] = args.seed
    if args.variant is not None:
        out[("planner", "variant")] = args.variant
    if args.prediction is not None:
        out[("planner", "prediction")] = args.prediction
    if args.duration is not None:
        out[("scenario", "duration")] = args.duration
    if args.agents is not None:
        out[("scenario", "agents")] = args.agents
    return out


def _scenario_config(parser, scenario: str) -> ScenarioConfig:
    sec = parser["scenario"]
    return ScenarioConfig(
        road=config_mod.build_road(parser),
        scenario=scenario,
        duration=sec.getfloat("duration"),
        replan_period=sec.getfloat("replan_period"),
        agent_count=sec.getint("agents"),
        seed=sec.getint("seed"),
        planner=config_mod.build_planner(parser),
        idm_nominal=config_mod.build_idm(parser),
        footprint=config_mod.build_footprint(parser),
        r0=parser["map"].getfloat("r0"),
        range_back=parser["map"].getfloat("range_back"),
        range_ahead=parser["map"].getfloat("range_ahead"),
        jitter=sec.getfloat("jitter"),
        ou_theta=sec.getfloat("ou_theta"),
        ou_sigma=sec.getfloat("ou_sigma"),
        ou_clamp=sec.getfloat("ou_clamp"),
    )


def cmd_merge(args) -> int:
    parser = config_mod.load_config(args.config, _overrides(args))
    cfg = harness.merging_config(
        seed=parser["scenario"].getint("seed"),
        prediction=parser["planner"].get("prediction"),
        variant=parser["planner"].get("variant"),
        duration=parser["scenario"].getfloat("duration")
        if args.duration is not None else 30.0)
    result = harness.run_merging(cfg)
    harness.write_outputs(args.out, result)
    print(f"merged={result.events['merged']} "
          f"into_gap={result.events['merged_into_gap']} "
          f"t_merge={result.events['merge_time']} "
          f"collisions={result.report.collision_count}")
    return 0


def cmd_highway(args) -> int:
    parser = config_mod.load_config(args.config, _overrides(args))
    cfg = _scenario_config(parser, "highway")
    result = harness.run_highway(cfg)
    harness.write_outputs(args.out, result)
    print(result.report.to_json())
    return 0


def cmd_density(args) -> int:
    parser = config_mod.load_config(args.config, _overrides(args))
    cfg = _scenario_config(parser, "highway")
    results = harness.run_density_sweep(cfg, counts=(4, 8, 12))
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for count, result in zip((4, 8, 12), results):
        sub = os.path.join(args.out, f"agents_{count}")
        harness.write_outputs(sub, result)
        rows.append((count, result.report))
        print(f"agents={count} mean_plan={result.report.mean_plan_time_ms:.1f} ms "
              f"collisions={result.report.collision_count}")
    with open(os.path.join(args.out, "density_summary.json"), "w") as fh:
        json.dump({str(c): json.loads(r.to_json()) for c, r in rows}, fh, indent=1)
    return 0


def cmd_plan_once(args) -> int:
    parser = config_mod.load_config(args.config, _overrides(args))
    cfg = _scenario_config(parser, parser["scenario"].get("type"))
    if args.horizon is not None:
        cfg = replace(cfg, planner=replace(cfg.planner, s_m=args.horizon))
    if cfg.scenario == "merging":
        merge_cfg = harness.merging_config(
            seed=cfg.seed, prediction=cfg.planner.prediction,
            variant=cfg.planner.variant)
        merge_cfg = replace(merge_cfg, planner=replace(merge_cfg.planner,
                                                       s_m=cfg.planner.s_m))
        ego, agents = harness.merging_scene(merge_cfg.road, merge_cfg.footprint)
        episode = harness.Episode(merge_cfg, ego, agents, ego_lane=0)
    else:
        import numpy as np
        rng = np.random.default_rng(cfg.seed + 777)
        ego_lane = min(1, cfg.road.n_lanes - 1)
        pose = cfg.road.lane_pose(ego_lane, harness.HIGHWAY_EGO_START)
        from .dynamics import VehicleState
        ego = VehicleState(x=pose[0], y=pose[1], theta=pose[2],
                           v=cfg.planner.cost.v_des)
        agents = harness.highway_initial_agents(cfg, rng,
                                                harness.HIGHWAY_EGO_START, ego_lane)
        episode = harness.Episode(cfg, ego, agents, ego_lane=ego_lane)
    os.makedirs(args.out, exist_ok=True)
    try:
        result = plan(episode.traffic(), episode.graph, episode.cfg.planner,
                      ego_kappa=0.0, ego_idm=episode.cfg.idm_nominal)
        stats = result.stats
        summary = {
            "total_cost": result.total_cost,
            "waypoints": [list(w.key) for w in result.waypoints],
            "primitives": [
                {"x": p.x, "y": p.y, "theta": p.theta, "kappa": p.kappa}
                for p in result.primitives],
        }
    except NoPlanError as exc:
        stats = {"no_plan": True, "error": str(exc),
                 "variant": episode.cfg.planner.variant}
        summary = {"no_plan": True}
    with open(os.path.join(args.out, "planner_stats.jsonl"), "a") as fh:
        fh.write(json.dumps(stats) + "\n")
    with open(os.path.join(args.out, "plan.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    lane_graph.dump_json(episode.graph, os.path.join(args.out, "graph.json"))
    print(json.dumps(stats))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="felp", description="Feedback-enhanced lattice planner scenarios")
    sub = parser.add_subparsers(dest="command", required=True)

    p_merge = sub.add_parser("merge", help="run the merging scenario")
    _add_common(p_merge)
    p_merge.set_defaults(func=cmd_merge)

    p_hw = sub.add_parser("highway", help="run continuous highway traffic")
    _add_common(p_hw)
    p_hw.set_defaults(func=cmd_highway)

    p_d = sub.add_parser("density", help="run the 4/8/12-agent density sweep")
    _add_common(p_d)
    p_d.set_defaults(func=cmd_density)

    p_p = sub.add_parser("plan-once", help="plan once from the initial scene")
    _add_common(p_p)
    p_p.add_argument("--horizon", type=float, default=None,
                     help="planning horizon in meters")
    p_p.set_defaults(func=cmd_plan_once)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
