"""Closed-loop scenarios: the pinched-gap merge under both prediction
modes, then a short highway episode with metrics, written to out/demo.

Run:  python demos/05_closed_loop_scenarios.py
"""
from dataclasses import replace

from felp.config import (build_footprint, build_idm, build_planner, build_road,
                         load_config)
from felp.harness import (ScenarioConfig, merging_config, run_highway, run_merging,
                          write_outputs)

print("merging scenario (ego 15 m/s boxed behind an equal-speed leader;")
print("the left lane runs 20 m/s with vehicles 20 m ahead and behind)\n")
for prediction in ("idm", "cv"):
    result = run_merging(merging_config(prediction=prediction))
    ev = result.events
    print(f"prediction = {prediction:3s}: merged themselves into the gap: "
          f"{ev['merged_into_gap']}; settle time {ev['merge_time']}; "
          f"collisions {result.report.collision_count}")
print("\nwith the responsive model the follower yields and the gap merge")
print("happens immediately; assuming constant velocity the planner keeps")
print("the lane and can only fall in behind the stream after it passes\n")

parser = load_config()
cfg = ScenarioConfig(road=build_road(parser), scenario="highway", duration=60.0,
                     agent_count=8, seed=1, planner=build_planner(parser),
                     idm_nominal=build_idm(parser), footprint=build_footprint(parser))
print("60 s highway episode, 8 agents, seed 1:")
result = run_highway(cfg)
print(result.report.to_json())
write_outputs("out/demo", result)
print("\ntrace.csv, metrics.json, planner_stats.jsonl written to out/demo")
