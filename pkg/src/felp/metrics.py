"""Trajectory metrics from executed traces.

The trace is a flat row store (time, vehicle_id, x, y, theta, v, a) sampled
at the simulation step. The report carries 1% and 99% percentiles of the
ego's jerk, acceleration, speed and headway, the 1% percentile of the
induced brake (target-lane follower acceleration while the ego's occupancy
spans two lanes), the mean planning time, and the collision count.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1
TRACE_FIELDS = ("time", "vehicle_id", "x", "y", "theta", "v", "a")


@dataclass
class Trace:
    """Columnar trace rows; vehicle id 0 is the ego."""

    time: np.ndarray
    vehicle_id: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __len__(self):
        return len(self.time)


def write_trace_csv(path, trace: Trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for i in range(len(trace)):
            writer.writerow((f"{trace.time[i]:.6f}", int(trace.vehicle_id[i]),
                             f"{trace.x[i]:.6f}", f"{trace.y[i]:.6f}",
                             f"{trace.theta[i]:.9f}", f"{trace.v[i]:.6f}",
                             f"{trace.a[i]:.6f}"))


def read_trace_csv(path) -> Trace:
    cols = {name: [] for name in TRACE_FIELDS}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            for name in TRACE_FIELDS:
                cols[name].append(float(row[name]))
    return Trace(time=np.array(cols["time"]),
                 vehicle_id=np.array(cols["vehicle_id"], dtype=np.int64),
                 x=np.array(cols["x"]), y=np.array(cols["y"]),
                 theta=np.array(cols["theta"]), v=np.array(cols["v"]),
                 a=np.array(cols["a"]))


@dataclass
class MetricsReport:
    """Percentile summary of one run. Percentile pairs must be ordered."""

    jerk_p1: float
    jerk_p99: float
    accel_p1: float
    accel_p99: float
    speed_p1: float
    speed_p99: float
    headway_p1: Optional[float]
    headway_p99: Optional[float]
    induced_brake_p1: Optional[float]
    mean_plan_time_ms: float
    collision_count: int
    samples: int = 0
    duration: float = 0.0
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        for lo, hi in ((self.jerk_p1, self.jerk_p99),
                       (self.accel_p1, self.accel_p99),
                       (self.speed_p1, self.speed_p99),
                       (self.headway_p1, self.headway_p99)):
            if lo is not None and hi is not None and lo > hi + 1e-12:
                raise ValueError(f"percentile pair out of order: {lo} > {hi}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        data = json.loads(text)
        data.pop("version", None)
        return cls(version=SCHEMA_VERSION, **data)


def _percentiles(values: np.ndarray) -> tuple:
    if len(values) == 0:
        return None, None
    return (float(np.percentile(values, 1.0)), float(np.percentile(values, 99.0)))


def compute_metrics(trace: Trace, road, ego_footprint, margin: float = 0.5,
                    dt: float = 0.05, perception: float = 100.0,
                    plan_times_ms: Optional[Sequence[float]] = None,
                    collision_count: int = 0,
                    footprints: Optional[Dict[int, tuple]] = None) -> MetricsReport:
    """Metric suite over an executed trace.

    Jerk comes from the central difference of the ego's acceleration
    samples; headway samples exist only when the ego has a leader within
    perception range; the induced brake pools the target-lane follower's
    acceleration over every interval in which the ego's footprint spans
    two lanes. Percentiles interpolate linearly.
    """
    ego_rows = np.flatnonzero(trace.vehicle_id == 0)
    if len(ego_rows) < 3:
        raise ValueError("trace too short: need at least 3 ego samples")

    times = trace.time[ego_rows]
    ego_a = trace.a[ego_rows]
    ego_v = trace.v[ego_rows]
    # Drop the final bookkeeping row (no control attached) from percentiles.
    ego_a_m = ego_a[:-1]
    jerk = (ego_a_m[2:] - ego_a_m[:-2]) / (2.0 * dt)

    # Road-frame coordinates of every row.
    n_rows = len(trace)
    s_all = np.empty(n_rows)
    l_all = np.empty(n_rows)
    for i in range(n_rows):
        s_all[i], l_all[i] = road.frenet((trace.x[i], trace.y[i]))

    frame_index: Dict[float, List[int]] = {}
    for i in range(n_rows):
        frame_index.setdefault(round(trace.time[i], 6), []).append(i)

    n_lanes = road.n_lanes
    lane_offsets = [road.lane_offset(k) for k in range(n_lanes)]
    half_len = ego_footprint.length / 2.0

    def lane_of(l_value: float) -> int:
        return min(range(n_lanes), key=lambda k: abs(lane_offsets[k] - l_value))

    def footprint_of(vid: int) -> tuple:
        if footprints and vid in footprints:
            return footprints[vid]
        return (ego_footprint.length, ego_footprint.width)

    headways: List[float] = []
    induced: List[float] = []
    prev_single_lane: Optional[int] = None

    for row_e in ego_rows[:-1]:
        t_key = round(trace.time[row_e], 6)
        rows = frame_index.get(t_key, ())
        ex, ey, eth = trace.x[row_e], trace.y[row_e], trace.theta[row_e]
        es = s_all[row_e]
        # Lane span from the inflated footprint's lateral extent.
        hl = ego_footprint.length / 2.0 + margin
        hw = ego_footprint.width / 2.0 + margin
        rth = math.atan2(
            road.ref_pose(es + 0.5)[1] - road.ref_pose(es - 0.5)[1],
            road.ref_pose(es + 0.5)[0] - road.ref_pose(es - 0.5)[0])
        dth = eth - rth
        lext = abs(math.sin(dth)) * hl + abs(math.cos(dth)) * hw
        el = l_all[row_e]
        span = [k for k in range(n_lanes) if abs(lane_offsets[k] - el) <= lext]
        if not span:
            span = [lane_of(el)]

        # Headway against the front-bumper lane's leader.
        fx = ex + math.cos(eth) * half_len
        fy = ey + math.sin(eth) * half_len
        _, fl = road.frenet((fx, fy))
        lane_f = lane_of(fl)
        best_gap = None
        for r in rows:
            vid = int(trace.vehicle_id[r])
            if vid == 0:
                continue
            if lane_of(l_all[r]) != lane_f:
                continue
            ds = s_all[r] - es
            if ds <= 0.0 or ds > perception:
                continue
            gap = ds - (footprint_of(vid)[0] + ego_footprint.length) / 2.0
            if best_gap is None or gap < best_gap:
                best_gap = gap
        if best_gap is not None and trace.v[row_e] > 1e-6:
            headways.append(max(best_gap, 0.0) / trace.v[row_e])

        # Induced brake: follower on the lane the ego is entering.
        if len(span) >= 2:
            if prev_single_lane is not None and prev_single_lane in span:
                targets = [k for k in span if k != prev_single_lane]
            else:
                targets = span
            for k in targets:
                best = None
                for r in rows:
                    vid = int(trace.vehicle_id[r])
                    if vid == 0 or lane_of(l_all[r]) != k:
                        continue
                    ds = es - s_all[r]
                    if ds <= 0.0 or ds > perception:
                        continue
                    if best is None or ds < best[0]:
                        best = (ds, r)
                if best is not None:
                    induced.append(float(trace.a[best[1]]))
        else:
            prev_single_lane = span[0]

    jerk_p = _percentiles(jerk)
    accel_p = _percentiles(ego_a_m)
    speed_p = _percentiles(ego_v)
    headway_p = _percentiles(np.array(headways)) if headways else (None, None)
    induced_p1 = (float(np.percentile(np.array(induced), 1.0)) if induced else None)
    plan_times = list(plan_times_ms or [])
    return MetricsReport(
        jerk_p1=jerk_p[0], jerk_p99=jerk_p[1],
        accel_p1=accel_p[0], accel_p99=accel_p[1],
        speed_p1=speed_p[0], speed_p99=speed_p[1],
        headway_p1=headway_p[0], headway_p99=headway_p[1],
        induced_brake_p1=induced_p1,
        mean_plan_time_ms=(float(np.mean(plan_times)) if plan_times else 0.0),
        collision_count=collision_count,
        samples=int(len(ego_rows)),
        duration=float(times[-1] - times[0]),
    )
