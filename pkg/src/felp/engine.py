"""Compiled rollout core.

Forward-simulates the full traffic state while the ego tracks a spiral
path under speed feedback. The road is passed as flat per-lane sample
tables aligned with the map graph's vertex grid so that the kernel's
occupancy checks agree vertex-for-vertex with the graph registry. The
kernel is JIT-compiled with numba; rollouts are pure functions of their
inputs and bit-deterministic.

Status codes: 0 = path end reached, 1 = collision, 2 = time budget hit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from numba import njit

STATUS_REACHED = 0
STATUS_COLLISION = 1
STATUS_TIMEOUT = 2

_PAD_BACK = 10.0
_PAD_FRONT = 80.0


@dataclass
class SceneTables:
    """Road geometry sampled on the graph's vertex grid, with margins."""

    s0: float
    r0: float
    w0: float
    margin: float
    ref_x: np.ndarray
    ref_y: np.ndarray
    ref_th: np.ndarray
    lane_off: np.ndarray
    lane_valid: np.ndarray
    lane_run: np.ndarray
    lane_ka: np.ndarray
    lane_vx: np.ndarray
    lane_vy: np.ndarray


def build_tables(graph, pad_back: float = _PAD_BACK, pad_front: float = _PAD_FRONT) -> SceneTables:
    """Sample the provider on the graph grid; cached on the graph object."""
    if graph._tables is not None:
        return graph._tables
    provider = graph.provider
    r0 = graph.r0
    lo, hi = graph.s_bounds()
    k_back = int(math.ceil(pad_back / r0))
    k_front = int(math.ceil(pad_front / r0))
    s0 = lo - k_back * r0
    n = k_back + int(round((hi - lo) / r0)) + k_front + 1
    n_lanes = graph.n_lanes

    ref_x = np.empty(n)
    ref_y = np.empty(n)
    ref_th = np.empty(n)
    lane_off = np.array([graph.lane_offset(k) for k in range(n_lanes)])
    lane_valid = np.zeros((n_lanes, n), dtype=np.uint8)
    lane_run = np.full((n_lanes, n), -1, dtype=np.int32)
    lane_ka = np.zeros((n_lanes, n))
    lane_vx = np.empty((n_lanes, n))
    lane_vy = np.empty((n_lanes, n))

    for i in range(n):
        s = s0 + i * r0
        rx, ry, rth, _ = provider.ref_pose(s)
        ref_x[i] = rx
        ref_y[i] = ry
        ref_th[i] = rth
        s_mm = round(s * 1000.0)
        for k in range(n_lanes):
            wp = graph.vertices.get((k, s_mm))
            if wp is not None:
                lane_valid[k, i] = 1
                lane_run[k, i] = graph.run_id(wp.key)
                lane_ka[k, i] = wp.kappa
                lane_vx[k, i] = wp.x
                lane_vy[k, i] = wp.y
            else:
                x, y, _, kl = provider.lane_pose(k, s)
                lane_ka[k, i] = kl
                lane_vx[k, i] = x
                lane_vy[k, i] = y

    tables = SceneTables(s0=s0, r0=r0, w0=graph.w0, margin=graph.margin,
                         ref_x=ref_x, ref_y=ref_y, ref_th=ref_th,
                         lane_off=lane_off, lane_valid=lane_valid,
                         lane_run=lane_run, lane_ka=lane_ka,
                         lane_vx=lane_vx, lane_vy=lane_vy)
    graph._tables = tables
    return tables


@njit(cache=True)
def _project(ref_x, ref_y, s0, r0, px, py, idx):
    """Project a point onto the reference polyline. Returns (s, l, idx)."""
    n = ref_x.shape[0]
    i = idx
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    for _ in range(n):
        ax = ref_x[i]
        ay = ref_y[i]
        bx = ref_x[i + 1]
        by = ref_y[i + 1]
        ex = bx - ax
        ey = by - ay
        seg2 = ex * ex + ey * ey
        t = ((px - ax) * ex + (py - ay) * ey) / seg2
        if t > 1.0 and i < n - 2:
            i += 1
            continue
        if t < 0.0 and i > 0:
            i -= 1
            continue
        seg = math.sqrt(seg2)
        l = (ex * (py - ay) - ey * (px - ax)) / seg
        return s0 + (i + t) * r0, l, i
    seg = math.sqrt(seg2)
    l = (ex * (py - ay) - ey * (px - ax)) / seg
    return s0 + (i + t) * r0, l, i


@njit(cache=True)
def _coarse_index(ref_x, ref_y, px, py):
    n = ref_x.shape[0]
    best = 0
    best_d2 = 1e30
    for i in range(0, n, 8):
        d2 = (ref_x[i] - px) ** 2 + (ref_y[i] - py) ** 2
        if d2 < best_d2:
            best_d2 = d2
            best = i
    if best > n - 2:
        best = n - 2
    return best


@njit(cache=True)
def _idm_accel(v, gap, dv, v0, T, s0p, alpha, beta, a_min, a_max):
    free = 1.0 - (v / v0) ** 4
    if gap > 0.0:
        s_star = s0p + max(0.0, v * T + v * dv / (2.0 * math.sqrt(alpha * beta)))
        a = alpha * (free - (s_star / gap) ** 2)
    else:
        a = alpha * free
    if a < a_min:
        a = a_min
    if a > a_max:
        a = a_max
    return a


@njit(cache=True)
def _rk4_vehicle(x, y, th, v, kappa, a, dt):
    """One constant-control RK4 step with the stop-at-zero-speed clamp."""
    t_int = dt
    if a < 0.0 and v + a * dt < 0.0:
        t_int = v / -a
    if t_int > 0.0:
        k1x = v * math.cos(th)
        k1y = v * math.sin(th)
        k1t = v * kappa
        v2 = v + 0.5 * t_int * a
        th2 = th + 0.5 * t_int * k1t
        k2x = v2 * math.cos(th2)
        k2y = v2 * math.sin(th2)
        k2t = v2 * kappa
        th3 = th + 0.5 * t_int * k2t
        k3x = v2 * math.cos(th3)
        k3y = v2 * math.sin(th3)
        k3t = v2 * kappa
        v4 = v + t_int * a
        th4 = th + t_int * k3t
        k4x = v4 * math.cos(th4)
        k4y = v4 * math.sin(th4)
        k4t = v4 * kappa
        x += t_int / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y += t_int / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        th += t_int / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        v += t_int * a
    if v < 0.0:
        v = 0.0
    return x, y, _wrap(th), v


@njit(cache=True)
def _path_theta(pk0, pb, pc, pd, s):
    return s * (pk0 + s * (pb / 2.0 + s * (pc / 3.0 + s * (pd / 4.0))))


@njit(cache=True)
def _path_kappa(pk0, pb, pc, pd, s):
    return pk0 + s * (pb + s * (pc + s * pd))


@njit(cache=True)
def _advance_pose(px, py, anchor_th, pk0, pb, pc, pd, s_from, s_to):
    """Simpson-advance the on-path position from s_from to s_to."""
    span = s_to - s_from
    n_sub = int(math.ceil(span / 0.25))
    if n_sub < 1:
        n_sub = 1
    h = span / n_sub
    x = px
    y = py
    for i in range(n_sub):
        a = s_from + i * h
        tha = anchor_th + _path_theta(pk0, pb, pc, pd, a)
        thm = anchor_th + _path_theta(pk0, pb, pc, pd, a + 0.5 * h)
        thb = anchor_th + _path_theta(pk0, pb, pc, pd, a + h)
        x += h / 6.0 * (math.cos(tha) + 4.0 * math.cos(thm) + math.cos(thb))
        y += h / 6.0 * (math.sin(tha) + 4.0 * math.sin(thm) + math.sin(thb))
    return x, y


@njit(cache=True)
def _occupancy(veh, lengths, widths, svals, lvals, idx_cache,
               s0, r0, margin, ref_th, lane_off, lane_valid, lane_vx, lane_vy,
               occ_lo, occ_hi):
    """Occupied vertex-index intervals per vehicle per lane."""
    nveh = veh.shape[0]
    nlanes = lane_off.shape[0]
    n = ref_th.shape[0]
    for i in range(nveh):
        hl = lengths[i] / 2.0 + margin
        hw = widths[i] / 2.0 + margin
        xi = veh[i, 0]
        yi = veh[i, 1]
        thi = veh[i, 2]
        ct = math.cos(thi)
        st = math.sin(thi)
        ridx = idx_cache[i]
        if ridx < 0:
            ridx = 0
        if ridx > n - 1:
            ridx = n - 1
        dth = thi - ref_th[ridx]
        sext = abs(math.cos(dth)) * hl + abs(math.sin(dth)) * hw
        lext = abs(math.sin(dth)) * hl + abs(math.cos(dth)) * hw
        j_lo = int(math.ceil((svals[i] - sext - s0) / r0 - 1e-9))
        j_hi = int(math.floor((svals[i] + sext - s0) / r0 + 1e-9))
        if j_lo < 0:
            j_lo = 0
        if j_hi > n - 1:
            j_hi = n - 1
        any_occ = False
        for k in range(nlanes):
            occ_lo[i, k] = -1
            occ_hi[i, k] = -1
            if abs(lane_off[k] - lvals[i]) > lext + 0.5:
                continue
            for j in range(j_lo, j_hi + 1):
                if lane_valid[k, j] == 0:
                    continue
                dx = lane_vx[k, j] - xi
                dy = lane_vy[k, j] - yi
                lx = dx * ct + dy * st
                ly = -dx * st + dy * ct
                if abs(lx) <= hl and abs(ly) <= hw:
                    if occ_lo[i, k] < 0:
                        occ_lo[i, k] = j
                    occ_hi[i, k] = j
                    any_occ = True
        if not any_occ:
            # A vehicle always occupies at least its nearest valid vertex.
            w = int((2.0 * 3.7 + hl) / r0) + 2
            c = int(round((svals[i] - s0) / r0))
            best_k = -1
            best_j = -1
            best_d2 = 1e30
            for k in range(nlanes):
                for j in range(max(0, c - w), min(n, c + w + 1)):
                    if lane_valid[k, j] == 0:
                        continue
                    d2 = (lane_vx[k, j] - xi) ** 2 + (lane_vy[k, j] - yi) ** 2
                    if d2 < best_d2:
                        best_d2 = d2
                        best_k = k
                        best_j = j
            if best_k >= 0:
                occ_lo[i, best_k] = best_j
                occ_hi[i, best_k] = best_j


@njit(cache=True)
def _ego_collides(occ_lo, occ_hi, nveh, nlanes):
    for i in range(1, nveh):
        for k in range(nlanes):
            if occ_lo[0, k] < 0 or occ_lo[i, k] < 0:
                continue
            if occ_lo[0, k] <= occ_hi[i, k] and occ_lo[i, k] <= occ_hi[0, k]:
                return i
    return 0


@njit(cache=True)
def _run_at(lane_run, k, s, s0, r0):
    n = lane_run.shape[1]
    j = int(round((s - s0) / r0))
    if j < 0:
        j = 0
    if j > n - 1:
        j = n - 1
    return lane_run[k, j]


@njit(cache=True)
def simulate(veh, lane_idx, lengths, widths, idm, v0_now,
             s0, r0, w0, margin,
             ref_x, ref_y, ref_th, lane_off, lane_valid, lane_run, lane_ka,
             lane_vx, lane_vy,
             anchor_x, anchor_y, anchor_th, pk0, pb, pc, pd, psf,
             dt, t_budget, a_min, a_max, kappa_max, perception,
             cv_mode,
             w_accel, w_head, t_safe, w_brake, b_comf,
             record, tr_state, tr_t):
    """Roll the traffic forward while the ego tracks the spiral path.

    veh is mutated in place; row 0 is the ego. Returns
    (status, t_end, sigma_end, cost, agent_brake_min, rows, max_step_disp)
    where rows is the number of trace rows written (when recording).
    """
    nveh = veh.shape[0]
    nlanes = lane_off.shape[0]

    # Ego starts exactly on the path anchor.
    veh[0, 0] = anchor_x
    veh[0, 1] = anchor_y
    veh[0, 2] = anchor_th

    idx_cache = np.empty(nveh, np.int64)
    for i in range(nveh):
        idx_cache[i] = _coarse_index(ref_x, ref_y, veh[i, 0], veh[i, 1])
    front_idx = idx_cache[0]

    svals = np.empty(nveh)
    lvals = np.empty(nveh)
    accels = np.empty(nveh)
    kappas = np.empty(nveh)
    occ_lo = np.empty((nveh, nlanes), np.int64)
    occ_hi = np.empty((nveh, nlanes), np.int64)

    sigma = 0.0
    t = 0.0
    cost = 0.0
    brake_min = 0.0
    have_brake = False
    status = STATUS_TIMEOUT
    rows = 0
    max_disp = 0.0
    max_steps = int(math.ceil(t_budget / dt)) + 2

    for _ in range(max_steps):
        # Road coordinates of every vehicle.
        for i in range(nveh):
            s_i, l_i, idx = _project(ref_x, ref_y, s0, r0, veh[i, 0], veh[i, 1], idx_cache[i])
            svals[i] = s_i
            lvals[i] = l_i
            idx_cache[i] = idx

        # Occupancy registry and collision test on the current state.
        _occupancy(veh, lengths, widths, svals, lvals, idx_cache,
                   s0, r0, margin, ref_th, lane_off, lane_valid, lane_vx, lane_vy,
                   occ_lo, occ_hi)
        if _ego_collides(occ_lo, occ_hi, nveh, nlanes) != 0:
            status = STATUS_COLLISION
            break
        if t >= t_budget - 1e-9:
            status = STATUS_TIMEOUT
            break

        # Ego control: curvature from the path, acceleration from the
        # speed feedback against the leader on the front bumper's lane.
        half_len0 = lengths[0] / 2.0
        fx = veh[0, 0] + math.cos(veh[0, 2]) * half_len0
        fy = veh[0, 1] + math.sin(veh[0, 2]) * half_len0
        _, l_front, fidx = _project(ref_x, ref_y, s0, r0, fx, fy, front_idx)
        front_idx = fidx
        lane_f = 0
        best_off = 1e30
        for k in range(nlanes):
            off = abs(lane_off[k] - l_front)
            if off < best_off:
                best_off = off
                lane_f = k
        ego_gap = -1.0
        ego_dv = 0.0
        run_e = _run_at(lane_run, lane_f, svals[0], s0, r0)
        for i in range(1, nveh):
            if lane_idx[i] != lane_f:
                continue
            ds = svals[i] - svals[0]
            if ds <= 0.0 or ds > perception:
                continue
            run_i = _run_at(lane_run, lane_f, svals[i], s0, r0)
            if run_e >= 0 and run_i >= 0 and run_i != run_e:
                continue
            gap = ds - (lengths[0] + lengths[i]) / 2.0
            if ego_gap < 0.0 or gap < ego_gap:
                ego_gap = gap
                ego_dv = veh[0, 3] - veh[i, 3]
        if ego_gap >= 0.0 and ego_gap < 0.01:
            ego_gap = 0.01
        if ego_gap >= 0.0:
            a_e = _idm_accel(veh[0, 3], ego_gap, ego_dv, v0_now[0], idm[0, 1],
                             idm[0, 2], idm[0, 3], idm[0, 4], a_min, a_max)
        else:
            a_e = _idm_accel(veh[0, 3], -1.0, 0.0, v0_now[0], idm[0, 1],
                             idm[0, 2], idm[0, 3], idm[0, 4], a_min, a_max)
        accels[0] = a_e
        k_e = _path_kappa(pk0, pb, pc, pd, sigma)
        if k_e > kappa_max:
            k_e = kappa_max
        if k_e < -kappa_max:
            k_e = -kappa_max
        kappas[0] = k_e

        # Agent controls: lane curvature plus IDM against the same-lane
        # leader (constant velocity when predicting the baseline mode).
        for i in range(1, nveh):
            k_i = lane_idx[i]
            j = idx_cache[i]
            if j > lane_ka.shape[1] - 1:
                j = lane_ka.shape[1] - 1
            kappas[i] = lane_ka[k_i, j]
            if cv_mode != 0:
                accels[i] = 0.0
                continue
            gap_i = -1.0
            dv_i = 0.0
            run_i = _run_at(lane_run, k_i, svals[i], s0, r0)
            for m in range(nveh):
                if m == i:
                    continue
                if m == 0:
                    if occ_lo[0, k_i] < 0:
                        continue
                elif lane_idx[m] != k_i:
                    continue
                ds = svals[m] - svals[i]
                if ds <= 0.0 or ds > perception:
                    continue
                run_m = _run_at(lane_run, k_i, svals[m], s0, r0)
                if run_i >= 0 and run_m >= 0 and run_m != run_i:
                    continue
                gap = ds - (lengths[i] + lengths[m]) / 2.0
                if gap_i < 0.0 or gap < gap_i:
                    gap_i = gap
                    dv_i = veh[i, 3] - veh[m, 3]
            if gap_i >= 0.0 and gap_i < 0.01:
                gap_i = 0.01
            accels[i] = _idm_accel(veh[i, 3], gap_i, dv_i, v0_now[i], idm[i, 1],
                                   idm[i, 2], idm[i, 3], idm[i, 4], a_min, a_max)

        # Step duration: full dt, or the partial step that lands the ego
        # exactly on the path end.
        v_e = veh[0, 3]
        remaining = psf - sigma
        if a_e < 0.0 and v_e + a_e * dt < 0.0:
            ts = v_e / -a_e
            ds_full = v_e * ts + 0.5 * a_e * ts * ts
        else:
            ds_full = v_e * dt + 0.5 * a_e * dt * dt
        reach = False
        dt_eff = dt
        if ds_full >= remaining - 1e-12:
            reach = True
            if abs(a_e) < 1e-9:
                if v_e > 1e-9:
                    dt_eff = remaining / v_e
                else:
                    reach = False
            else:
                disc = v_e * v_e + 2.0 * a_e * remaining
                if disc >= 0.0:
                    root = math.sqrt(disc)
                    dt_eff = (-v_e + root) / a_e
                    if dt_eff < 0.0 or dt_eff > dt:
                        dt_eff = dt
                        reach = dt_eff >= dt and ds_full >= remaining - 1e-12
                else:
                    reach = False
            if not reach:
                dt_eff = dt

        # Running cost over this step.
        step_cost = w_accel * a_e * a_e
        if ego_gap >= 0.0 and v_e > 1e-6:
            headway = ego_gap / v_e
            if headway < t_safe:
                step_cost += w_head * (t_safe - headway) ** 2
        if cv_mode == 0:
            for i in range(1, nveh):
                over = -accels[i] - b_comf
                if over > 0.0:
                    step_cost += w_brake * over * over
        cost += step_cost * dt_eff
        for i in range(1, nveh):
            if not have_brake or accels[i] < brake_min:
                brake_min = accels[i]
                have_brake = True

        if record != 0:
            for i in range(nveh):
                tr_state[rows, i, 0] = veh[i, 0]
                tr_state[rows, i, 1] = veh[i, 1]
                tr_state[rows, i, 2] = veh[i, 2]
                tr_state[rows, i, 3] = veh[i, 3]
                tr_state[rows, i, 4] = accels[i]
            tr_t[rows] = t
            rows += 1

        # Advance. Agents integrate the unicycle; the ego advances its
        # path progress and takes its pose from the path.
        for i in range(1, nveh):
            x, y, th, v = _rk4_vehicle(veh[i, 0], veh[i, 1], veh[i, 2], veh[i, 3],
                                       kappas[i], accels[i], dt_eff)
            disp = math.hypot(x - veh[i, 0], y - veh[i, 1])
            if disp > max_disp:
                max_disp = disp
            veh[i, 0] = x
            veh[i, 1] = y
            veh[i, 2] = th
            veh[i, 3] = v

        if a_e < 0.0 and v_e + a_e * dt_eff < 0.0:
            ts = v_e / -a_e
            d_sigma = v_e * ts + 0.5 * a_e * ts * ts
            v_new = 0.0
        else:
            d_sigma = v_e * dt_eff + 0.5 * a_e * dt_eff * dt_eff
            v_new = v_e + a_e * dt_eff
        sigma_new = sigma + d_sigma
        if reach or sigma_new > psf:
            sigma_new = psf
        if d_sigma > max_disp:
            max_disp = d_sigma
        px, py = _advance_pose(veh[0, 0], veh[0, 1], anchor_th, pk0, pb, pc, pd,
                               sigma, sigma_new)
        veh[0, 0] = px
        veh[0, 1] = py
        veh[0, 2] = _wrap(anchor_th + _path_theta(pk0, pb, pc, pd, sigma_new))
        veh[0, 3] = v_new
        sigma = sigma_new
        t += dt_eff

        if reach:
            status = STATUS_REACHED
            break

    if status == STATUS_REACHED:
        # The final state must be collision-free too.
        for i in range(nveh):
            s_i, l_i, idx = _project(ref_x, ref_y, s0, r0, veh[i, 0], veh[i, 1], idx_cache[i])
            svals[i] = s_i
            lvals[i] = l_i
            idx_cache[i] = idx
        _occupancy(veh, lengths, widths, svals, lvals, idx_cache,
                   s0, r0, margin, ref_th, lane_off, lane_valid, lane_vx, lane_vy,
                   occ_lo, occ_hi)
        if _ego_collides(occ_lo, occ_hi, nveh, nlanes) != 0:
            status = STATUS_COLLISION

    if record != 0:
        for i in range(nveh):
            tr_state[rows, i, 0] = veh[i, 0]
            tr_state[rows, i, 1] = veh[i, 1]
            tr_state[rows, i, 2] = veh[i, 2]
            tr_state[rows, i, 3] = veh[i, 3]
            tr_state[rows, i, 4] = 0.0
        tr_t[rows] = t
        rows += 1

    if not have_brake:
        brake_min = 0.0
    return status, t, sigma, cost, brake_min, rows, max_disp


@njit(cache=True)
def _wrap(th):
    w = (th + math.pi) % (2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@njit(cache=True)
def ego_lane_span(x, y, th, length, width, margin,
                  ref_x, ref_y, ref_th, s0, r0,
                  lane_off, lane_valid, lane_vx, lane_vy, idx_hint):
    """Occupied-lane flags for one vehicle state (used by metrics)."""
    nlanes = lane_off.shape[0]
    veh = np.empty((1, 4))
    veh[0, 0] = x
    veh[0, 1] = y
    veh[0, 2] = th
    veh[0, 3] = 0.0
    lengths = np.empty(1)
    widths = np.empty(1)
    lengths[0] = length
    widths[0] = width
    svals = np.empty(1)
    lvals = np.empty(1)
    idx_cache = np.empty(1, np.int64)
    s_i, l_i, idx = _project(ref_x, ref_y, s0, r0, x, y, idx_hint)
    svals[0] = s_i
    lvals[0] = l_i
    idx_cache[0] = idx
    occ_lo = np.empty((1, nlanes), np.int64)
    occ_hi = np.empty((1, nlanes), np.int64)
    _occupancy(veh, lengths, widths, svals, lvals, idx_cache,
               s0, r0, margin, ref_th, lane_off, lane_valid, lane_vx, lane_vy,
               occ_lo, occ_hi)
    flags = np.zeros(nlanes, np.uint8)
    for k in range(nlanes):
        if occ_lo[0, k] >= 0:
            flags[k] = 1
    return flags, s_i, l_i, idx
