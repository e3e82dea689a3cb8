"""Speed feedback basics: the acceleration law and platoon relaxation.

Run:  python demos/01_speed_feedback.py
"""
import numpy as np

from felp.dynamics import VehicleControl, VehicleState, step
from felp.idm import IdmParams, LeadObservation, equilibrium_gap, idm_acceleration

params = IdmParams()
print("driver parameters:", params)
print()

print("free-road acceleration over speed:")
for v in (0.0, 5.0, 10.0, 15.0, 20.0, 25.0):
    print(f"  v = {v:5.1f} m/s  ->  a = {idm_acceleration(v, None, params):+.3f} m/s^2")
print()

print("response to a leader 30 m ahead (bumper to bumper):")
for dv in (-5.0, 0.0, 5.0):
    a = idm_acceleration(20.0, LeadObservation(30.0, dv), params)
    print(f"  closing speed {dv:+.1f} m/s  ->  a = {a:+.3f} m/s^2")
print()

# A five-vehicle platoon behind a 7 m/s leader relaxes to the equilibrium gap.
rng = np.random.default_rng(0)
leader_v = 7.0
eq = equilibrium_gap(leader_v, params)
positions = [0.0]
for g in eq * (1 + rng.uniform(-0.3, 0.5, 5)):
    positions.append(positions[-1] - g)
speeds = [leader_v] + list(leader_v + rng.uniform(-2, 2, 5))
dt = 0.05
for k in range(int(120 / dt)):
    accels = [0.0]
    for i in range(1, 6):
        gap = positions[i - 1] - positions[i]
        accels.append(idm_acceleration(speeds[i],
                                       LeadObservation(gap, speeds[i] - speeds[i - 1]),
                                       params))
    for i in range(6):
        s = step(VehicleState(positions[i], 0, 0, speeds[i]),
                 VehicleControl(0.0, accels[i]), dt)
        positions[i], speeds[i] = s.x, s.v
    if k % 600 == 0:
        gaps = [float(positions[i - 1] - positions[i]) for i in range(1, 6)]
        print(f"t = {k * dt:5.1f} s   gaps = {[round(g, 2) for g in gaps]}")

print(f"\nequilibrium gap at {leader_v} m/s: {eq:.2f} m")
gaps = [float(positions[i - 1] - positions[i]) for i in range(1, 6)]
print(f"final gaps: {[round(g, 2) for g in gaps]}")
