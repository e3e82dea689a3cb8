"""Cubic-spiral boundary problems and the conformal endpoint set.

Run:  python demos/03_spiral_primitives.py
"""
import math

from felp.lane_graph import build
from felp.road import SyntheticRoad
from felp.spiral import PathEndPoint, conformal_endpoints, sample, solve_bvp

print("lane keep, 20 m:")
keep = solve_bvp(PathEndPoint(20.0, 0.0, 0.0, 0.0), 0.0)
print(f"  arc {keep.arc_length:.3f} m, curvature identically zero\n")

print("lane change, 3.7 m over 20 m:")
change = solve_bvp(PathEndPoint(20.0, 3.7, 0.0, 0.0), 0.0)
print(f"  arc {change.arc_length:.3f} m, peak |kappa| {change.max_abs_kappa():.4f} /m")
print("  curvature profile:")
for x, y, th, ka in sample(change, 4.0):
    print(f"    s-> ({x:6.2f}, {y:5.2f})  theta {th:+.3f}  kappa {ka:+.5f}")
print()

print("constant-curvature boundary reproduces the circular arc:")
r, phi = 50.0, 0.4
arc = solve_bvp(PathEndPoint(r * math.sin(phi), r * (1 - math.cos(phi)), phi, 1 / r),
                1 / r)
print(f"  arc length {arc.arc_length:.6f} m (circle gives {r * phi:.6f} m)\n")

road = SyntheticRoad(n_lanes=3, lane_width=3.7, length=300.0)
graph = build(road, road.waypoint(1, 0.0), rm=250.0, r0=1.0)
wp = graph.vertices[(1, 50000)]
print("conformal endpoints 20 edges ahead of a middle-lane waypoint:")
for opt in conformal_endpoints(graph, wp, 20):
    e = opt.endpoint
    print(f"  lateral {opt.lateral:+d}: ({e.x:.1f}, {e.y:+.1f}), "
          f"theta {e.theta:+.2f}, kappa {e.kappa:+.3f}")
wp_edge = graph.vertices[(0, 50000)]
print("and from the rightmost lane (no right option):")
for opt in conformal_endpoints(graph, wp_edge, 20):
    print(f"  lateral {opt.lateral:+d}: y = {opt.endpoint.y:+.1f}")
