"""The directed-graph map: construction, ramps, shortest-path queries,
vehicle registration.

Run:  python demos/02_lane_graph_map.py
"""
from felp import lane_graph
from felp.dynamics import VehicleFootprint, VehicleState
from felp.lane_graph import build, extend, frenet, leader_of, register, shorten
from felp.road import SyntheticRoad

# A highway stretch with a discontinuous right lane (off-ramp, then
# on-ramp whose initial section cannot be entered from the highway) and a
# solid line between the middle and left lanes midway.
road = SyntheticRoad(
    n_lanes=3, lane_width=3.7, length=300.0,
    lane_ranges={0: [(0.0, 80.0), (130.0, 300.0)]},
    boundaries={
        (0, 1): [(0.0, 130.0, "both"), (130.0, 160.0, "none"), (160.0, 300.0, "both")],
        (1, 2): [(0.0, 100.0, "both"), (100.0, 200.0, "none"), (200.0, 300.0, "both")],
    })

graph = build(road, road.waypoint(1, 0.0), rm=250.0, r0=1.0)
print(f"built {len(graph.vertices)} vertices, "
      f"{sum(len(e) for e in graph.out_edges.values())} edges")
for lane in range(3):
    count = sum(1 for k in graph.vertices if k[0] == lane)
    lo = min((k[1] for k in graph.vertices if k[0] == lane), default=None)
    print(f"  lane {lane}: {count} vertices, first at s = "
          f"{lo / 1000 if lo is not None else '-'} m")
print("the on-ramp's inaccessible initial section holds no vertices\n")

a = graph.vertices[(1, 40000)]
b = graph.vertices[(2, 42000)]
print(f"d(A, B) = {lane_graph.shortest_path_length(graph, a, b):.1f} m "
      f"(one lane width + two edges)")
print(f"phi(A, B) = {lane_graph.shortest_path_count(graph, a, b)} shortest paths\n")

# Shift the window forward, as the closed loop does while driving.
graph = shorten(extend(graph, road, 20.0), 20.0)
print(f"after shifting the window 20 m: {len(graph.vertices)} vertices, "
      f"s range {graph.s_bounds()}\n")

# Register two vehicles and query the leader relation.
fp = VehicleFootprint(4.7, 1.9)
register(graph, "ego", VehicleState(x=60.0, y=3.7, theta=0.0, v=20.0), fp)
register(graph, "other", VehicleState(x=95.0, y=3.7, theta=0.0, v=18.0), fp)
print("ego occupies", sorted(graph.vehicle_vertices["ego"]))
found = leader_of(graph, "ego", "same")
print(f"leader of ego: {found[0]} at a {found[1]:.2f} m bumper gap")
print("frenet of (61.3, 4.0):", frenet(graph, (61.3, 4.0)))
