"""
From regions to a reference trajectory
======================================

Every pair of overlapping regions gets one formation node: the pose whose
object centre sits in the overlap, as close as possible to both start and
goal, with every base and the object inside both regions. Dijkstra over
these nodes gives the waypoint path, which is smoothed into Bezier segments
and timed at the operating speed.
"""
import numpy as np

from mmtransport.global_planner import plan_global
from mmtransport.mmr_model import formation_from_dict
from mmtransport.svg import plan_svg
from mmtransport.world import load_scenario_file
from common import out_dir, scenario

world = load_scenario_file(scenario("warehouse_linear"))
spec = formation_from_dict(world.formation)
print(f"formation: n={spec.n}, object radius {spec.r_obj:.3f} m, base radius {spec.r_base:.3f} m")

plan = plan_global(world, spec, rng=np.random.default_rng(0))
g = plan.graph
print(f"graph: {len(g.nodes)} nodes, {len(g.edges)} edges")
print("waypoints:", np.round(plan.waypoints, 3).tolist())
print(f"path length {plan.path_length:.3f} m, reference duration {plan.reference.T:.1f} s")

# the reference is a callable of time; past its end it holds the goal
for t in (0.0, 10.0, 20.0, plan.reference.T, plan.reference.T + 5):
    print(f"  p_r({t:5.1f}) = {np.round(plan.reference(t), 3)}")

(out_dir() / "plan.json").write_text(plan.dumps())
(out_dir() / "regions.svg").write_text(plan_svg(world, plan, "demo"))
print("wrote", out_dir() / "regions.svg")
