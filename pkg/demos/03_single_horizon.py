"""
One receding-horizon solve
==========================

Two robots carry a bar down a corridor while an obstacle drives toward
them. A single 6 s horizon is solved; the obstacle is extrapolated at
constant velocity and the plan bends around it with the required clearance.
"""
import numpy as np

from mmtransport.geom2d import ConvexRegion
from mmtransport.global_planner import smooth_path
from mmtransport.mmr_model import circle_arrays, formation_from_dict, grasp_errors
from mmtransport.nmpc_planner import PlannerParams, plan_horizon
from mmtransport.world import predict_positions

spec = formation_from_dict({"n": 2})
params = PlannerParams()
corridor = [ConvexRegion.box([0, 0], [8, 3])]
ref = smooth_path([[1.0, 1.5], [7.0, 1.5]], params.v_op)
X0 = spec.nominal([1.0, 1.5], 0.0)

# observed obstacle: position, velocity, radius
obstacle = (np.array([3.2, 1.6]), np.array([-0.1, 0.0]), 0.2)
plan = plan_horizon(X0, ref, 0.0, [obstacle], corridor, params, spec)
print(f"status {plan.status}, objective {plan.objective:.4f}, violation {plan.violation:.1e}")
print(f"solver: {plan.diagnostics['outer']} outer / {plan.diagnostics['inner']} inner iterations, "
      f"{plan.diagnostics['wall_time']:.2f} s")

pred = predict_positions(obstacle[0], obstacle[1], params.N_h, params.T_c)
print(" k    CoM            clearance  grasp err")
for k in range(1, params.N_h + 1, 3):
    X = plan.states[k]
    c, r = circle_arrays(X, spec, arms=True)
    clear = np.min(np.linalg.norm(c - pred[k - 1], axis=1) - r - obstacle[2])
    print(f"{k:2d}  {np.round(X.p, 3)!s:14}  {clear:8.4f}   {grasp_errors(X, spec).max():.1e}")

# the first T_e / T_c controls are what gets executed before the next solve
print("first executed controls, robot 0:", np.round(plan.controls[0, 0], 4))
