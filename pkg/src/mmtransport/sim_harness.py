"""Closed-loop simulation: replan every ``T_e``, execute the first controls
exactly, move the dynamic obstacles along their true scripts and log margins."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .geom2d import signed_distance_polygon
from .mmr_model import FormationConfig, FormationSpec, circle_arrays, grasp_errors, heading_errors
from .nmpc_planner import PlanInfeasible, PlannerParams, obstacle_snapshot, plan_horizon
from .world import World, dynamic_state

log = logging.getLogger(__name__)

GOAL_REACHED = "GoalReached"
PLAN_FAILED = "PlanFailed"
TIMEOUT = "Timeout"


@dataclass
class SimStep:
    t: float
    config: FormationConfig
    controls: np.ndarray
    margin_static: float
    margin_dynamic: np.ndarray
    tracking_error: float
    grasp_error: np.ndarray


@dataclass
class SimLog:
    steps: list = field(default_factory=list)
    status: str = ""
    horizons: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    message: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])

    @property
    def com(self) -> np.ndarray:
        return np.array([s.config.p for s in self.steps])

    def columns(self, n: int, n_dyn: int) -> list:
        cols = ["t", "p_x", "p_y", "psi"]
        for i in range(n):
            cols += [f"r{i}_{c}" for c in ("x", "y", "phi", "q1", "q2", "q3")]
        for i in range(n):
            cols += [f"r{i}_u{j}" for j in range(6)]
        cols += ["margin_static"] + [f"margin_dyn{d}" for d in range(n_dyn)]
        cols += ["tracking_error"] + [f"grasp_error{i}" for i in range(n)]
        return cols

    def to_csv(self) -> str:
        """Delimited table, one row per ``T_c`` step, metadata in ``#`` lines."""
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k}: {json.dumps(self.meta[k], sort_keys=True)}\n")
        buf.write(f"# status: {self.status}\n")
        if not self.steps:
            return buf.getvalue()
        n = self.steps[0].config.n
        n_dyn = len(self.steps[0].margin_dynamic)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns(n, n_dyn))
        for s in self.steps:
            c = s.config
            row = [s.t, c.p[0], c.p[1], c.psi]
            row += list(c.robot_vectors().reshape(-1))
            row += list(np.asarray(s.controls).reshape(-1))
            row += [s.margin_static] + list(s.margin_dynamic)
            row += [s.tracking_error] + list(s.grasp_error)
            w.writerow([f"{float(x):.12g}" for x in row])
        return buf.getvalue()


def static_margin(config: FormationConfig, spec: FormationSpec, world: World) -> float:
    """Clearance of the bases, object and arms from every static obstacle and wall."""
    centers, radii = circle_arrays(config, spec, arms=True)
    m = float(np.min(world.bounds.margin(centers) - radii))
    for o in world.statics:
        m = min(m, float(np.min(signed_distance_polygon(o.shape, centers) - radii)))
    return m


def dynamic_margins(config: FormationConfig, spec: FormationSpec, world: World, t: float) -> np.ndarray:
    """Clearance of every body circle from each dynamic obstacle's true position."""
    centers, radii = circle_arrays(config, spec, arms=True)
    out = []
    for d in world.dynamics:
        pos, _ = dynamic_state(d, t)
        out.append(float(np.min(np.linalg.norm(centers - pos, axis=1) - radii - d.radius)))
    return np.array(out)


def _record(t, config, spec, world, ref):
    return SimStep(t=t, config=config, controls=np.zeros((config.n, 6)),
                   margin_static=static_margin(config, spec, world),
                   margin_dynamic=dynamic_margins(config, spec, world, t),
                   tracking_error=float(np.hypot(*(config.p - ref(t)))),
                   grasp_error=grasp_errors(config, spec))


def run(world: World, plan, params: PlannerParams, spec: FormationSpec, seed: int = 0,
        timeout_factor: float = 3.0, progress=None) -> SimLog:
    """Receding-horizon loop from the plan's start formation until goal, failure or timeout.

    Execution is exact and open-loop between replans, so the logged states are
    the planned knot states. ``seed`` is recorded only: nothing here is random.
    """
    ref = plan.reference
    corridor = plan.corridor_regions()
    goal = np.asarray(world.goal, float)
    t_max = timeout_factor * max(ref.T, params.T_h)
    out = SimLog(meta={"seed": int(seed), "scenario_hash": world.source_hash,
                       "params": params.to_dict(), "reference_T": ref.T})
    X = plan.start_config
    t_step = 0
    out.steps.append(_record(0.0, X, spec, world, ref))
    warm = None
    while True:
        t0 = t_step * params.T_c
        try:
            hp = plan_horizon(X, ref, t0, obstacle_snapshot(world, t0), corridor, params, spec,
                              warm=warm)
        except PlanInfeasible as e:
            out.status = PLAN_FAILED
            out.message = str(e)
            break
        out.horizons.append({"t0": t0, **hp.diagnostics, "status": hp.status,
                             "objective": hp.objective})
        if progress:
            progress(t0, hp)
        done = False
        for k in range(params.n_exec):
            out.steps[-1].controls = hp.controls[k].copy()
            X = hp.states[k + 1]
            t_step += 1
            t = t_step * params.T_c
            out.steps.append(_record(t, X, spec, world, ref))
            if np.hypot(*(X.p - goal)) <= params.goal_tol:
                out.status = GOAL_REACHED
                done = True
                break
            if t >= t_max - 1e-9:
                out.status = TIMEOUT
                done = True
                break
        if done:
            break
        warm = hp
    return out


@dataclass
class AuditReport:
    min_static_margin: float
    min_dynamic_margin: list
    max_grasp_error: float
    max_heading_error: float
    max_tracking_error: float
    path_length: float
    completion_time: float
    status: str
    wall_time_per_horizon: list
    violations: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def audit(log_: SimLog, world: World, spec: FormationSpec, params: PlannerParams | None = None,
          tol: float = 1e-3) -> AuditReport:
    """Recompute every margin from the logged raw states and flag violations."""
    params = params or PlannerParams()
    viol = []
    smin = np.inf
    n_dyn = len(world.dynamics)
    dmin = np.full(n_dyn, np.inf)
    gmax = hmax = 0.0
    for s in log_.steps:
        c = s.config
        centers, radii = circle_arrays(c, spec, arms=True)
        ms = float(np.min(world.bounds.margin(centers) - radii))
        for o in world.statics:
            ms = min(ms, float(np.min(signed_distance_polygon(o.shape, centers) - radii)))
        smin = min(smin, ms)
        if ms < params.d_safe - tol:
            viol.append(f"t={s.t:.2f}: static margin {ms:.4f}")
        for d, obs in enumerate(world.dynamics):
            pos, _ = dynamic_state(obs, s.t)
            md = float(np.min(np.linalg.norm(centers - pos, axis=1) - radii - obs.radius))
            dmin[d] = min(dmin[d], md)
            if md < params.d_safe_dyn - tol:
                viol.append(f"t={s.t:.2f}: dynamic obstacle {d} margin {md:.4f}")
        ge = float(np.max(grasp_errors(c, spec)))
        he = float(np.max(heading_errors(c)))
        gmax, hmax = max(gmax, ge), max(hmax, he)
        if ge > 1e-4:
            viol.append(f"t={s.t:.2f}: grasp error {ge:.2e}")
        if he > 1e-6:
            viol.append(f"t={s.t:.2f}: heading error {he:.2e}")
        if not spec.admissible(c, tol=1e-6):
            viol.append(f"t={s.t:.2f}: joint limits violated")
        u = np.asarray(s.controls)
        if np.any(u < spec.u_lower() - 1e-9) or np.any(u > spec.u_upper() + 1e-9):
            viol.append(f"t={s.t:.2f}: control bounds violated")
    com = log_.com
    return AuditReport(
        min_static_margin=float(smin),
        min_dynamic_margin=[float(x) for x in dmin],
        max_grasp_error=gmax,
        max_heading_error=hmax,
        max_tracking_error=float(max((s.tracking_error for s in log_.steps), default=0.0)),
        path_length=float(np.sum(np.linalg.norm(np.diff(com, axis=0), axis=1))) if len(com) > 1 else 0.0,
        completion_time=float(log_.steps[-1].t) if log_.steps else 0.0,
        status=log_.status,
        wall_time_per_horizon=[float(h["wall_time"]) for h in log_.horizons],
        violations=viol,
    )
