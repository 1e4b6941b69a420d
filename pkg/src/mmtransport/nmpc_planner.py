"""Online receding-horizon planner for the formation.

Each cycle solves a finite-horizon tracking problem over ``N_h`` knots of the
formation: object pose plus every robot's base pose, with the arm joints
recovered exactly by inverse kinematics so the grasp holds at every knot. The
per-robot controls are the knot-to-knot joint increments divided by ``T_c``,
which the first-order model integrates back to the knots exactly.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import formation_terms as ft
from .global_planner import contain_circles
from .mmr_model import FormationConfig, FormationSpec, step, wrap_angle
from .nlp_solver import NlpProblem, SolverOptions, Status, solve
from .world import predict_positions

log = logging.getLogger(__name__)


class PlanInfeasible(RuntimeError):
    def __init__(self, message, plan=None):
        super().__init__(message)
        self.plan = plan


class NoRegion(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerParams:
    N_h: int = 24
    T_h: float = 6.0
    T_e: float = 2.0
    T_c: float = 0.25
    v_op: float = 0.15
    d_safe: float = 0.05
    d_safe_dyn: float = 0.1
    W_u: tuple = (0.05, 0.05, 0.25, 2.5, 2.5, 2.5)
    W_e: tuple = (0.01, 0.01)
    W_Nh: float = 1e3
    # extra clearance requested from the solver so the audited margins keep
    # their nominal values despite the solver's feasibility tolerance
    backoff: float = 2e-3
    max_outer: int = 20
    max_inner: int = 200
    goal_tol: float = 0.05

    def __post_init__(self):
        if not self.T_e < self.T_h:
            raise ValueError("T_e must be shorter than T_h")
        if abs(self.N_h * self.T_c - self.T_h) > 1e-9:
            raise ValueError("N_h * T_c must equal T_h")
        if abs(round(self.T_e / self.T_c) * self.T_c - self.T_e) > 1e-9:
            raise ValueError("T_e must be a whole number of T_c steps")
        if min(self.W_u) < 0 or min(self.W_e) < 0 or self.W_Nh < 0:
            raise ValueError("weights must be non-negative")
        if len(self.W_u) != 6 or len(self.W_e) != 2:
            raise ValueError("W_u needs 6 entries and W_e 2")

    @property
    def n_exec(self) -> int:
        return int(round(self.T_e / self.T_c))

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_outer=self.max_outer, max_inner=self.max_inner)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d) -> "PlannerParams":
        d = dict(d or {})
        for k in ("W_u", "W_e"):
            if k in d:
                d[k] = tuple(float(x) for x in d[k])
        fields = cls.__dataclass_fields__
        unknown = set(d) - set(fields)
        if unknown:
            raise ValueError(f"unknown planner parameters: {sorted(unknown)}")
        return cls(**{k: (type(fields[k].default)(v) if not isinstance(v, tuple) else v)
                      for k, v in d.items()})


@dataclass
class HorizonPlan:
    t0: float
    states: list
    controls: np.ndarray          # (N_h, n, 6)
    regions: list                 # corridor index per knot, knot 0 included
    status: str
    objective: float
    violation: float = 0.0
    knots: np.ndarray = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def com(self) -> np.ndarray:
        return np.array([s.p for s in self.states])


def _controls_from_knots(f: ft.Forward, T_c: float):
    """Joint increments between consecutive knots, per robot, as rates."""
    dB = np.diff(f.B, axis=0)
    dphi = np.diff(f.phi, axis=0)
    dth = wrap_angle(np.diff(f.theta, axis=0))
    dq2 = np.diff(f.q2, axis=0)
    dpsi = np.diff(f.psi)[:, None]
    D = np.concatenate([dB, dphi[..., None], (dth - dphi)[..., None], dq2[..., None],
                        (dpsi - dth)[..., None]], axis=-1)
    return D / T_c


def _controls_backward(f: ft.Forward, gu, T_c: float):
    """Gradient on the knot stack from a gradient on the ``(K-1, n, 6)`` controls."""
    gD = gu / T_c
    K, n = len(f.Z), f.n
    gB = np.zeros((K, n, 2))
    gB[1:] += gD[..., 0:2]
    gB[:-1] -= gD[..., 0:2]
    gphi_d = gD[..., 2] - gD[..., 3]
    gth_d = gD[..., 3] - gD[..., 5]
    gpsi_d = gD[..., 5].sum(axis=1)
    gphi = np.zeros((K, n))
    gphi[1:] += gphi_d
    gphi[:-1] -= gphi_d
    gth = np.zeros((K, n))
    gth[1:] += gth_d
    gth[:-1] -= gth_d
    gq2 = np.zeros((K, n))
    gq2[1:] += gD[..., 4]
    gq2[:-1] -= gD[..., 4]
    gpsi = np.zeros(K)
    gpsi[1:] += gpsi_d
    gpsi[:-1] -= gpsi_d
    return f.backward(gB=gB, gphi=gphi, gtheta=gth, gq2=gq2, gpsi=gpsi)


def _cost_terms(u, com, ref_pts, params: PlannerParams):
    """Cost and its gradients w.r.t. controls ``(N, n, 6)`` and CoMs ``(N+1, 2)``."""
    N = params.N_h
    Wu = np.asarray(params.W_u)
    We = np.asarray(params.W_e)
    uu = u[1:]
    e = com[1:] - ref_pts                 # knots 1..N
    val = float(np.sum(Wu * uu * uu)) + float(np.sum(We * e[:-1] ** 2)) + params.W_Nh * float(e[-1] @ e[-1])
    gu = np.zeros_like(u)
    gu[1:] = 2.0 * Wu * uu
    gcom = np.zeros_like(com)
    gcom[1:N] = 2.0 * We * e[:-1]
    gcom[N] = 2.0 * params.W_Nh * e[-1]
    return val, gu, gcom


def tracking_cost(plan: HorizonPlan, ref, t0: float, params: PlannerParams) -> float:
    """Control effort over knots ``1..N_h-1``, CoM error, and the terminal error."""
    N = params.N_h
    ts = t0 + params.T_c * np.arange(1, N + 1)
    ref_pts = ref(ts) if callable(ref) else np.asarray(ref, float)
    com = plan.com
    if len(com) != N + 1:
        raise ValueError("plan length does not match N_h")
    return _cost_terms(np.asarray(plan.controls, float), com, ref_pts, params)[0]


def assign_regions(knots, corridor, circles=None, d_safe: float = 0.0, start_index: int = 0,
                   slack=None, strict: bool = False):
    """Corridor index per knot, never decreasing along the horizon.

    Each knot takes the latest corridor region that contains its CoM and, when
    ``circles`` (per-knot ``(centers, radii)``) are given, holds them within
    ``slack[k]`` of the margin ``d_safe``. Without any such region the knot
    keeps the previous index if it still contains the CoM, otherwise the
    region with the best CoM margin. ``strict`` turns that fallback into a
    :class:`NoRegion` error when the CoM is outside every region.
    """
    knots = np.atleast_2d(np.asarray(knots, float))
    K = len(knots)
    if slack is None:
        slack = np.zeros(K)
    slack = np.broadcast_to(np.asarray(slack, float), (K,))
    out = []
    idx = int(start_index)
    for k in range(K):
        pt = knots[k]
        cand = []
        for j in range(idx, len(corridor)):
            reg = corridor[j]
            if not reg.contains(pt, slack=1e-9):
                continue
            if circles is not None:
                _, m = contain_circles(reg, circles[k], d_safe)
                if m < -slack[k]:
                    continue
            cand.append(j)
        if cand:
            idx = max(cand)
        elif not corridor[idx].contains(pt, slack=1e-9):
            inside = [j for j in range(idx, len(corridor)) if corridor[j].contains(pt, slack=1e-9)]
            if inside:
                idx = inside[0]
            else:
                if strict:
                    raise NoRegion(f"knot {k} at {pt} lies outside every corridor region")
                margins = [float(corridor[j].margin(pt)[0]) for j in range(idx, len(corridor))]
                idx = idx + int(np.argmax(margins))
        out.append(idx)
    return out


def _rollout(X0: FormationConfig, u, T_c: float):
    """Integrate each robot's ``[x, y, phi, q1, q2, q3]`` under the controls."""
    Q = X0.robot_vectors()
    out = [Q]
    for k in range(len(u)):
        Q = np.array([step(Q[i], u[k, i], T_c) for i in range(len(Q))])
        out.append(Q)
    return out


def _shift_warm(warm: HorizonPlan, shift: int):
    Z = warm.knots
    N = len(Z) - 1
    out = np.empty_like(Z)
    last = Z[-1] - Z[-2]
    for k in range(N + 1):
        j = k + shift
        out[k] = Z[j] if j <= N else Z[-1] + (j - N) * last
    return out


def _cold_start(z0, ref, t0, params: PlannerParams):
    N = params.N_h
    ts = t0 + params.T_c * np.arange(0, N + 1)
    r = ref(ts)
    Z = np.repeat(z0[None, :], N + 1, axis=0)
    delta = r - r[0]
    n = (len(z0) - 3) // 3
    Z[:, 0:2] += delta
    Z[:, 3:3 + 2 * n] += np.tile(delta, (1, n))
    return Z


class _HorizonProblem:
    """Assembles the horizon NLP; constraint values and derivatives are cached per point."""

    def __init__(self, z0, spec, params, ref_pts, faces, obstacles):
        self.z0 = z0
        self.spec = spec
        self.params = params
        self.ref_pts = ref_pts
        self.faces = faces
        self.obstacles = obstacles
        self.D = len(z0)
        self.N = params.N_h
        self._key = None
        # tightened so controls stay inside the true box despite the solver tolerance
        self.ulo = np.asarray(spec.u_lower(), float) + 1e-3
        self.uhi = np.asarray(spec.u_upper(), float) - 1e-3

    # decision variables are knot increments; the cumulative sum acts as a
    # preconditioner for the chain-structured control cost
    def full(self, x):
        Z = self.z0[None, :] + np.cumsum(x.reshape(self.N, self.D), axis=0)
        return np.vstack([self.z0[None, :], Z])

    def encode(self, Z):
        return np.diff(np.asarray(Z), axis=0).reshape(-1)

    @staticmethod
    def _pull(g):
        return np.cumsum(g[::-1], axis=0)[::-1].reshape(-1)

    def _eval(self, x):
        key = x.tobytes()
        if key == self._key:
            return self._cache
        p = self.params
        Z = self.full(x)
        f_all = ft.Forward(Z, self.spec)
        f_dec = ft.Forward(Z[1:], self.spec)
        u = _controls_from_knots(f_all, p.T_c)
        parts, vjps = [], []
        v, j = ft.containment_terms(f_dec, self.faces, p.d_safe, p.backoff)
        parts.append(v)
        vjps.append(("dec", len(v), j))
        v, j = ft.dynamic_terms(f_dec, self.obstacles, p.d_safe_dyn, p.backoff)
        parts.append(v)
        vjps.append(("dec", len(v), j))
        v, j = ft.joint_bound_terms(f_dec, 1e-4)
        parts.append(v.reshape(-1))
        vjps.append(("dec", v.size, j))
        cu = np.concatenate([(u - self.uhi).reshape(-1), (self.ulo - u).reshape(-1)])
        parts.append(cu)

        def ctrl_vjp(w, f_all=f_all, shape=u.shape):
            m = w.size // 2
            gu = w[:m].reshape(shape) - w[m:].reshape(shape)
            return _controls_backward(f_all, gu, p.T_c)

        vjps.append(("all", len(cu), ctrl_vjp))
        self._key = key
        self._cache = (f_all, u, np.concatenate(parts), vjps)
        return self._cache

    def value_and_grad(self, x):
        f_all, u, _, _ = self._eval(x)
        val, gu, gcom = _cost_terms(u, f_all.p, self.ref_pts, self.params)
        g = _controls_backward(f_all, gu, self.params.T_c)
        g[:, 0:2] += gcom
        return val, self._pull(g[1:])

    def ineq(self, x):
        return self._eval(x)[2]

    def ineq_vjp(self, x, w):
        _, _, _, vjps = self._eval(x)
        g = np.zeros((self.N + 1, self.D))
        pos = 0
        for which, m, fn in vjps:
            gi = fn(w[pos:pos + m])
            if which == "dec":
                g[1:] += gi
            else:
                g += gi
            pos += m
        return self._pull(g[1:])

    def problem(self):
        return NlpProblem(self.N * self.D, objective=lambda x: self.value_and_grad(x)[0],
                          value_and_grad=self.value_and_grad, ineq=self.ineq,
                          ineq_vjp=self.ineq_vjp)


def obstacle_snapshot(world, t0: float):
    """Observed ``(position, velocity, radius)`` of every dynamic obstacle at ``t0``."""
    from .world import dynamic_state

    out = []
    for d in world.dynamics:
        pos, vel = dynamic_state(d, t0)
        out.append((pos, vel, d.radius))
    return out


def plan_horizon(X0: FormationConfig, ref, t0: float, obstacles, corridor, params: PlannerParams,
                 spec: FormationSpec, warm: HorizonPlan | None = None,
                 start_index: int = 0) -> HorizonPlan:
    """Solve one horizon from ``X0`` at time ``t0``.

    ``obstacles`` holds observed ``(position, velocity, radius)`` triples,
    extrapolated at constant velocity over the horizon; ``corridor`` is the
    ordered list of free regions along the global path.
    """
    tic = time.perf_counter()
    N, T_c = params.N_h, params.T_c
    z0 = ft.pack(X0)
    if warm is not None and warm.knots is not None:
        Zw = _shift_warm(warm, params.n_exec)
        Zw[0] = z0
        start_index = max(start_index, warm.regions[min(params.n_exec, len(warm.regions) - 1)])
    else:
        Zw = _cold_start(z0, ref, t0, params)
    fw = ft.Forward(Zw, spec)
    circles = [(np.vstack([fw.B[k], fw.p[k][None, :]]),
                np.r_[np.full(spec.n, spec.r_base), spec.r_obj]) for k in range(N + 1)]
    slack = 0.02 + 0.01 * np.arange(N + 1)
    ids = assign_regions(fw.p, corridor, circles, params.d_safe, start_index, slack)
    faces = ft.FaceSet([corridor[i] for i in ids[1:]])
    ref_pts = ref(t0 + T_c * np.arange(1, N + 1))
    preds = [(predict_positions(p, v, N, T_c), r) for p, v, r in obstacles]
    hp = _HorizonProblem(z0, spec, params, ref_pts, faces, preds)
    sol = solve(hp.problem(), hp.encode(Zw), params.solver_options())
    Z = hp.full(sol.x)
    f = ft.Forward(Z, spec)
    u = _controls_from_knots(f, T_c)
    Qs = _rollout(X0, u, T_c)
    states = [X0] + [FormationConfig(f.p[k].copy(), float(f.psi[k]), Qs[k][:, 0:2].copy(),
                                     Qs[k][:, 2].copy(), Qs[k][:, 3:6].copy())
                     for k in range(1, N + 1)]
    ok = sol.status is not Status.INFEASIBLE or sol.violation <= params.backoff
    plan = HorizonPlan(t0=t0, states=states, controls=u, regions=ids, status=sol.status.value,
                       objective=0.0, violation=sol.violation, knots=Z,
                       diagnostics={"outer": sol.outer_iterations, "inner": sol.inner_iterations,
                                    "violation": sol.violation, "stationarity": sol.stationarity,
                                    "wall_time": time.perf_counter() - tic})
    plan.objective = tracking_cost(plan, ref_pts, t0, params)
    log.info("t0 %.2f status %s viol %.2e obj %.4g outer %d inner %d (%.2fs)", t0, plan.status,
             sol.violation, plan.objective, sol.outer_iterations, sol.inner_iterations,
             plan.diagnostics["wall_time"])
    if not ok:
        raise PlanInfeasible(f"horizon at t0={t0:.2f} infeasible (violation {sol.violation:.2e})", plan)
    return plan
