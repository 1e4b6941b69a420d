"""Small dense constrained NLP solver: augmented Lagrangian outer loop over a
bound-constrained quasi-Newton inner loop (scipy's L-BFGS-B).

Problems are ``min f(x)`` subject to ``h(x) = 0``, ``g(x) <= 0`` and box
bounds. Constraint derivatives come either as dense Jacobians or as
vector-Jacobian products; anything missing is filled in with central finite
differences.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)


class CallbackFailure(RuntimeError):
    """A problem callback returned a non-finite value."""


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass
class NlpProblem:
    dim: int
    objective: Callable
    gradient: Optional[Callable] = None
    eq: Optional[Callable] = None
    eq_jac: Optional[Callable] = None
    eq_vjp: Optional[Callable] = None
    ineq: Optional[Callable] = None
    ineq_jac: Optional[Callable] = None
    ineq_vjp: Optional[Callable] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    value_and_grad: Optional[Callable] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("problem dimension must be at least 1")
        self.lower = np.full(self.dim, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(self.dim, np.inf) if self.upper is None else np.asarray(self.upper, float)


@dataclass(frozen=True)
class SolverOptions:
    tol_violation: float = 1e-4
    tol_stationarity: float = 1e-3
    max_outer: int = 20
    max_inner: int = 200
    rho0: float = 10.0
    rho_factor: float = 10.0
    rho_max: float = 1e8
    # the penalty grows only when violation fails to shrink by this factor
    rho_progress: float = 0.25
    inner_gtol: float = 1e-4
    inner_ftol: float = 1e-13
    debug: bool = False


@dataclass
class NlpSolution:
    x: np.ndarray
    fun: float
    violation: float
    stationarity: float
    status: Status
    outer_iterations: int
    inner_iterations: int
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def fd_step(x) -> np.ndarray:
    return 1e-6 * np.maximum(1.0, np.abs(x))


def fd_gradient(fun, x) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x)
    g = np.empty_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        g[i] = (fun(xp) - fun(xm)) / (xp[i] - xm[i])
    return g


def fd_jacobian(fun, x) -> np.ndarray:
    """Central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x)
    cols = []
    for i in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        cols.append((np.asarray(fun(xp), float) - np.asarray(fun(xm), float)) / (xp[i] - xm[i]))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def _finite(name, v):
    if not np.all(np.isfinite(v)):
        raise CallbackFailure(f"{name} returned a non-finite value")
    return v


class _Evaluator:
    def __init__(self, problem: NlpProblem):
        self.p = problem
        self._vg = (None, None, None)

    def _both(self, x):
        key = x.tobytes()
        if self._vg[0] != key:
            val, g = self.p.value_and_grad(x)
            self._vg = (key, float(val), np.asarray(g, dtype=float))
        return self._vg[1], self._vg[2]

    def f(self, x):
        if self.p.value_and_grad is not None:
            return float(_finite("objective", np.asarray(self._both(x)[0])))
        return float(_finite("objective", np.asarray(self.p.objective(x), dtype=float)))

    def grad(self, x):
        if self.p.value_and_grad is not None:
            return _finite("gradient", self._both(x)[1])
        if self.p.gradient is not None:
            return _finite("gradient", np.asarray(self.p.gradient(x), dtype=float))
        return _finite("gradient", fd_gradient(self.p.objective, x))

    def h(self, x):
        if self.p.eq is None:
            return np.zeros(0)
        return _finite("eq", np.asarray(self.p.eq(x), dtype=float).reshape(-1))

    def g(self, x):
        if self.p.ineq is None:
            return np.zeros(0)
        return _finite("ineq", np.asarray(self.p.ineq(x), dtype=float).reshape(-1))

    def _vjp(self, fun, jac, vjp, x, w):
        if len(w) == 0:
            return np.zeros(self.p.dim)
        if vjp is not None:
            return np.asarray(vjp(x, w), dtype=float)
        J = jac(x) if jac is not None else fd_jacobian(fun, x)
        return np.asarray(J.T @ w, dtype=float).reshape(-1)

    def h_vjp(self, x, w):
        return self._vjp(self.p.eq, self.p.eq_jac, self.p.eq_vjp, x, w)

    def g_vjp(self, x, w):
        return self._vjp(self.p.ineq, self.p.ineq_jac, self.p.ineq_vjp, x, w)


def max_violation(problem: NlpProblem, x) -> float:
    ev = _Evaluator(problem)
    h, g = ev.h(x), ev.g(x)
    v = 0.0
    if len(h):
        v = max(v, float(np.max(np.abs(h))))
    if len(g):
        v = max(v, float(np.max(g)))
    v = max(v, float(np.max(problem.lower - x, initial=0.0)), float(np.max(x - problem.upper, initial=0.0)))
    return v


def _projected_gradient(x, grad, lo, hi) -> float:
    return float(np.max(np.abs(np.clip(x - grad, lo, hi) - x), initial=0.0))


def solve(problem: NlpProblem, x0, opts: SolverOptions | None = None,
          lam0=None, mu0=None) -> NlpSolution:
    """Minimize ``problem`` from ``x0`` with the augmented Lagrangian method.

    ``lam0``/``mu0`` optionally warm-start the equality and inequality
    multipliers.
    """
    opts = opts or SolverOptions()
    ev = _Evaluator(problem)
    lo, hi = problem.lower, problem.upper
    x = np.clip(np.asarray(x0, dtype=float).copy(), lo, hi)
    h0, g0 = ev.h(x), ev.g(x)
    lam = np.zeros(len(h0)) if lam0 is None else np.asarray(lam0, float).copy()
    mu = np.zeros(len(g0)) if mu0 is None else np.maximum(np.asarray(mu0, float), 0.0)
    rho = opts.rho0
    bounds = list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))

    def merit(z):
        f = ev.f(z)
        gf = ev.grad(z)
        h = ev.h(z)
        g = ev.g(z)
        val = f
        grad = gf.copy()
        if len(h):
            wh = lam + rho * h
            val += float(lam @ h + 0.5 * rho * (h @ h))
            grad += ev.h_vjp(z, wh)
        if len(g):
            wg = np.maximum(0.0, mu + rho * g)
            val += float((wg @ wg - mu @ mu) / (2.0 * rho))
            grad += ev.g_vjp(z, wg)
        return val, grad

    history = []
    inner_total = 0
    status = Status.INFEASIBLE
    stat = np.inf
    viol = np.inf
    prev_viol = np.inf
    outer = 0
    for outer in range(1, opts.max_outer + 1):
        res = minimize(merit, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": opts.max_inner, "gtol": opts.inner_gtol,
                                "ftol": opts.inner_ftol, "maxls": 40})
        inner_total += int(res.nit)
        x = np.clip(res.x, lo, hi)
        h, g = ev.h(x), ev.g(x)
        viol = 0.0
        if len(h):
            viol = max(viol, float(np.max(np.abs(h))))
        if len(g):
            viol = max(viol, float(np.max(g)))
        if len(h):
            lam = lam + rho * h
        if len(g):
            mu = np.maximum(0.0, mu + rho * g)
        lag_grad = ev.grad(x) + ev.h_vjp(x, lam) + ev.g_vjp(x, mu)
        stat = _projected_gradient(x, lag_grad, lo, hi)
        history.append({"outer": outer, "rho": rho, "violation": viol,
                        "stationarity": stat, "fun": ev.f(x), "inner": int(res.nit)})
        if opts.debug and len(history) > 1:
            prev = history[-2]["violation"]
            assert viol <= prev + 1e-12 + 1e-9 * prev, (
                f"violation increased across outer iterations: {prev:.3e} -> {viol:.3e}")
        log.debug("outer %d rho %.1e viol %.3e stat %.3e f %.6e", outer, rho, viol, stat,
                  history[-1]["fun"])
        if viol <= opts.tol_violation and stat <= opts.tol_stationarity:
            status = Status.CONVERGED
            break
        if viol > opts.tol_violation and viol > opts.rho_progress * prev_viol:
            rho = min(rho * opts.rho_factor, opts.rho_max)
        prev_viol = viol
    else:
        status = Status.MAX_ITER if viol <= opts.tol_violation else Status.INFEASIBLE
    return NlpSolution(x=x, fun=ev.f(x), violation=viol, stationarity=stat, status=status,
                       outer_iterations=outer, inner_iterations=inner_total,
                       multipliers_eq=lam, multipliers_ineq=mu, history=history)
