import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import grid_oracle, qp_problem, random_qp
from mmtransport.nlp_solver import (CallbackFailure, NlpProblem, SolverOptions, Status, fd_gradient,
                                    fd_jacobian, max_violation, solve)


def test_active_bound():
    p = NlpProblem(1, lambda x: float(x[0] ** 2), ineq=lambda x: np.array([1.0 - x[0]]))
    s = solve(p, np.array([3.0]))
    assert s.converged
    assert s.x[0] == pytest.approx(1.0, abs=1e-4)
    assert s.fun == pytest.approx(1.0, abs=2e-4)


def test_equality_lagrangian():
    p = NlpProblem(2, lambda x: (x[0] - 2) ** 2 + (x[1] - 1) ** 2,
                   eq=lambda x: np.array([x[0] + x[1] - 1.0]))
    s = solve(p, np.zeros(2))
    assert s.converged
    np.testing.assert_allclose(s.x, [1.0, 0.0], atol=1e-4)
    assert s.fun == pytest.approx(2.0, abs=1e-4)
    assert s.multipliers_eq[0] == pytest.approx(2.0, abs=1e-2)


def test_matches_grid_search_on_random_qps():
    for seed in range(50):
        prob = random_qp(seed)
        s = solve(qp_problem(*prob), np.zeros(prob[0]))
        xo, fo = grid_oracle(*prob)
        assert s.status is Status.CONVERGED, seed
        np.testing.assert_allclose(s.x, xo, atol=1e-3, err_msg=f"seed {seed}")
        assert s.fun == pytest.approx(fo, abs=1e-3)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_fd_matches_analytic(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    A = rng.normal(size=(d, d))
    f = lambda x: float(np.sum(np.sin(A @ x)) + x @ x)
    g = lambda x: A.T @ np.cos(A @ x) + 2 * x
    x = rng.normal(size=d)
    ga = g(x)
    assert np.linalg.norm(fd_gradient(f, x) - ga) <= 1e-5 * max(1.0, np.linalg.norm(ga))
    J = fd_jacobian(lambda x: np.sin(A @ x), x)
    np.testing.assert_allclose(J, np.cos(A @ x)[:, None] * A, atol=1e-6)


def test_violation_monotone_in_debug_mode():
    for seed in range(20):
        prob = random_qp(seed)
        # the debug flag asserts monotone violation inside the solver
        solve(qp_problem(*prob), np.zeros(prob[0]), SolverOptions(debug=True))


def test_nonconvex_constraint():
    # min x + y on the unit disc
    p = NlpProblem(2, lambda x: x[0] + x[1], gradient=lambda x: np.ones(2),
                   ineq=lambda x: np.array([x @ x - 1.0]), ineq_vjp=lambda x, w: 2 * w[0] * x)
    s = solve(p, np.array([0.3, -0.2]))
    np.testing.assert_allclose(s.x, -np.ones(2) / np.sqrt(2), atol=1e-4)
    assert max_violation(p, s.x) <= 1e-4


def test_infeasible_reported():
    p = NlpProblem(1, lambda x: x[0] ** 2, ineq=lambda x: np.array([1.0 - x[0], x[0] - 0.0]))
    s = solve(p, np.array([0.5]), SolverOptions(max_outer=8))
    assert s.status is Status.INFEASIBLE
    assert s.violation > 1e-4


def test_non_finite_callback():
    p = NlpProblem(1, lambda x: float("nan"))
    with pytest.raises(CallbackFailure):
        solve(p, np.zeros(1))


def test_deterministic():
    prob = random_qp(3)
    a = solve(qp_problem(*prob), np.zeros(prob[0]))
    b = solve(qp_problem(*prob), np.zeros(prob[0]))
    assert a.x.tobytes() == b.x.tobytes()
    assert a.history == b.history


def test_box_and_start_clipping():
    p = NlpProblem(2, lambda x: -x[0] - x[1], lower=[0, 0], upper=[1, 2])
    s = solve(p, np.array([5.0, -5.0]))
    np.testing.assert_allclose(s.x, [1, 2])
    with pytest.raises(ValueError):
        NlpProblem(0, lambda x: 0.0)
