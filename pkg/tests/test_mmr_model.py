import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import cone_limit_bisection, cone_tuples, footprint_inside
from mmtransport.geom2d import cone_contains
from mmtransport.mmr_model import (ConeInfeasible, InvalidSpec, MmrState, SingularArm, arm_circle,
                                   build_cones, cone_joint_limits, ee_position, ee_positions,
                                   formation_from_dict, grasp_errors, heading_errors, inverse_arm,
                                   step, wrap_angle)

angles = st.floats(-10.0, 10.0)


def test_step_is_exact_for_constant_controls():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(200, 6))
    u = rng.normal(size=(200, 6))
    for qi, ui in zip(q, u):
        np.testing.assert_allclose(step(qi, ui, 0.25), qi + 0.25 * ui, atol=1e-12, rtol=0)
    with pytest.raises(ValueError):
        step(q[0], u[0], 0.0)


def test_step_fourth_order_on_nonlinear_rhs():
    # q' = -q has exact solution q0 exp(-t)
    err = [abs(step(np.array([1.0]), None, h, rhs=lambda q, u: -q)[0] - np.exp(-h))
           for h in (0.2, 0.1)]
    assert err[0] / err[1] == pytest.approx(32, rel=0.1)


@given(st.floats(-5, 5), st.floats(-5, 5), angles, st.floats(0.05, 1.0), angles, angles)
def test_inverse_arm_round_trip(x, y, phi, r, th, psi):
    base = np.array([x, y])
    ee = base + r * np.array([np.cos(th), np.sin(th)])
    q = inverse_arm(base, phi, ee, psi)
    s = MmrState(base, phi, q)
    np.testing.assert_allclose(ee_position(s), ee, atol=1e-9)
    assert abs(wrap_angle(phi + q[0] + q[2] - psi)) < 1e-9
    assert q[1] == pytest.approx(r)


def test_singular_arm():
    with pytest.raises(SingularArm):
        inverse_arm([1, 1], 0.0, [1, 1], 0.0)


def test_wrap_angle_range():
    a = wrap_angle(np.linspace(-20, 20, 1001))
    assert np.all(a >= -np.pi) and np.all(a < np.pi)
    np.testing.assert_allclose(np.sin(a), np.sin(np.linspace(-20, 20, 1001)), atol=1e-12)


def test_arm_circle_covers_arm_segment():
    r_b, q2max = 0.125, 0.345
    rng = np.random.default_rng(3)
    for _ in range(50):
        b = rng.normal(size=2)
        th = rng.uniform(-np.pi, np.pi)
        q2 = rng.uniform(0.1, q2max)
        ee = b + q2 * np.array([np.cos(th), np.sin(th)])
        c = arm_circle(b, ee, r_b, q2max)
        # the segment outside the base disc lies inside the arm circle
        for t in np.linspace(r_b / q2, 1.0, 30) if q2 > r_b else []:
            assert np.hypot(*(b + t * (ee - b) - c.center)) <= c.radius + 1e-12
    with pytest.raises(InvalidSpec):
        arm_circle([0, 0], [0.1, 0], 0.2, 0.15)


def test_default_formation():
    spec = formation_from_dict(None)
    assert spec.n == 5
    assert spec.r_obj == pytest.approx(0.3)
    assert spec.r_base == pytest.approx(0.125)
    X = spec.nominal([2.0, 3.0], 0.4)
    assert spec.admissible(X)
    assert grasp_errors(X, spec).max() < 1e-12
    assert heading_errors(X).max() < 1e-12
    np.testing.assert_allclose(X.q[:, 1], spec.q2_nominal)
    # bases face the object: q1 = 0
    np.testing.assert_allclose(wrap_angle(X.q[:, 0]), 0.0, atol=1e-12)
    np.testing.assert_allclose(spec.relative_q3(X), 0.0, atol=1e-12)


def test_formation_rejects_too_short_arm():
    with pytest.raises(InvalidSpec):
        formation_from_dict({"arm_q_upper": [np.pi, 0.11, np.pi], "arm_q_lower": [-np.pi, 0.1, -np.pi]})


@pytest.mark.parametrize("n", [2, 3, 5, 7])
def test_cones_partition_the_plane(n):
    spec = formation_from_dict({"n": n})
    cones = build_cones(np.zeros(2), spec.grasp, psi=0.3)
    assert sum(c.cone.angle for c in cones) == pytest.approx(2 * np.pi)
    rng = np.random.default_rng(n)
    for pt in rng.normal(size=(200, 2)):
        assert sum(cone_contains(c.cone, pt, tol=-1e-9) for c in cones) <= 1
        assert sum(cone_contains(c.cone, pt, tol=1e-9) for c in cones) >= 1


def test_cone_limits_match_bisection_oracle():
    for b1, b2, R, r_v, q2 in cone_tuples(np.random.default_rng(7), 25):
        lo, hi = cone_joint_limits(b1, b2, R, r_v, q2)
        olo, ohi = cone_limit_bisection(b1, b2, R, r_v, q2)
        assert lo == pytest.approx(olo, abs=1e-3)
        assert hi == pytest.approx(ohi, abs=1e-3)


def test_states_just_inside_limits_keep_footprint_in_cone():
    rng = np.random.default_rng(11)
    for b1, b2, R, r_v, q2max in cone_tuples(rng, 25):
        lo, hi = cone_joint_limits(b1, b2, R, r_v, q2max)
        g = rng.uniform(0.1, 1.4)
        half = r_v * np.array([np.cos(g), np.sin(g)])
        for a in (lo + 1e-6, hi - 1e-6):
            for _ in range(10):
                assert footprint_inside(b1, b2, R, a, rng.uniform(1e-3, q2max), rng.uniform(-np.pi, np.pi), half)


def test_cone_limits_infeasible_and_unbounded():
    with pytest.raises(ConeInfeasible):
        cone_joint_limits(0.1, 0.1, 0.2, 0.5, 0.2)
    lo, hi = cone_joint_limits(np.pi / 2, np.pi / 2, 1.0, 0.01, 0.5)
    assert hi == np.pi and lo == -np.pi


def test_ee_positions_vectorised():
    spec = formation_from_dict({"n": 3})
    X = spec.nominal([0.0, 0.0], 1.0)
    for i, s in enumerate(X.robots):
        np.testing.assert_allclose(ee_positions(X)[i], ee_position(s))
