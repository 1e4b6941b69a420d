import copy

import numpy as np
import pytest

from conftest import SHORT_SCENARIO
from mmtransport.global_planner import plan_global
from mmtransport.mmr_model import formation_from_dict, step
from mmtransport.nmpc_planner import PlannerParams
from mmtransport.sim_harness import (GOAL_REACHED, PLAN_FAILED, TIMEOUT, audit, dynamic_margins, run,
                                     static_margin)
from mmtransport.world import load_scenario

P = PlannerParams()


@pytest.fixture(scope="module")
def short_run():
    world = load_scenario(SHORT_SCENARIO)
    spec = formation_from_dict(world.formation)
    plan = plan_global(world, spec, rng=np.random.default_rng(0))
    return world, spec, plan, run(world, plan, P, spec, seed=7)


def test_goal_reached_with_regular_timestamps(short_run):
    world, _, plan, log = short_run
    assert log.status == GOAL_REACHED
    np.testing.assert_allclose(np.diff(log.times), P.T_c, atol=1e-12)
    assert np.hypot(*(log.steps[-1].config.p - world.goal)) <= P.goal_tol
    assert all(np.hypot(*(s.config.p - world.goal)) > P.goal_tol for s in log.steps[:-1])
    assert log.times[-1] <= 1.5 * plan.path_length / P.v_op
    assert log.meta["seed"] == 7 and log.meta["scenario_hash"] == world.source_hash


def test_audit_matches_logged_margins(short_run):
    world, spec, _, log = short_run
    rep = audit(log, world, spec, P)
    assert rep.violations == []
    assert rep.min_static_margin == pytest.approx(min(s.margin_static for s in log.steps), abs=1e-9)
    dyn = np.array([s.margin_dynamic for s in log.steps])
    np.testing.assert_allclose(rep.min_dynamic_margin, dyn.min(axis=0), atol=1e-9)
    assert rep.min_static_margin >= P.d_safe - 1e-3
    assert min(rep.min_dynamic_margin) >= P.d_safe_dyn - 1e-3
    assert rep.max_grasp_error <= 1e-4 and rep.max_heading_error <= 1e-6
    assert len(rep.wall_time_per_horizon) == len(log.horizons)
    assert rep.path_length > 0.9 * np.hypot(*(world.goal - world.start))


def test_logged_states_admissible_and_reproducible(short_run):
    _, spec, _, log = short_run
    for a, b in zip(log.steps, log.steps[1:]):
        assert spec.admissible(b.config, tol=1e-6)
        Qa, Qb = a.config.robot_vectors(), b.config.robot_vectors()
        # open-loop replay of the applied controls gives the next logged state exactly
        for i in range(len(Qa)):
            assert np.array_equal(step(Qa[i], a.controls[i], P.T_c), Qb[i])


def test_injected_violations_flagged(short_run):
    world, spec, _, log = short_run
    bad = copy.deepcopy(log)
    k = len(bad.steps) // 2
    c = bad.steps[k].config
    shift = np.array([0.0, 1.3])        # pushes the formation into the upper wall
    bad.steps[k].config = c.with_robot_vectors(c.robot_vectors() + np.r_[shift, 0, 0, 0, 0],
                                               p=c.p + shift)
    rep = audit(bad, world, spec, P)
    assert any(f"t={bad.steps[k].t:.2f}: static margin" in v for v in rep.violations)
    assert rep.min_static_margin < 0
    bad = copy.deepcopy(log)
    c = bad.steps[3].config
    Q = c.robot_vectors()
    Q[0, 0] += 0.01                     # base moves, arm does not follow
    bad.steps[3].config = c.with_robot_vectors(Q)
    rep = audit(bad, world, spec, P)
    assert any("grasp error" in v for v in rep.violations)


def test_margin_helpers_agree_with_log(short_run):
    world, spec, _, log = short_run
    s = log.steps[5]
    assert static_margin(s.config, spec, world) == s.margin_static
    np.testing.assert_array_equal(dynamic_margins(s.config, spec, world, s.t), s.margin_dynamic)


def test_csv_layout(short_run):
    _, spec, _, log = short_run
    text = log.to_csv()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    assert header[:4] == ["t", "p_x", "p_y", "psi"]
    assert header[4:10] == ["r0_x", "r0_y", "r0_phi", "r0_q1", "r0_q2", "r0_q3"]
    assert header[16:18] == ["r0_u0", "r0_u1"]
    assert header[-5:] == ["margin_static", "margin_dyn0", "tracking_error", "grasp_error0", "grasp_error1"]
    assert len(lines) == len(log.steps) + 1
    assert all(len(ln.split(",")) == len(header) for ln in lines)
    assert "# status: GoalReached" in text


def test_timeout():
    world = load_scenario(SHORT_SCENARIO)
    spec = formation_from_dict(world.formation)
    plan = plan_global(world, spec, rng=np.random.default_rng(0))
    log = run(world, plan, P, spec, timeout_factor=0.3)
    assert log.status == TIMEOUT
    assert log.times[-1] == pytest.approx(3.0)


def test_plan_failure_reported_not_raised():
    text = SHORT_SCENARIO.replace("p0: [4.3, 0.45], v0: [-0.12, 0.0]", "p0: [1.0, 1.5], v0: [0.0, 0.0]")
    world = load_scenario(text)
    spec = formation_from_dict(world.formation)
    plan = plan_global(world, spec, rng=np.random.default_rng(0))
    log = run(world, plan, PlannerParams(max_outer=6), spec)
    assert log.status == PLAN_FAILED
    assert "infeasible" in log.message
    assert len(log.steps) == 1
