import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from conftest import scenario_path
from mmtransport.world import (DynamicObstacle, ParseError, ValidationError, dynamic_state,
                               load_scenario, load_scenario_file, parse_scenario, predict_positions,
                               scenario_hash, validate_scenario)

BASE = """
bounds: [[0, 0], [4, 0], [4, 4], [0, 4]]
static_obstacles:
  - [[1, 1], [2, 1], [2, 2], [1, 2]]
start: [0.5, 0.5]
goal: [3.5, 3.5]
"""


def test_load_minimal():
    w = load_scenario(BASE)
    assert len(w.statics) == 1 and w.dynamics == ()
    np.testing.assert_array_equal(w.goal, [3.5, 3.5])
    assert w.source_hash == scenario_hash(BASE)
    assert w.free_clearance([0.5, 1.5]) == pytest.approx(0.5)
    assert w.free_clearance([1.5, 1.5]) < 0


@pytest.mark.parametrize("name", ["warehouse_linear", "warehouse_curvilinear", "warehouse_dual",
                                  "corridor_pair"])
def test_bundled_scenarios_valid(name):
    w = load_scenario_file(scenario_path(name))
    assert w.free_clearance(w.start) > 0.5
    assert w.free_clearance(w.goal) > 0.5


def test_warehouse_doors(warehouse):
    # 1.5 m door in the horizontal wall and 1.85 m door in the vertical one
    s = [o.shape for o in warehouse.statics]
    assert s[1][:, 0].min() - s[0][:, 0].max() == pytest.approx(1.5)
    assert s[3][:, 1].min() - s[2][:, 1].max() == pytest.approx(1.85)


def test_non_convex_obstacle_listed():
    doc = parse_scenario(BASE.replace("[[1, 1], [2, 1], [2, 2], [1, 2]]",
                                      "[[1, 1], [2, 1], [1.5, 1.2], [2, 2], [1, 2]]"))
    v = validate_scenario(doc)
    assert any("not convex" in x for x in v)


def test_start_inside_obstacle_listed():
    with pytest.raises(ValidationError) as e:
        load_scenario(BASE.replace("start: [0.5, 0.5]", "start: [1.5, 1.5]"))
    assert any("start lies inside" in x for x in e.value.violations)


def test_several_violations_collected():
    text = BASE.replace("start: [0.5, 0.5]", "start: [9, 9]").replace("goal: [3.5, 3.5]", "goal: [1.5, 1.5]")
    v = validate_scenario(parse_scenario(text))
    assert len(v) == 2


@pytest.mark.parametrize("text", ["bounds: [1, 2", "- just a list", "bounds: [[0,0],[1,0],[1,1]]\nstart: [0,0]"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_scenario(text)


def test_bad_dynamic_obstacle():
    text = BASE + "dynamic_obstacles:\n  - {kind: wiggly, radius: 0.2, p0: [1, 1]}\n"
    assert any("unknown kind" in x for x in validate_scenario(parse_scenario(text)))


@given(st.floats(0.0, 100.0), st.floats(-0.2, 0.2), st.floats(0.0, 0.1))
@example(t=3.0, amp=0.125, rate=5e-324)
def test_curvilinear_velocity_is_derivative(t, amp, rate):
    o = DynamicObstacle(0, 0.25, "curvilinear", [2.0, 4.0], amplitude=amp, rate=rate)
    h = 1e-5
    p1, v = dynamic_state(o, t)
    p2, _ = dynamic_state(o, t + h)
    p0, _ = dynamic_state(o, max(t - h, 0.0))
    fd = (p2 - p0) / (t + h - max(t - h, 0.0))
    np.testing.assert_allclose(fd, v, atol=1e-6)
    np.testing.assert_allclose(dynamic_state(o, 0.0)[0], [2.0, 4.0])


def test_linear_motion_and_prediction():
    o = DynamicObstacle(0, 0.25, "linear", [3.0, 5.0], [0.045, 0.09])
    p, v = dynamic_state(o, 20.0)
    np.testing.assert_allclose(p, [3.9, 6.8])
    pred = predict_positions(p, v, 24, 0.25)
    assert pred.shape == (24, 2)
    np.testing.assert_allclose(pred[-1], p + 6.0 * v)
    # for a linear script the predictor is exact
    np.testing.assert_allclose(pred[3], dynamic_state(o, 21.0)[0])
    with pytest.raises(ValueError):
        predict_positions(p, v, 0, 0.25)
