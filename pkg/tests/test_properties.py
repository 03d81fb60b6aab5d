import math

from hypothesis import HealthCheck, given, settings, strategies as st

from anchorplan.envmodel import (AnchorPoint, LaneMap, MotionPlanningObjective, deserialize_objective,
                                 four_arm_map, serialize_objective)
from anchorplan.harness import Scenario, ScenarioVehicle

finite = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)
positive = st.floats(0.01, 60.0, allow_nan=False)


@st.composite
def objectives(draw):
    n = draw(st.integers(2, 12))
    x, y = draw(finite), draw(finite)
    pts = [(x, y)]
    for _ in range(n - 1):
        ang = draw(st.floats(-math.pi, math.pi))
        step = draw(st.floats(0.5, 20.0))
        x, y = x + step * math.cos(ang), y + step * math.sin(ang)
        pts.append((x, y))
    v_max = draw(st.lists(st.floats(0.1, 40.0), min_size=n - 1, max_size=n - 1))
    idx = draw(st.lists(st.integers(0, n - 1), max_size=3))
    anchors = tuple(AnchorPoint(pts[i], draw(positive), draw(st.floats(0.0, 30.0))) for i in idx)
    return MotionPlanningObjective(draw(st.integers(0, 2 ** 31 - 1)), draw(st.floats(0.0, 1e5)),
                                   tuple(pts), tuple(v_max), anchors)


@settings(max_examples=1000, deadline=None)
@given(objectives())
def test_objective_round_trip(obj):
    assert deserialize_objective(serialize_objective(obj)) == obj


names = st.text(st.characters(min_codepoint=32, max_codepoint=0x2FFF), max_size=20)
routes = st.sampled_from([("W_in", "W_E", "E_out"), ("S_in", "S_N", "N_out"), ("E_in", "E_S", "S_out")])


@st.composite
def scenario_vehicles(draw, vid):
    route = draw(routes)
    script = tuple(draw(st.lists(st.tuples(st.floats(0.0, 100.0), st.floats(0.0, 20.0)), max_size=4)))
    return ScenarioVehicle(vid, route[0], draw(st.floats(0.0, 100.0)), draw(st.floats(0.0, 20.0)), route,
                           draw(st.sampled_from(["cav", "regular", "scripted"])), draw(st.booleans()),
                           script, draw(st.floats(0.0, 30.0)))


@st.composite
def scenarios(draw):
    n = draw(st.integers(0, 6))
    vs = tuple(draw(scenario_vehicles(i + 1)) for i in range(n))
    return Scenario(draw(names), vs, draw(st.sampled_from(["random", "vil"])),
                    draw(st.one_of(st.none(), st.integers(0, 2 ** 32))), draw(st.sampled_from(["default", "m.json"])))


@settings(max_examples=1000, deadline=None)
@given(scenarios())
def test_scenario_round_trip(sc):
    assert Scenario.loads(sc.dumps()) == sc


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.floats(6.0, 14.0), st.floats(1.0, 2.5), st.floats(30.0, 150.0), st.floats(20.0, 80.0),
       st.floats(3.0, 20.0), st.sampled_from([("S", "N"), ("W", "E"), None]))
def test_map_round_trip(box, offset, access, exit_len, limit, priority):
    m = four_arm_map(box, offset, access, exit_len, limit, priority)
    back = LaneMap.loads(m.dumps())
    assert back == m
    assert back.dumps() == m.dumps()
