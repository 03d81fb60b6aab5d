import dataclasses

import pytest

from anchorplan.envmodel import MotionPlanningObjective
from anchorplan.execsim import World
from anchorplan.orchestrator import (OrchestratorConfig, PlanningTrigger, RunMode, apply_objectives,
                                     format_log, parse_log, run_episode)
from anchorplan.policy import HeuristicPolicy

from conftest import ROUTES


def crossing_world(lane_map, extra=()):
    ego = World.vehicle_at(lane_map, 1, "cav", ROUTES["WE"], 25.0, 10.0)
    obj = World.vehicle_at(lane_map, 2, "scripted", ROUTES["SN"], 25.0, 10.0, route_known=True,
                           script=((0.0, 10.0), (100.0, 10.0)))
    return World(lane_map, [ego, obj, *extra])


def test_single_shot_plans_once(lane_map):
    res = run_episode(crossing_world(lane_map), HeuristicPolicy())
    assert res.status == "done"
    assert [r.trigger.reason for r in res.runs] == ["initial"]
    assert res.runs[0].applied
    assert res.collisions == []


def test_cyclic_replans_every_period(lane_map):
    cfg = OrchestratorConfig(mode=RunMode.CYCLIC, timeout=10.0)
    res = run_episode(crossing_world(lane_map), HeuristicPolicy(), cfg)
    assert res.status == "timeout"
    assert [round(r.trigger.t, 2) for r in res.runs] == [0.0, 2.0, 4.0, 6.0, 8.0]
    assert [r.trigger.reason for r in res.runs[1:]] == ["cyclic"] * 4
    # objectives take effect after the planning latency
    assert all(r.issue_t == pytest.approx(r.trigger.t + 0.2) for r in res.runs)


def test_new_vehicle_triggers_replanning(lane_map):
    late = World.vehicle_at(lane_map, 3, "cav", ROUTES["EW"], 10.0, 8.0, spawn_time=3.1)
    res = run_episode(crossing_world(lane_map, [late]), HeuristicPolicy())
    assert [r.trigger.reason for r in res.runs] == ["initial", "new-vehicle"]
    assert res.runs[1].trigger.t == pytest.approx(3.1)
    assert res.runs[1].trigger.payload == 3
    assert {o.vehicle_id for o in res.runs[1].result.objectives} == {1, 3}


def test_no_controllable_vehicles(lane_map):
    reg = World.vehicle_at(lane_map, 1, "regular", ROUTES["WE"], 25.0, 10.0)
    res = run_episode(World(lane_map, [reg]), HeuristicPolicy())
    assert res.status == "done"
    assert len(res.runs) == 1 and res.runs[0].result.objectives == ()


def test_objectives_for_unknown_or_uncontrolled_vehicles_are_rejected(lane_map):
    world = crossing_world(lane_map)
    path = ((0.0, 0.0), (10.0, 0.0))
    objs = [MotionPlanningObjective(9, 0.0, path, (10.0,)), MotionPlanningObjective(2, 0.0, path, (10.0,))]
    applied, rejected = apply_objectives(objs, world)
    assert applied == []
    assert [(r.vehicle_id, r.reason) for r in rejected] == [(9, "unknown vehicle"),
                                                           (2, "vehicle is not controllable")]


def test_unknown_route_rule_out_triggers_only_in_cyclic_mode(lane_map):
    ego = World.vehicle_at(lane_map, 1, "cav", ROUTES["WE"], 40.0, 8.0)
    other = World.vehicle_at(lane_map, 2, "regular", ROUTES["SN"], 60.0, 8.0)
    for mode in RunMode:
        res = run_episode(World(lane_map, [dataclasses.replace(ego), dataclasses.replace(other)]),
                          HeuristicPolicy(), OrchestratorConfig(mode=mode, cyclic_period=100.0))
        reasons = [t.reason for t in res.triggers]
        assert ("conflict-ruled-out" in reasons) == (mode is RunMode.CYCLIC)


def test_log_round_trip(lane_map):
    res = run_episode(crossing_world(lane_map), HeuristicPolicy())
    text = format_log(res, created="fixed")
    recs = parse_log(text)
    assert recs["T"][0] == ["0.00", "initial", "", "0"]
    assert len(recs["P"]) == 1 and len(recs["O"]) == 1
    assert {r[1] for r in recs["S"]} == {"1", "2"}
    assert format_log(res, created="fixed") == text
    with pytest.raises(ValueError):
        parse_log("X|1\n")


def test_config_and_trigger_validation():
    with pytest.raises(ValueError):
        OrchestratorConfig(cyclic_period=0.0)
    with pytest.raises(ValueError):
        OrchestratorConfig(mode="sometimes")
    with pytest.raises(ValueError):
        PlanningTrigger(0.0, "boredom")
