import numpy as np
import pytest

from anchorplan.envmodel import AnchorPoint, MotionPlanningObjective
from anchorplan.motionplan import (CostWeights, MotionPlanner, PlannerConfig, Trajectory, follow_mode,
                                   plan_trajectory, quintic_coeffs)

from oracles import quintic_closed_form


def straight(length=200.0, limit=15.0, anchors=(), t0=0.0):
    pts = [(0.0, 0.0), (length / 2, 0.0), (length, 0.0)]
    return MotionPlanningObjective(1, t0, pts, (limit, limit), anchors)


def test_quintic_matches_closed_form():
    t = np.linspace(0.0, 6.0, 61)
    c = quintic_coeffs(8.0, 0.0, 50.0, np.array([6.0]), 0.0, np.array([6.0]))[0]
    s = np.polyval(c[::-1], t)
    s_ref, _ = quintic_closed_form(8.0, 50.0, 6.0, 6.0, t)
    np.testing.assert_allclose(s, s_ref, atol=1e-9)


def test_anchored_plan_matches_closed_form():
    obj = straight(anchors=(AnchorPoint((50.0, 0.0), 6.0, 8.0),))
    traj = plan_trajectory(obj, 0.0, 8.0)
    assert traj.mode == "anchored" and not traj.infeasible
    inside = traj.t <= 6.0 + 1e-9
    s_ref, v_ref = quintic_closed_form(8.0, 50.0, 8.0, 6.0, traj.t[inside])
    assert np.max(np.abs(traj.s[inside] - s_ref)) < 0.5
    assert np.max(np.abs(traj.v[inside] - v_ref)) < 0.2
    assert traj.violations() == []


@pytest.mark.parametrize("v0,d,dt,v_ap", [(10.0, 40.0, 4.0, 10.0), (6.0, 60.0, 7.0, 9.0), (12.0, 35.0, 5.0, 3.0)])
def test_anchor_is_hit(v0, d, dt, v_ap):
    obj = straight(anchors=(AnchorPoint((d, 0.0), dt, v_ap),))
    traj = plan_trajectory(obj, 0.0, v0)
    t_hit = np.interp(d, traj.s, traj.t)
    assert abs(t_hit - dt) <= 0.2
    assert abs(np.interp(t_hit, traj.t, traj.v) - v_ap) <= 0.1


def test_unreachable_anchor_falls_back():
    obj = straight(anchors=(AnchorPoint((5.0, 0.0), 0.1, 5.0),))
    traj = plan_trajectory(obj, 0.0, 0.5)
    assert traj.infeasible and traj.mode == "fallback"
    assert np.all(np.diff(traj.v) <= 1e-12)


def test_free_mode_approaches_limit():
    traj = plan_trajectory(straight(limit=12.0), 0.0, 5.0)
    assert traj.mode == "free"
    assert traj.v[-1] == pytest.approx(12.0, abs=0.2)
    assert np.all(traj.v <= 12.0 + 1e-3)


def test_follow_mode_examples():
    assert follow_mode(100.0, 5.0, 10.0).engaged is False
    cmd = follow_mode(20.0, 10.0, 10.0)
    assert cmd.engaged and cmd.accel == pytest.approx(0.25 * (20.0 - 17.0))
    hard = follow_mode(10.0, 0.0, 10.0)
    assert hard.accel == -3.5 and hard.infeasible
    with pytest.raises(ValueError):
        follow_mode(-0.1, 0.0, 0.0)


def test_slow_lead_triggers_following():
    traj = plan_trajectory(straight(), 0.0, 12.0, lead=(25.0, 4.0))
    assert traj.follow_engaged
    gaps = 25.0 + 4.0 * traj.t - traj.s
    assert gaps.min() > 0.0


def test_anchor_time_weight_is_monotone():
    obj = straight(anchors=(AnchorPoint((40.0, 0.0), 3.2, 14.0),))
    misses = []
    for w in (0.0, 1.0, 10.0, 200.0):
        traj = plan_trajectory(obj, 0.0, 10.0, weights=CostWeights(anchor_time=w))
        misses.append(abs(np.interp(40.0, traj.s, traj.t) - 3.2))
    assert all(b <= a + 1e-9 for a, b in zip(misses, misses[1:]))


def test_replanning_is_continuous():
    obj = straight(anchors=(AnchorPoint((80.0, 0.0), 8.0, 6.0),))
    planner = MotionPlanner()
    planner.set_objective(obj)
    first = planner.plan(0.0, 10.0, now=0.0)
    s, v, a = first.sample(0.5)
    second = planner.plan(s, v, a, now=0.5)
    for t in np.linspace(0.5, 1.0, 6):
        assert abs(first.sample(t)[0] - second.sample(t)[0]) < 0.3


def test_violation_report():
    t = np.array([0.0, 0.1, 0.2])
    z = np.zeros(3)
    bad = Trajectory(t, z, np.array([0.0, -1.0, 10.0]), np.array([0.0, 4.0, 0.0]), z, z, z,
                     np.array([0.0, 0.0, 0.1]))
    assert bad.violations() == ["accel", "speed", "lateral"]


def test_weights_and_state_validation():
    with pytest.raises(ValueError):
        CostWeights(0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        CostWeights(anchor_time=-1.0)
    with pytest.raises(RuntimeError):
        MotionPlanner().plan(0.0, 1.0)
    assert PlannerConfig().accel_limit == 3.5
