import numpy as np
import pytest

from anchorplan.envmodel import EnvironmentModel, Pose, VehicleRecord
from anchorplan.scenegraph import (EDGE_DIM, VERTEX_DIM, OffMapError, build_observation)

from conftest import place


def priority_crossing(lane_map, s_ego=25.0, s_obj=25.0):
    # ego on the minor road, regular object with right of way on the priority road
    return EnvironmentModel(0.0, (place(lane_map, 1, "WE", s_ego, 10.0),
                                  place(lane_map, 2, "SN", s_obj, 10.0, controllable=False)))


def test_empty_model(lane_map):
    g = build_observation(EnvironmentModel(0.0), lane_map)
    assert g.vertices == () and g.edges == ()
    assert g.vertex_matrix().shape == (0, VERTEX_DIM)


def test_priority_crossing_edge(lane_map):
    g = build_observation(priority_crossing(lane_map), lane_map)
    assert g.ids == [1, 2]
    assert len(g.edges) == 1
    e = g.edges[0]
    assert e.features.kind == "crossing"
    prio_of = {e.source: e.features.priority, e.target: -e.features.priority}
    assert prio_of[1] == -1 and prio_of[2] == 1
    ego = g.vertices[0]
    assert ego.position == pytest.approx(25.0 - 100.0)
    assert ego.controllable == 1 and g.vertices[1].controllable == 0


def test_disjoint_routes_no_edge(lane_map):
    em = EnvironmentModel(0.0, (place(lane_map, 1, "WS", 50.0, 8.0), place(lane_map, 2, "EN", 50.0, 8.0)))
    g = build_observation(em, lane_map)
    assert len(g.vertices) == 2 and g.edges == ()


def test_same_lane_following(lane_map):
    em = EnvironmentModel(0.0, (place(lane_map, 1, "WE", 40.0, 8.0), place(lane_map, 2, "WE", 60.0, 8.0)))
    g = build_observation(em, lane_map)
    assert len(g.edges) == 1
    e = g.edges[0]
    assert e.features.kind == "following"
    assert (e.source, e.target) == (1, 2)
    assert e.features.distance == pytest.approx(20.0 - 5.0)


def test_off_map_vehicle_identified(lane_map):
    em = EnvironmentModel(0.0, (VehicleRecord(7, Pose(300.0, 300.0, 0.0), 5.0),))
    with pytest.raises(OffMapError) as err:
        build_observation(em, lane_map)
    assert err.value.vehicle_id == 7


def test_priority_antisymmetric_in_directed_edges(lane_map):
    g = build_observation(priority_crossing(lane_map), lane_map)
    fwd, rev = g.directed_edges()
    assert fwd[2][len(("crossing", "merging", "following")) + 1] == -rev[2][len(("crossing", "merging", "following")) + 1]
    assert fwd[2].shape == (EDGE_DIM,)
    assert np.all(np.abs(g.vertex_matrix()) <= 1.0)


def test_permutation_equivariance(lane_map):
    recs = [place(lane_map, 1, "WE", 30.0, 8.0), place(lane_map, 2, "SN", 35.0, 9.0, False),
            place(lane_map, 3, "EW", 45.0, 7.0)]
    g = build_observation(EnvironmentModel(0.0, tuple(recs)), lane_map)
    relabel = {1: 30, 2: 10, 3: 20}
    moved = [VehicleRecord(relabel[r.id], r.pose, r.speed, r.route, r.controllable) for r in recs]
    h = build_observation(EnvironmentModel(0.0, tuple(moved)), lane_map)
    feats = lambda graph: sorted((v.position, v.speed, v.controllable) for v in graph.vertices)
    assert feats(g) == feats(h)
    edges_g = {(relabel[e.source], relabel[e.target], e.features.kind, round(e.features.distance, 9))
               for e in g.edges}
    edges_h = {(e.source, e.target, e.features.kind, round(e.features.distance, 9)) for e in h.edges}
    norm = lambda es: {(min(a, b), max(a, b), k, d) for a, b, k, d in es}
    assert norm(edges_g) == norm(edges_h)


def test_edge_disappears_once_both_passed(lane_map):
    conf = lane_map.route_conflicts(("W_in", "W_E", "E_out"), ("S_in", "S_N", "N_out"))[0]
    seen_gone = False
    for d in np.arange(-30.0, 30.0, 1.0):
        g = build_observation(priority_crossing(lane_map, conf[0] + d, conf[1] + d), lane_map)
        if not g.edges:
            seen_gone = True
        elif seen_gone:
            pytest.fail(f"edge re-created at offset {d}")
    assert seen_gone


def test_adding_unrelated_vehicle(lane_map):
    base = priority_crossing(lane_map)
    g = build_observation(base, lane_map)
    extra = place(lane_map, 9, ("S_out",), 30.0, 10.0)
    h = build_observation(EnvironmentModel(0.0, base.vehicles + (extra,)), lane_map)
    assert len(h.vertices) == len(g.vertices) + 1
    assert len(h.edges) == len(g.edges)


def test_unknown_route_uses_union_of_candidates(lane_map):
    em = EnvironmentModel(0.0, (place(lane_map, 1, "WS", 50.0, 8.0),
                                place(lane_map, 2, "EN", 50.0, 8.0, controllable=False, known=False)))
    g = build_observation(em, lane_map)
    # the regular vehicle from the east might go straight or turn left, both cross W_S's target
    assert len(g.edges) == 1


def test_graph_dump_is_json(lane_map):
    import json
    doc = json.loads(build_observation(priority_crossing(lane_map), lane_map).dumps())
    assert len(doc["vertices"]) == 2 and doc["edges"][0]["kind"] == "crossing"
