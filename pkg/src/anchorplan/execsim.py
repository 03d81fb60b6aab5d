"""Closed-loop execution: kinematic vehicles, trajectory tracking, collision detection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envmodel import EnvironmentModel, LaneMap, MotionPlanningObjective, Pose, VehicleRecord
from .motionplan import MotionPlanner, PlannerConfig, Trajectory
from .policy import ACCEL_LIMIT, HeuristicPolicy
from .rollout import bicycle_step, pure_pursuit, speed_advice
from .scenegraph import VEHICLE_LENGTH, VEHICLE_WIDTH, GraphAgent, build_graph, diverge_gap

log = logging.getLogger(__name__)

KINDS = ("cav", "regular", "scripted")


@dataclass(frozen=True)
class ExecConfig:
    dt: float = 0.02
    wheelbase: float = 2.9
    lookahead_min: float = 3.0
    lookahead_gain: float = 0.8
    max_steer: float = 0.7
    position_gain: float = 4.0
    speed_gain: float = 4.0
    accel_limit: float = 5.0
    regular_period: float = 0.2
    replan_period: float = 0.5
    lateral_accel: float = 2.5
    comfort_decel: float = 2.0
    advice_lookahead: float = 30.0
    end_margin: float = 1.0


@dataclass(frozen=True)
class CollisionEvent:
    t: float
    a: int
    b: int
    penetration: float


def box_corners(x, y, heading, length=VEHICLE_LENGTH, width=VEHICLE_WIDTH) -> np.ndarray:
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    return local @ np.array([[c, s], [-s, c]]) + np.array([x, y])


def penetration_depth(ca: np.ndarray, cb: np.ndarray) -> float:
    """Separating-axis overlap of two convex quads; <= 0 means disjoint."""
    depth = np.inf
    for poly in (ca, cb):
        edges = np.roll(poly, -1, axis=0) - poly
        axes = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        for ax in axes[:2]:  # rectangles: two unique axes each
            pa, pb = ca @ ax, cb @ ax
            overlap = min(pa.max(), pb.max()) - max(pa.min(), pb.min())
            if overlap <= 0:
                return float(overlap)
            depth = min(depth, overlap)
    return float(depth)


@dataclass
class WorldVehicle:
    id: int
    kind: str
    route: tuple
    path: object  # RoutePath
    s: float
    x: float
    y: float
    heading: float
    v: float
    a: float = 0.0
    spawn_time: float = 0.0
    route_known: bool = False  # whether the planner may use the route of a non-CAV
    script: tuple = ()  # (t, speed) knots for scripted vehicles
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH
    active: bool = False
    finished: bool = False
    planner: Optional[MotionPlanner] = None
    trajectory: Optional[Trajectory] = None
    obj_offset: float = 0.0  # route arc length where the objective path starts
    traj_offset: float = 0.0  # same, for the objective the trajectory was planned on
    last_replan: float = -np.inf
    history: list = field(default_factory=list)  # (t, x, y, heading, v, a, s, lateral)

    @property
    def controllable(self) -> bool:
        return self.kind == "cav"

    def lane(self):
        lid = self.path.lane_at(self.s)
        return lid, self.s - self.path.offsets[lid]

    def remaining_route(self):
        lid, _ = self.lane()
        return tuple(self.route[self.route.index(lid):])


class World:
    """Ground-truth traffic simulation stepped at a fixed rate."""

    def __init__(self, lane_map: LaneMap, vehicles, config: ExecConfig | None = None,
                 planner_config: PlannerConfig | None = None, weights=None):
        self.lane_map = lane_map
        self.config = config or ExecConfig()
        self.planner_config = planner_config or PlannerConfig()
        self.weights = weights
        self.vehicles = {v.id: v for v in sorted(vehicles, key=lambda v: v.id)}
        self.t = 0.0
        self.step_count = 0
        self.collisions: list = []
        self._collided = set()
        self._regular_accel: dict = {}
        self._regular_next = 0.0
        self.heuristic = HeuristicPolicy()
        self._update_spawns()

    @classmethod
    def vehicle_at(cls, lane_map: LaneMap, vid: int, kind: str, route, s: float, speed: float, **kw):
        if kind not in KINDS:
            raise ValueError(f"unknown vehicle kind {kind!r}")
        route = tuple(route)
        lane_map.validate_route(route)
        path = lane_map.route_path(route)
        x, y = path.poly.point_at(s)
        return WorldVehicle(vid, kind, route, path, float(s), float(x), float(y),
                            float(path.poly.heading_at(s)), float(speed), **kw)

    # -- views ---------------------------------------------------------------

    def active(self):
        return [v for v in self.vehicles.values() if v.active]

    def environment_model(self) -> EnvironmentModel:
        recs = []
        for v in self.active():
            route = v.remaining_route() if (v.controllable or v.route_known) else None
            recs.append(VehicleRecord(v.id, Pose(v.x, v.y, v.heading), v.v, route, v.controllable))
        return EnvironmentModel(self.t, tuple(recs))

    def all_done(self) -> bool:
        return all(v.finished for v in self.vehicles.values())

    # -- objectives ----------------------------------------------------------

    def apply_objective(self, obj: MotionPlanningObjective):
        v = self.vehicles.get(obj.vehicle_id)
        if v is None or not v.controllable or v.finished:
            return False
        if v.planner is None:
            v.planner = MotionPlanner(self.weights, self.planner_config)
        v.planner.set_objective(obj)
        v.obj_offset = float(v.path.poly.project(*obj.path[0])[0])
        self._replan(v)
        return True

    def _lead(self, ego: WorldVehicle):
        lanes = set(ego.route)
        best = None
        for o in self.active():
            if o.id == ego.id:
                continue
            lid, ls = o.lane()
            if lid not in lanes:
                gap = diverge_gap(self.lane_map, ego.route, ego.s, o.route, o.s)
                if gap is not None and (best is None or gap < best[0]):
                    best = (max(gap, 0.0), o.v)
                continue
            ahead = ego.path.offsets[lid] + ls - ego.s
            if ahead > 0:
                gap = max(ahead - (ego.length + o.length) / 2.0, 0.0)
                if best is None or gap < best[0]:
                    best = (gap, o.v)
        return best

    def _replan(self, v: WorldVehicle):
        s_obj, vel, a0 = v.s - v.obj_offset, v.v, v.a
        if v.trajectory is not None:
            s_ref, v_ref, a_ref = v.trajectory.sample(self.t)
            s_ref += v.traj_offset
            # continue from the reference when tracking is good
            if abs(s_ref - v.s) < 0.5 and abs(v_ref - v.v) < 0.5:
                s_obj, vel, a0 = s_ref - v.obj_offset, v_ref, a_ref
        v.trajectory = v.planner.plan(s_obj, vel, a0, now=self.t, lead=self._lead(v))
        v.traj_offset = v.obj_offset
        v.last_replan = self.t
        if v.trajectory.infeasible:
            log.debug("vehicle %s: infeasible motion plan at t=%.2f", v.id, self.t)

    # -- stepping ------------------------------------------------------------

    def _update_spawns(self):
        for v in self.vehicles.values():
            if not v.active and not v.finished and v.spawn_time <= self.t + 1e-9:
                v.active = True
                v.last_replan = -np.inf

    def _regular_actions(self):
        agents = []
        for v in self.active():
            lid, ls = v.lane()
            agents.append(GraphAgent(v.id, lid, ls, v.v, v.controllable, (v.remaining_route(),)))
        if not agents:
            return {}
        act = self.heuristic.select_action(build_graph(agents, self.lane_map)).as_dict()
        cfg = self.config
        out = {}
        for v in self.active():
            if v.kind != "regular":
                continue
            adv = speed_advice(v.path, v.s, cfg.advice_lookahead, cfg.lateral_accel, cfg.comfort_decel)
            a = min(act[v.id], (adv - v.v) / cfg.regular_period)
            out[v.id] = max(-ACCEL_LIMIT, min(ACCEL_LIMIT, a))
        return out

    def _accel(self, v: WorldVehicle) -> float:
        cfg = self.config
        if v.kind == "scripted":
            ts, vs = zip(*v.script) if v.script else ((0.0,), (v.v,))
            target = float(np.interp(self.t + cfg.dt, ts, vs))
            return (target - v.v) / cfg.dt
        if v.kind == "regular":
            return self._regular_accel.get(v.id, 0.0)
        if v.trajectory is None:
            return 0.0
        if self.t - v.last_replan >= cfg.replan_period - 1e-9:
            self._replan(v)
        s_ref, v_ref, a_ref = v.trajectory.sample(self.t)
        s_ref += v.traj_offset
        a = a_ref + cfg.speed_gain * (v_ref - v.v) + cfg.position_gain * (s_ref - v.s)
        return float(np.clip(a, -cfg.accel_limit, cfg.accel_limit))

    def step(self):
        cfg = self.config
        if self.t >= self._regular_next - 1e-9:
            self._regular_accel = self._regular_actions()
            self._regular_next = self.t + cfg.regular_period
        for v in self.active():
            a = self._accel(v)
            if v.v + a * cfg.dt < 0:
                a = -v.v / cfg.dt
            v.a = a
            _, lat = v.path.poly.project(v.x, v.y, v.s - 1.0, v.s + 1.0)
            v.history.append((self.t, v.x, v.y, v.heading, v.v, a, v.s, lat))
        for v in self.active():
            steer = pure_pursuit(v.path.poly, v.x, v.y, v.heading, v.s, v.v, cfg.wheelbase,
                                 cfg.lookahead_min, cfg.lookahead_gain, cfg.max_steer)
            v.x, v.y, v.heading, v.v = bicycle_step(v.x, v.y, v.heading, v.v, v.a, steer, cfg.dt,
                                                    cfg.wheelbase)
            v.s, _ = v.path.poly.project(v.x, v.y, v.s - 1.0, v.s + v.v * cfg.dt + 2.0)
        self.step_count += 1
        self.t = self.step_count * cfg.dt
        for v in self.active():
            if v.s >= v.path.length - cfg.end_margin:
                v.active = False
                v.finished = True
                v.history.append((self.t, v.x, v.y, v.heading, v.v, 0.0, v.s, 0.0))
        self._update_spawns()
        self._check_collisions()

    def _check_collisions(self):
        act = self.active()
        for i in range(len(act)):
            for j in range(i + 1, len(act)):
                a, b = act[i], act[j]
                key = (min(a.id, b.id), max(a.id, b.id))
                if key in self._collided:
                    continue
                reach = (np.hypot(a.length, a.width) + np.hypot(b.length, b.width)) / 2.0
                if (a.x - b.x) ** 2 + (a.y - b.y) ** 2 > reach * reach:
                    continue
                depth = penetration_depth(box_corners(a.x, a.y, a.heading, a.length, a.width),
                                          box_corners(b.x, b.y, b.heading, b.length, b.width))
                if depth > 0:
                    self._collided.add(key)
                    self.collisions.append(CollisionEvent(self.t, key[0], key[1], depth))
                    log.info("collision %s-%s at t=%.2f depth %.3f m", key[0], key[1], self.t, depth)
