"""Built-in 5 Hz simulator that rolls the scene forward under a policy and
turns the buffered trajectories into motion-planning objectives."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envmodel import (AnchorPoint, EnvironmentModel, LaneMap, MotionPlanningObjective,
                       RoutePath, VehicleRecord)
from .geometry import wrap_angle
from .policy import ACCEL_LIMIT, HeuristicPolicy, JointAction
from .scenegraph import GraphAgent, OffMapError, build_graph, locate_vehicle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RolloutConfig:
    dt: float = 0.2
    horizon: float = 30.0
    wheelbase: float = 2.9
    lookahead_min: float = 3.0
    lookahead_gain: float = 0.8
    max_steer: float = 0.7
    lateral_accel: float = 2.5
    comfort_decel: float = 2.0
    advice_lookahead: float = 30.0
    ruleout_lateral: float = 1.5
    # automated vehicles speed up no harder than their planner's smooth profiles
    cav_accel: float = 1.2
    issue_delay: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("step period must be > 0")
        if self.horizon < self.dt:
            raise ValueError("timeout must cover at least one step")


@dataclass
class TrajSample:
    t: float
    x: float
    y: float
    heading: float
    speed: float
    accel: float
    s: float


@dataclass
class SimVehicle:
    id: int
    controllable: bool
    routes: tuple  # assumed candidates: the actual route for CAVs, worst case otherwise
    route: tuple  # the one it drives along
    path: RoutePath
    s: float
    x: float
    y: float
    heading: float
    speed: float
    known_route: bool = True
    route_s0: tuple = ()  # start arc length along each candidate route
    reached: bool = False
    trajectory: list = field(default_factory=list)

    def lane(self):
        lid = self.path.lane_at(self.s)
        return lid, self.s - self.path.offsets[lid]


@dataclass
class RolloutState:
    t: float
    vehicles: list
    lane_map: LaneMap
    ruled_out: dict = field(default_factory=dict)
    start_s: dict = field(default_factory=dict)


@dataclass
class PlanResult:
    objectives: tuple
    status: str
    warnings: list
    trajectories: dict
    ruled_out: dict
    steps: int
    issue_timestamp: float
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# vehicle model helpers shared with the execution simulator


def pure_pursuit(poly, x, y, heading, s_proj, speed, wheelbase, lookahead_min=3.0,
                 lookahead_gain=0.8, max_steer=0.7):
    ld = max(lookahead_min, lookahead_gain * speed)
    tx, ty = poly.point_at(s_proj + ld)
    alpha = wrap_angle(math.atan2(ty - y, tx - x) - heading)
    delta = math.atan2(2.0 * wheelbase * math.sin(alpha), ld)
    return max(-max_steer, min(max_steer, delta))


def bicycle_step(x, y, heading, speed, accel, steer, dt, wheelbase):
    """Explicit Euler step of the kinematic bicycle; position uses the pre-update speed."""
    nx = x + speed * math.cos(heading) * dt
    ny = y + speed * math.sin(heading) * dt
    nh = wrap_angle(heading + speed / wheelbase * math.tan(steer) * dt)
    nv = max(0.0, speed + accel * dt)
    return nx, ny, nh, nv


def _advice_bound(path: RoutePath, lateral_accel: float):
    cache = path.__dict__.setdefault("_advice", {})
    hit = cache.get(lateral_accel)
    if hit is None:
        grid = np.arange(0.0, path.length + 0.25, 0.25)
        kappa = np.abs(path.poly.curvature_at(grid))
        with np.errstate(divide="ignore"):
            curve = np.where(kappa > 1e-9, np.sqrt(lateral_accel / np.maximum(kappa, 1e-12)), np.inf)
        bound = np.minimum(curve, path.limit_at(grid))
        hit = (grid, bound)
        cache[lateral_accel] = hit
    return hit


def speed_advice(path: RoutePath, s: float, lookahead: float = 30.0,
                 lateral_accel: float = 2.5, comfort_decel: float = 2.0) -> float:
    """Curvature-anticipating speed bound at arc length ``s`` of a route.

    Minimum over the lookahead window of the lateral-acceleration speed and
    the lane limits, each propagated backwards under the comfort deceleration
    so the bound is reachable from the current position.
    """
    grid, bound = _advice_bound(path, lateral_accel)
    i0 = int(np.searchsorted(grid, s, side="left"))
    i1 = int(np.searchsorted(grid, s + lookahead, side="right"))
    cur = float(path.limit_at(min(max(s, 0.0), path.length)))
    if i1 <= i0:
        return cur
    ahead = np.maximum(grid[i0:i1] - s, 0.0)
    vals = np.sqrt(bound[i0:i1] ** 2 + 2.0 * comfort_decel * ahead)
    return float(min(cur, vals.min()))


def _straightness(lane_map, route):
    rp = lane_map.route_path(route)
    return float(np.abs(np.diff(np.unwrap(rp.poly.seg_heading))).sum())


def worst_case_routes(vehicle: VehicleRecord, lane_map: LaneMap, candidates=None,
                      lateral_tol: float = 1.5):
    """Plausible routes of a vehicle and the ones ruled out by its pose.

    A declared route is returned as the only candidate. Otherwise every
    route reachable from the current lane is considered, or the given
    ``candidates`` are filtered: a route drops out once the vehicle is no
    longer on one of its lanes or is more than ``lateral_tol`` off it.
    Returns (kept routes, ruled-out routes).
    """
    if vehicle.route is not None:
        return [tuple(vehicle.route)], []
    lane_id, _ = locate_vehicle(vehicle, lane_map)
    if candidates is None:
        return lane_map.enumerate_routes(lane_id), []
    kept, dropped = [], []
    x, y = vehicle.pose.x, vehicle.pose.y
    for r in candidates:
        r = tuple(r)
        ok = False
        rp = lane_map.route_path(r)
        _, lat = rp.poly.project(x, y)
        if abs(lat) <= lateral_tol:
            ok = any(abs(lane_map.lanes[l].poly.project(x, y)[1]) <= lateral_tol for l in r)
        (kept if ok else dropped).append(r)
    return kept, dropped


# ---------------------------------------------------------------------------
# the rollout


def init_state(em: EnvironmentModel, lane_map: LaneMap, assumed_routes: Optional[dict] = None) -> RolloutState:
    assumed_routes = assumed_routes or {}
    vehicles = []
    ruled_out = {}
    for rec in em.vehicles:
        lane_id, lane_s = locate_vehicle(rec, lane_map)
        if rec.route is not None:
            routes = (tuple(rec.route),)
        elif rec.id in assumed_routes:
            routes = tuple(tuple(r) for r in assumed_routes[rec.id] if lane_id in r)
            if not routes:
                routes = tuple(lane_map.enumerate_routes(lane_id))
        else:
            routes = tuple(lane_map.enumerate_routes(lane_id))
        if len(routes) > 1:
            kept, dropped = worst_case_routes(rec, lane_map, routes)
            if kept and dropped:
                routes = tuple(kept)
                ruled_out[rec.id] = list(dropped)
        drive = min(routes, key=lambda r: (_straightness(lane_map, r), r))
        path = lane_map.route_path(drive)
        s = path.offsets[lane_id] + lane_s
        starts = tuple(lane_map.route_path(r).offsets[lane_id] + lane_s for r in routes)
        sv = SimVehicle(rec.id, rec.controllable, routes, drive, path, s, rec.pose.x, rec.pose.y,
                        rec.pose.heading, rec.speed, known_route=rec.route is not None, route_s0=starts)
        sv.reached = s >= path.dest_s
        vehicles.append(sv)
    return RolloutState(0.0, vehicles, lane_map, ruled_out, {v.id: v.s for v in vehicles})


def _route_positions(v: SimVehicle, start_s: float):
    """Arc length along every candidate route, advancing with the driven one."""
    return tuple(s0 + v.s - start_s for s0 in v.route_s0)


def _agents(state: RolloutState):
    out = []
    for v in state.vehicles:
        if v.reached:
            continue
        lid, ls = v.lane()
        if len(v.routes) > 1:
            # an unobserved turn is never ruled out inside the rollout
            pos = _route_positions(v, state.start_s[v.id])
            out.append(GraphAgent(v.id, lid, ls, v.speed, v.controllable, v.routes, pos))
        else:
            out.append(GraphAgent(v.id, lid, ls, v.speed, v.controllable, (v.route,)))
    return out


def rollout_step(state: RolloutState, policy, lane_map: LaneMap, config: RolloutConfig,
                 regular_policy=None) -> RolloutState:
    """Observe, select a joint action, advance every active vehicle one step."""
    regular_policy = regular_policy or HeuristicPolicy()
    active = [v for v in state.vehicles if not v.reached]
    dt = config.dt
    if not active:
        state.t += dt
        return state
    obs = build_graph(_agents(state), lane_map)
    action = policy.select_action(obs).as_dict()
    if policy is regular_policy or isinstance(policy, HeuristicPolicy):
        regular = action
    else:
        regular = regular_policy.select_action(obs).as_dict()
    t_next = state.t + dt
    for v in active:
        a = action[v.id] if v.controllable else regular[v.id]
        advice = speed_advice(v.path, v.s, config.advice_lookahead, config.lateral_accel,
                              config.comfort_decel)
        if not v.known_route and len(v.routes) > 1:
            # a possible turner slows down like one until the turn is ruled out
            for r, s_r in zip(v.routes, _route_positions(v, state.start_s[v.id])):
                if r != v.route:
                    rp = lane_map.route_path(r)
                    advice = min(advice, speed_advice(rp, s_r, config.advice_lookahead,
                                                      config.lateral_accel, config.comfort_decel))
        a = min(a, (advice - v.speed) / dt, config.cav_accel if v.controllable else ACCEL_LIMIT)
        a = max(-ACCEL_LIMIT, a)
        if not v.trajectory:
            v.trajectory.append(TrajSample(state.t, v.x, v.y, v.heading, v.speed, a, v.s))
        else:
            v.trajectory[-1].accel = a
        steer = pure_pursuit(v.path.poly, v.x, v.y, v.heading, v.s, v.speed, config.wheelbase,
                             config.lookahead_min, config.lookahead_gain, config.max_steer)
        v.x, v.y, v.heading, v.speed = bicycle_step(v.x, v.y, v.heading, v.speed, a, steer, dt,
                                                    config.wheelbase)
        limit = float(v.path.seg_limit.max())
        assert v.speed <= 2.0 * limit + 1e-9, f"rollout speed blew up for vehicle {v.id}"
        v.s, _ = v.path.poly.project(v.x, v.y, v.s - 1.0, v.s + v.speed * dt + 5.0)
        v.trajectory.append(TrajSample(t_next, v.x, v.y, v.heading, v.speed, 0.0, v.s))
        if v.s >= v.path.dest_s:
            v.reached = True
    state.t = t_next
    return state


def termination_check(state: RolloutState, config: RolloutConfig) -> str:
    if all(v.reached for v in state.vehicles):
        return "done"
    if state.t >= config.horizon - 1e-9:
        return "timeout"
    return "continue"


def _crossing(traj, s_mark):
    """(time, speed) where the buffered trajectory first reaches arc length ``s_mark``."""
    for a, b in zip(traj, traj[1:]):
        if a.s < s_mark <= b.s:
            f = (s_mark - a.s) / (b.s - a.s)
            return a.t + f * (b.t - a.t), a.speed + f * (b.speed - a.speed)
    return None


def objective_for(v: SimVehicle, s0: float, em_timestamp: float, issue_ts: float):
    """MP objective for a rolled-out vehicle that started at arc length ``s0``.

    Returns (objective, warning or None).
    """
    path = v.path
    s_start = min(s0, path.length - 0.5)
    pts = path.poly.sub(s_start)
    seg_mid = s_start + (np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])[:-1]
                         + np.hypot(*np.diff(pts, axis=0).T) / 2.0)
    vmax = tuple(float(x) for x in path.limit_at(seg_mid))
    anchors = ()
    warning = None
    if s0 < path.entry_s:
        hit = _crossing(v.trajectory, path.entry_s)
        if hit is None:
            warning = "no intersection entry before rollout timeout"
        else:
            t_cross, v_cross = hit
            dt_ap = em_timestamp + t_cross - issue_ts
            if dt_ap > 0:
                pos = tuple(float(c) for c in path.poly.point_at(path.entry_s))
                anchors = (AnchorPoint(pos, dt_ap, max(0.0, v_cross)),)
            else:
                warning = "anchor time elapsed before issue"
    obj = MotionPlanningObjective(v.id, issue_ts, tuple(map(tuple, pts)), vmax, anchors)
    return obj, warning


def format_trace(result: PlanResult) -> str:
    """Per-step rollout states of every vehicle as '|'-separated text."""
    lines = ["t|id|x|y|heading|speed|accel|s"]
    for vid in sorted(result.trajectories):
        for p in result.trajectories[vid]:
            lines.append(f"{p.t:.2f}|{vid}|{p.x:.3f}|{p.y:.3f}|{p.heading:.4f}|{p.speed:.3f}|"
                         f"{p.accel:.3f}|{p.s:.3f}")
    return "\n".join(lines) + "\n"


def plan(em: EnvironmentModel, lane_map: LaneMap, policy, config: RolloutConfig | None = None,
         issue_timestamp: Optional[float] = None, assumed_routes: Optional[dict] = None,
         keep_state: bool = False) -> PlanResult:
    """Roll the scene out under ``policy`` and derive one objective per controllable vehicle."""
    config = config or RolloutConfig()
    wall0 = time.perf_counter()
    issue_ts = em.timestamp + config.issue_delay if issue_timestamp is None else issue_timestamp
    for rec in em.vehicles:
        if rec.controllable and rec.route is None:
            raise ValueError(f"controllable vehicle {rec.id} has no route")
    state = init_state(em, lane_map, assumed_routes)
    start_s = {v.id: v.s for v in state.vehicles}
    regular = HeuristicPolicy()
    steps = 0
    status = termination_check(state, config)
    while status == "continue":
        rollout_step(state, policy, lane_map, config, regular)
        steps += 1
        status = termination_check(state, config)
    for v in state.vehicles:
        if not v.trajectory or v.trajectory[-1].t < state.t - 1e-9:
            v.trajectory.append(TrajSample(state.t, v.x, v.y, v.heading, v.speed, 0.0, v.s))
    objectives, warnings = [], []
    for v in state.vehicles:
        if not v.controllable:
            continue
        obj, warn = objective_for(v, start_s[v.id], em.timestamp, issue_ts)
        objectives.append(obj)
        if warn:
            warnings.append((v.id, warn))
            log.debug("vehicle %s: %s", v.id, warn)
    result = PlanResult(tuple(objectives), status, warnings,
                        {v.id: v.trajectory for v in state.vehicles},
                        {k: list(r) for k, r in state.ruled_out.items()}, steps, issue_ts,
                        time.perf_counter() - wall0)
    if keep_state:
        result.state = state
    return result
