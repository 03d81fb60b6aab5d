"""Scenarios, batch experiments, metrics and report files."""
from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import median
from typing import Optional

import numpy as np
from shapely.geometry import Point, Polygon

from .envmodel import LaneMap, default_map
from .execsim import World, box_corners, penetration_depth
from .orchestrator import OrchestratorConfig, RunMode, format_log, parse_log, run_episode
from .policy import make_policy
from .scenegraph import VEHICLE_LENGTH, VEHICLE_WIDTH

log = logging.getLogger(__name__)

SCENARIO_FORMAT_VERSION = 1
SCENARIO_TYPES = ("random", "vil")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioVehicle:
    id: int
    lane: str
    s: float  # arc position on ``lane``
    speed: float
    route: tuple
    kind: str = "cav"  # cav | regular | scripted
    route_known: bool = False
    script: tuple = ()  # (t, speed) knots for scripted vehicles
    spawn_time: float = 0.0

    @property
    def controllable(self) -> bool:
        return self.kind == "cav"

    def to_dict(self):
        d = asdict(self)
        d["route"] = list(self.route)
        d["script"] = [list(k) for k in self.script]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["id"]), str(d["lane"]), float(d["s"]), float(d["speed"]),
                   tuple(d["route"]), d.get("kind", "cav"), bool(d.get("route_known", False)),
                   tuple((float(a), float(b)) for a, b in d.get("script", ())),
                   float(d.get("spawn_time", 0.0)))


@dataclass(frozen=True)
class Scenario:
    name: str
    vehicles: tuple
    type: str = "random"
    seed: Optional[int] = None
    map: str = "default"

    def to_dict(self):
        return {"format_version": SCENARIO_FORMAT_VERSION, "name": self.name, "type": self.type,
                "seed": self.seed, "map": self.map, "vehicles": [v.to_dict() for v in self.vehicles]}

    @classmethod
    def from_dict(cls, d):
        try:
            if d.get("format_version") != SCENARIO_FORMAT_VERSION:
                raise ScenarioError(f"unsupported scenario format {d.get('format_version')!r}")
            if d.get("type", "random") not in SCENARIO_TYPES:
                raise ScenarioError(f"unknown scenario type {d.get('type')!r}")
            return cls(str(d["name"]), tuple(ScenarioVehicle.from_dict(v) for v in d["vehicles"]),
                       d.get("type", "random"), d.get("seed"), d.get("map", "default"))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.loads(Path(path).read_text())

    def validate(self, lane_map: LaneMap):
        ids = [v.id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate vehicle ids")
        boxes = []
        for v in self.vehicles:
            if v.lane not in lane_map.lanes:
                raise ScenarioError(f"vehicle {v.id}: unknown lane {v.lane!r}")
            if not v.route or v.route[0] != v.lane:
                raise ScenarioError(f"vehicle {v.id}: route must start on its lane")
            lane_map.validate_route(v.route)
            if not 0.0 <= v.s <= lane_map.lanes[v.lane].length:
                raise ScenarioError(f"vehicle {v.id}: position {v.s:.2f} outside lane {v.lane}")
            if v.speed < 0:
                raise ScenarioError(f"vehicle {v.id}: negative speed")
            if v.kind == "scripted" and not v.script:
                raise ScenarioError(f"vehicle {v.id}: scripted vehicle without speed profile")
            poly = lane_map.lanes[v.lane].poly
            x, y = poly.point_at(v.s)
            boxes.append((v, box_corners(x, y, poly.heading_at(v.s))))
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                a, b = boxes[i], boxes[j]
                if a[0].spawn_time == b[0].spawn_time and penetration_depth(a[1], b[1]) > 0:
                    raise ScenarioError(f"vehicles {a[0].id} and {b[0].id} overlap initially")

    def build_world(self, lane_map: LaneMap, **world_kw) -> World:
        self.validate(lane_map)
        vs = []
        for v in self.vehicles:
            path = lane_map.route_path(v.route)
            vs.append(World.vehicle_at(lane_map, v.id, v.kind, v.route, path.offsets[v.lane] + v.s,
                                       v.speed, spawn_time=v.spawn_time, route_known=v.route_known,
                                       script=v.script))
        return World(lane_map, vs, **world_kw)


def generate_scenarios(lane_map: LaneMap, count: int, seed: int, cav_share: float = 1.0,
                       min_vehicles: int = 3, max_vehicles: int = 6, min_gap: float = 12.0,
                       distance=(40.0, 60.0), speed_ratio=(0.7, 1.0),
                       max_attempts: int = 100) -> list:
    """Random intersection scenarios with one or two vehicles per access lane."""
    access = sorted(lane_map.entries)
    if len(access) < 2:
        raise ScenarioError("map needs at least two access lanes")
    if distance[1] - distance[0] < min_gap:
        raise ScenarioError("distance range too short for two vehicles per lane")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        for _ in range(max_attempts):
            counts = rng.integers(1, 3, size=len(access))
            if min_vehicles <= counts.sum() <= max_vehicles:
                break
        else:
            raise ScenarioError(f"no valid vehicle count after {max_attempts} attempts")
        vehicles = []
        vid = 1
        for lane_id, n in zip(access, counts):
            lane = lane_map.lanes[lane_id]
            for _ in range(max_attempts):
                d = np.sort(rng.uniform(distance[0], distance[1], size=n))
                if n == 1 or d[1] - d[0] >= min_gap:
                    break
            else:
                raise ScenarioError(f"could not place {n} vehicles on {lane_id}")
            routes = lane_map.enumerate_routes(lane_id)
            for dist in d:
                route = routes[int(rng.integers(len(routes)))]
                ratio = rng.uniform(*speed_ratio)
                kind = "cav" if rng.random() < cav_share else "regular"
                vehicles.append(ScenarioVehicle(vid, lane_id, float(lane_map.entries[lane_id] - dist),
                                                float(ratio * lane.speed_limit), tuple(route), kind))
                vid += 1
        out.append(Scenario(f"random_{seed}_{k:03d}", tuple(vehicles), "random", int(seed)))
    return out


def vil_scenario(lane_map: LaneMap | None = None, object_speed: float = 8.0, ego_s0: float = -55.0,
                 ego_speed: float = 8.0, object_s0: Optional[float] = None,
                 ego_route=("W_in", "W_E", "E_out"), object_route=("S_in", "S_N", "N_out")) -> Scenario:
    """Automated ego vs. a scripted prioritized crossing object.

    Initial positions are given relative to the conflict point of the two
    routes (negative before it); the object starts at ``ego_s0`` unless
    ``object_s0`` is set and keeps ``object_speed`` throughout.
    """
    lane_map = lane_map or default_map()
    object_s0 = ego_s0 if object_s0 is None else object_s0
    conf = lane_map.route_conflicts(tuple(ego_route), tuple(object_route))
    if not conf:
        raise ScenarioError("ego and object routes do not conflict")
    ce, co, _ = conf[0]
    ego = ScenarioVehicle(1, ego_route[0], ce + ego_s0, ego_speed, tuple(ego_route), "cav")
    obj = ScenarioVehicle(2, object_route[0], co + object_s0, object_speed, tuple(object_route),
                          "scripted", True, ((0.0, object_speed), (1000.0, object_speed)))
    for v in (ego, obj):
        if not 0 <= v.s <= lane_map.lanes[v.lane].length:
            raise ScenarioError(f"vehicle {v.id} would start outside its access lane")
    return Scenario(f"vil_{object_speed:g}_{ego_s0:g}", (ego, obj), "vil")


# ---------------------------------------------------------------------------
# episodes

MODES = (RunMode.SINGLE, RunMode.CYCLIC)


def run_scenario(scenario: Scenario, lane_map: LaneMap, mode, policy="heuristic",
                 config: OrchestratorConfig | None = None):
    policy = make_policy(policy) if isinstance(policy, str) else policy
    base = config or OrchestratorConfig()
    cfg = dataclasses.replace(base, mode=RunMode(mode))
    return run_episode(scenario.build_world(lane_map), policy, cfg)


def min_clearance(world: World, a: int, b: int) -> float:
    """Smallest footprint distance between two vehicles over their common history (0 if touching)."""
    ha = {round(h[0], 6): h for h in world.vehicles[a].history}
    best = np.inf
    for h in world.vehicles[b].history:
        o = ha.get(round(h[0], 6))
        if o is None:
            continue
        if np.hypot(o[1] - h[1], o[2] - h[2]) - 2 * np.hypot(VEHICLE_LENGTH, VEHICLE_WIDTH) / 2 > best:
            continue
        pa = Polygon(box_corners(o[1], o[2], o[3]))
        pb = Polygon(box_corners(h[1], h[2], h[3]))
        best = min(best, pa.distance(pb))
    return float(best)


def relative_motion(world: World, ego: int, obj: int, lane_map: LaneMap):
    """(t, s_ego, s_obj) with positions relative to the routes' first conflict point."""
    ve, vo = world.vehicles[ego], world.vehicles[obj]
    conf = lane_map.route_conflicts(ve.route, vo.route)
    if not conf:
        raise ScenarioError("vehicles do not share a conflict point")
    ce, co, _ = conf[0]
    ho = {round(h[0], 6): h[6] for h in vo.history}
    return [(h[0], h[6] - ce, ho[round(h[0], 6)] - co) for h in ve.history if round(h[0], 6) in ho]


def ego_gap_at_object_crossing(rows) -> Optional[float]:
    """s_ego when the object passes its conflict point, None if it never does."""
    for (t0, e0, o0), (t1, e1, o1) in zip(rows, rows[1:]):
        if o0 < 0 <= o1:
            f = -o0 / (o1 - o0) if o1 != o0 else 0.0
            return e0 + f * (e1 - e0)
    return None


# ---------------------------------------------------------------------------
# metrics on episode logs

def crossing_order(records: dict, polygon: Polygon):
    """Vehicle ids by first logged state inside ``polygon``; also returns ids that never enter."""
    first = {}
    seen = []
    for r in records["S"]:
        t, vid, x, y = float(r[0]), int(r[1]), float(r[2]), float(r[3])
        if vid not in seen:
            seen.append(vid)
        if vid not in first and polygon.contains(Point(x, y)):
            first[vid] = t
    order = sorted(first, key=lambda v: (first[v], v))
    missing = sorted(v for v in seen if v not in first)
    return order, missing


def anchor_times(records: dict) -> dict:
    """Absolute anchor time of the last issued objective per vehicle."""
    out = {}
    for r in records["A"]:
        out[int(r[1])] = float(r[0]) + float(r[4])
    return out


def log_status(text: str) -> str:
    for line in text.splitlines():
        if line.startswith("# status "):
            return line.split()[2]
    return "unknown"


DEVIATION_BINS = tuple(np.round(np.arange(0.0, 3.01, 0.25), 2))


@dataclass
class EvaluationReport:
    scenarios: list = field(default_factory=list)  # per-scenario dicts
    deviations: list = field(default_factory=list)  # order-consistent scenarios only
    velocity: dict = field(default_factory=dict)  # (vehicle count, mode) -> median speed
    acceleration: dict = field(default_factory=dict)  # (vehicle count, mode) -> median |accel|
    collisions: dict = field(default_factory=dict)  # mode -> count
    failures: dict = field(default_factory=dict)  # mode -> planner failures

    def histogram(self):
        edges = list(DEVIATION_BINS) + [np.inf]
        counts = np.histogram(self.deviations, bins=edges)[0] if self.deviations else np.zeros(len(edges) - 1)
        return [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))]

    def share_within(self, limit: float) -> float:
        if not self.deviations:
            return 1.0
        return float(np.mean(np.asarray(self.deviations) <= limit + 1e-9))


def compute_metrics(paired, polygon: Polygon) -> EvaluationReport:
    """``paired``: iterable of (scenario name, {mode name: (log text)})."""
    rep = EvaluationReport()
    speeds, accels = {}, {}
    modes = [m.value for m in MODES]
    for m in modes:
        rep.collisions[m] = 0
        rep.failures[m] = 0
    for name, logs in paired:
        row = {"scenario": name}
        recs = {m: parse_log(logs[m]) for m in modes if m in logs}
        nveh = 0
        for m, r in recs.items():
            status = log_status(logs[m])
            row[f"status_{m}"] = status
            row[f"collisions_{m}"] = len(r["C"])
            rep.collisions[m] += len(r["C"])
            rep.failures[m] += status == "planner_failure"
            order, missing = crossing_order(r, polygon)
            row[f"order_{m}"] = order
            row[f"missing_{m}"] = missing
            ids = {int(s[1]) for s in r["S"]}
            nveh = max(nveh, len(ids))
            for s in r["S"]:
                speeds.setdefault((len(ids), m), []).append(float(s[5]))
                accels.setdefault((len(ids), m), []).append(abs(float(s[6])))
        row["vehicles"] = nveh
        both = all(m in recs for m in modes) and all(row[f"status_{m}"] != "planner_failure" for m in modes)
        consistent = both and row["order_single"] == row["order_cyclic"]
        row["consistent"] = consistent
        devs = {}
        if consistent:
            ts, tc = anchor_times(recs["single"]), anchor_times(recs["cyclic"])
            for vid in sorted(set(ts) & set(tc)):
                devs[vid] = abs(ts[vid] - tc[vid])
            rep.deviations.extend(devs.values())
        row["deviations"] = devs
        rep.scenarios.append(row)
    rep.velocity = {k: median(v) for k, v in sorted(speeds.items())}
    rep.acceleration = {k: median(v) for k, v in sorted(accels.items())}
    return rep


def write_report(rep: EvaluationReport, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []

    def put(name, text):
        (out / name).write_text(text)
        files.append(out / name)

    lines = ["scenario|vehicles|status_single|status_cyclic|collisions_single|collisions_cyclic|"
             "order_single|order_cyclic|consistent|deviations"]
    for r in rep.scenarios:
        devs = ",".join(f"{k}:{v:.3f}" for k, v in r["deviations"].items())
        lines.append("|".join(str(x) for x in (
            r["scenario"], r["vehicles"], r.get("status_single", ""), r.get("status_cyclic", ""),
            r.get("collisions_single", ""), r.get("collisions_cyclic", ""),
            " ".join(map(str, r.get("order_single", []))), " ".join(map(str, r.get("order_cyclic", []))),
            int(r["consistent"]), devs)))
    put("scenarios.txt", "\n".join(lines) + "\n")
    put("deviation_hist.txt", "bin_lo|bin_hi|count\n" + "".join(
        f"{lo:.2f}|{hi:.2f}|{n}\n" for lo, hi, n in rep.histogram()))
    put("velocity.txt", "vehicles|mode|median_speed\n" + "".join(
        f"{k[0]}|{k[1]}|{v:.4f}\n" for k, v in rep.velocity.items()))
    put("acceleration.txt", "vehicles|mode|median_abs_accel\n" + "".join(
        f"{k[0]}|{k[1]}|{v:.4f}\n" for k, v in rep.acceleration.items()))
    n_cons = sum(r["consistent"] for r in rep.scenarios)
    summary = [
        "# Evaluation summary", "",
        f"- scenarios: {len(rep.scenarios)}",
        f"- same crossing order in both modes: {n_cons}",
        f"- collisions: single {rep.collisions.get('single', 0)}, cyclic {rep.collisions.get('cyclic', 0)}",
        f"- planner failures: single {rep.failures.get('single', 0)}, cyclic {rep.failures.get('cyclic', 0)}",
        f"- anchor deviations: {len(rep.deviations)}, within 1.5 s: {100 * rep.share_within(1.5):.1f} %",
        "", "| vehicles | mode | median speed | median abs. accel |", "|---|---|---|---|"]
    for k in rep.velocity:
        summary.append(f"| {k[0]} | {k[1]} | {rep.velocity[k]:.3f} | {rep.acceleration[k]:.3f} |")
    put("summary.md", "\n".join(summary) + "\n")
    return files


# ---------------------------------------------------------------------------
# batch

def _load_map(map_path):
    return default_map() if map_path in (None, "default") else LaneMap.load(map_path)


def _episode_job(args):
    scenario_text, mode, policy, map_path = args
    lane_map = _load_map(map_path)
    sc = Scenario.loads(scenario_text)
    res = run_scenario(sc, lane_map, mode, policy)
    return sc.name, mode, format_log(res), res.status


def log_name(scenario_name: str, mode: str) -> str:
    return f"{scenario_name}_{mode}.log"


def run_batch(count: int, seed: int, out_dir, policy: str = "heuristic", map_path=None,
              jobs: int = 1) -> tuple:
    """Generate, run both modes, write logs and report. Returns (report, statuses)."""
    lane_map = _load_map(map_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenarios = generate_scenarios(lane_map, count, seed)
    jobs_args = []
    for sc in scenarios:
        sc.save(out / f"{sc.name}.json")
        for m in MODES:
            jobs_args.append((sc.dumps(), m.value, policy, map_path))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_episode_job, jobs_args))
    else:
        results = [_episode_job(a) for a in jobs_args]
    logs, statuses = {}, []
    for name, mode, text, status in results:
        (out / log_name(name, mode)).write_text(text)
        logs.setdefault(name, {})[mode] = text
        statuses.append(status)
    rep = compute_metrics([(sc.name, logs[sc.name]) for sc in scenarios],
                          lane_map.intersection_polygon())
    write_report(rep, out)
    return rep, statuses


def load_logs(out_dir) -> list:
    """Pair single/cyclic episode logs found in a directory by scenario name."""
    paired = {}
    for p in sorted(Path(out_dir).glob("*.log")):
        stem = p.stem
        for m in MODES:
            suffix = "_" + m.value
            if stem.endswith(suffix):
                paired.setdefault(stem[:-len(suffix)], {})[m.value] = p.read_text()
    return sorted(paired.items())
