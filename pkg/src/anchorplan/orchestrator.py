"""Planning triggers, single-shot vs cyclic replanning, and episode logs."""
from __future__ import annotations

import datetime as _dt
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .envmodel import LaneMap, VehicleRecord, Pose
from .execsim import World
from .rollout import PlanResult, RolloutConfig, format_trace, plan, worst_case_routes

log = logging.getLogger(__name__)


class RunMode(str, enum.Enum):
    SINGLE = "single"
    CYCLIC = "cyclic"


TRIGGER_REASONS = ("initial", "new-vehicle", "cyclic", "conflict-ruled-out")


@dataclass(frozen=True)
class PlanningTrigger:
    t: float
    reason: str
    payload: Optional[int] = None  # vehicle that appeared or lost a candidate route

    def __post_init__(self):
        if self.reason not in TRIGGER_REASONS:
            raise ValueError(f"unknown trigger reason {self.reason!r}")


@dataclass(frozen=True)
class OrchestratorConfig:
    mode: RunMode = RunMode.SINGLE
    cyclic_period: float = 2.0
    latency: float = 0.2
    timeout: float = 60.0
    ruleout_period: float = 0.2
    rollout: RolloutConfig = RolloutConfig()
    dump_rollout: Optional[str] = None  # directory for per-run rollout traces

    def __post_init__(self):
        object.__setattr__(self, "mode", RunMode(self.mode))
        if self.cyclic_period <= 0 or self.latency < 0 or self.timeout <= 0:
            raise ValueError("periods and timeout must be positive")


@dataclass
class PlanningRun:
    trigger: PlanningTrigger
    issue_t: float
    result: PlanResult
    applied: bool = False


@dataclass(frozen=True)
class RejectedObjective:
    t: float
    vehicle_id: int
    reason: str


@dataclass
class EpisodeResult:
    status: str  # done | timeout | planner_failure
    world: World
    runs: list
    triggers: list
    skipped: list
    error: Optional[str] = None
    rejected: list = field(default_factory=list)

    @property
    def collisions(self):
        return self.world.collisions

    @property
    def duration(self):
        return self.world.t


def apply_objectives(objectives, world: World):
    """Hand objectives to the vehicles' planners; returns (applied ids, rejections)."""
    applied, rejected = [], []
    for obj in objectives:
        v = world.vehicles.get(obj.vehicle_id)
        if v is None:
            why = "unknown vehicle"
        elif not v.controllable:
            why = "vehicle is not controllable"
        elif v.finished:
            why = "vehicle has left the map"
        else:
            world.apply_objective(obj)
            applied.append(obj.vehicle_id)
            continue
        rejected.append(RejectedObjective(world.t, obj.vehicle_id, why))
        # finishing during the planning latency is routine
        level = logging.DEBUG if v is not None and v.finished else logging.WARNING
        log.log(level, "objective for vehicle %s rejected: %s", obj.vehicle_id, why)
    return applied, rejected


class Orchestrator:
    """Decides when to plan and hands objectives to the execution world."""

    def __init__(self, world: World, policy, config: OrchestratorConfig | None = None):
        self.world = world
        self.policy = policy
        self.config = config or OrchestratorConfig()
        self.runs: list = []
        self.triggers: list = []
        self.skipped: list = []
        self.rejected: list = []
        self._queue: list = []
        self._inflight: Optional[PlanningRun] = None
        self._seen = set()
        self._candidates: dict = {}
        self._next_cyclic = self.config.cyclic_period
        self._next_ruleout = 0.0

    @property
    def lane_map(self) -> LaneMap:
        return self.world.lane_map

    def _watch_new_vehicles(self, initial=False):
        fresh = [v for v in self.world.active() if v.id not in self._seen]
        for v in fresh:
            self._seen.add(v.id)
            if not (v.controllable or v.route_known):
                lid, _ = v.lane()
                self._candidates[v.id] = self.lane_map.enumerate_routes(lid)
        if fresh and not initial:
            self._fire("new-vehicle", fresh[0].id)

    def _watch_ruleout(self):
        dropped_any = None
        for v in self.world.active():
            cand = self._candidates.get(v.id)
            if cand is None or len(cand) <= 1:
                continue
            rec = VehicleRecord(v.id, Pose(v.x, v.y, v.heading), v.v, None, False)
            kept, dropped = worst_case_routes(rec, self.lane_map, cand, self.config.rollout.ruleout_lateral)
            if kept and dropped:
                self._candidates[v.id] = kept
                dropped_any = v.id if dropped_any is None else dropped_any
        if dropped_any is not None and self.config.mode is RunMode.CYCLIC:
            self._fire("conflict-ruled-out", dropped_any)

    def _fire(self, reason, payload=None):
        trig = PlanningTrigger(self.world.t, reason, payload)
        self.triggers.append(trig)
        if self._inflight is not None:
            if reason == "cyclic":
                self.skipped.append(trig)
                return
        self._queue.append(trig)

    def _start(self, trig: PlanningTrigger):
        world = self.world
        em = world.environment_model()
        issue_t = world.t + self.config.latency
        assumed = {vid: c for vid, c in self._candidates.items()
                   if any(v.id == vid for v in world.active())}
        result = plan(em, self.lane_map, self.policy, self.config.rollout, issue_timestamp=issue_t,
                      assumed_routes=assumed)
        run = PlanningRun(trig, issue_t, result)
        self.runs.append(run)
        if self.config.dump_rollout:
            out = Path(self.config.dump_rollout)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"rollout_{len(self.runs):03d}_{trig.t:06.2f}.txt").write_text(format_trace(result))
        self._inflight = run
        log.debug("planning run at t=%.2f (%s): %d objectives, %s", trig.t, trig.reason,
                  len(result.objectives), result.status)

    def _deliver(self):
        run = self._inflight
        if run is not None and self.world.t >= run.issue_t - 1e-9:
            _, rejected = apply_objectives(run.result.objectives, self.world)
            self.rejected.extend(rejected)
            run.applied = True
            self._inflight = None

    def tick(self):
        """Triggers and deliveries for the current world time."""
        cfg = self.config
        t = self.world.t
        if not self.triggers:
            self._watch_new_vehicles(initial=True)
            self._fire("initial")
        else:
            self._watch_new_vehicles()
        if t >= self._next_ruleout - 1e-9:
            self._watch_ruleout()
            self._next_ruleout = t + cfg.ruleout_period
        if cfg.mode is RunMode.CYCLIC and t >= self._next_cyclic - 1e-9:
            self._fire("cyclic")
            self._next_cyclic += cfg.cyclic_period
        self._deliver()
        if self._inflight is None and self._queue:
            trig = self._queue[0]
            self._queue.clear()  # one run covers all pending triggers
            self._start(trig)
            self._deliver()

    def run(self) -> EpisodeResult:
        world = self.world
        status = "timeout"
        error = None
        try:
            while world.t < self.config.timeout - 1e-9:
                self.tick()
                if world.all_done():
                    status = "done"
                    break
                world.step()
            else:
                if world.all_done():
                    status = "done"
        except (ValueError, RuntimeError, AssertionError) as exc:
            status, error = "planner_failure", str(exc)
            log.error("planner failure at t=%.2f: %s", world.t, exc)
        return EpisodeResult(status, world, self.runs, self.triggers, self.skipped, error, self.rejected)


def run_episode(world: World, policy, config: OrchestratorConfig | None = None) -> EpisodeResult:
    return Orchestrator(world, policy, config).run()


# ---------------------------------------------------------------------------
# episode log: '|'-separated records, one per line
#   T|t|reason|payload|skipped             planning trigger
#   P|t|reason|issue_t|status|objectives   planning run
#   O|issue_t|id|path_points|anchors       issued objective
#   A|issue_t|id|x|y|dt|speed              anchor point of an issued objective
#   R|t|id|reason                          rejected objective
#   S|t|id|x|y|heading|speed|accel|s      executed state (every ``stride`` steps)
#   C|t|a|b|penetration

LOG_VERSION = 1


def format_log(result: EpisodeResult, stride: int = 5, created: Optional[str] = None) -> str:
    created = created or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    lines = [f"# anchorplan episode log v{LOG_VERSION}", f"# created {created}",
             f"# status {result.status} duration {result.duration:.2f}"]
    skipped = {id(trig) for trig in result.skipped}
    for trig in result.triggers:
        payload = "" if trig.payload is None else trig.payload
        lines.append(f"T|{trig.t:.2f}|{trig.reason}|{payload}|{int(id(trig) in skipped)}")
    for run in result.runs:
        r = run.result
        lines.append(f"P|{run.trigger.t:.2f}|{run.trigger.reason}|{run.issue_t:.2f}|{r.status}|"
                     f"{len(r.objectives)}")
        for obj in r.objectives:
            lines.append(f"O|{run.issue_t:.2f}|{obj.vehicle_id}|{len(obj.path)}|{len(obj.anchors)}")
            for ap in obj.anchors:
                lines.append(f"A|{run.issue_t:.2f}|{obj.vehicle_id}|{ap.position[0]:.3f}|"
                             f"{ap.position[1]:.3f}|{ap.dt:.3f}|{ap.speed:.3f}")
    for rej in result.rejected:
        lines.append(f"R|{rej.t:.2f}|{rej.vehicle_id}|{rej.reason}")
    for vid, v in result.world.vehicles.items():
        for k, (t, x, y, h, sp, a, s, _lat) in enumerate(v.history):
            if k % stride == 0 or k == len(v.history) - 1:
                lines.append(f"S|{t:.2f}|{vid}|{x:.3f}|{y:.3f}|{h:.4f}|{sp:.3f}|{a:.3f}|{s:.3f}")
    for c in result.collisions:
        lines.append(f"C|{c.t:.2f}|{c.a}|{c.b}|{c.penetration:.4f}")
    return "\n".join(lines) + "\n"


def parse_log(text: str) -> dict:
    """Records of an episode log grouped by type, fields kept as strings."""
    out = {k: [] for k in "TPOARSC"}
    for n, line in enumerate(text.splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if parts[0] not in out:
            raise ValueError(f"line {n}: unknown record type {parts[0]!r}")
        out[parts[0]].append(parts[1:])
    return out
