"""Map, vehicle, environment-model and motion-planning-objective types."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import Polyline, wrap_angle

MAP_FORMAT_VERSION = 1
ANCHOR_LATERAL_TOLERANCE = 0.5
# Vehicles whose route starts on an exit lane are treated as this far past
# their intersection entry.
PAST_ENTRY_OFFSET = 30.0
# A vehicle counts as having left the intersection area this far beyond the
# end of its last connector lane.
DESTINATION_MARGIN = 5.0

Route = tuple  # ordered lane ids; ``None`` stands for an unknown route


class MapError(ValueError):
    """Invalid map content; ``lane_id`` names the offending lane if any."""

    def __init__(self, message: str, lane_id: Optional[str] = None):
        super().__init__(message)
        self.lane_id = lane_id


class ObjectiveParseError(ValueError):
    def __init__(self, field_name: str, offset: int, message: str):
        super().__init__(f"{field_name} at byte {offset}: {message}")
        self.field = field_name
        self.offset = offset


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.heading)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))


@dataclass(frozen=True)
class VehicleRecord:
    id: int
    pose: Pose
    speed: float
    route: Optional[Route] = None
    controllable: bool = False

    def __post_init__(self):
        if self.speed < 0 or not math.isfinite(self.speed):
            raise ValueError(f"vehicle {self.id}: speed must be >= 0")
        if self.route is not None:
            if len(self.route) == 0:
                raise ValueError(f"vehicle {self.id}: empty route; use None for unknown")
            object.__setattr__(self, "route", tuple(self.route))
        if self.controllable and self.route is None:
            raise ValueError(f"vehicle {self.id}: controllable vehicles need a route")


@dataclass(frozen=True)
class EnvironmentModel:
    timestamp: float
    vehicles: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "vehicles",
                           tuple(sorted(self.vehicles, key=lambda v: v.id)))
        ids = [v.id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ValueError("vehicle ids must be pairwise distinct")

    def vehicle(self, vid: int) -> VehicleRecord:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: tuple
    speed_limit: float
    successors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "centerline",
                           tuple((float(x), float(y)) for x, y in self.centerline))
        object.__setattr__(self, "successors", tuple(self.successors))
        if len(self.centerline) < 2:
            raise MapError(f"lane {self.id}: centerline needs >= 2 points", self.id)
        if not self.speed_limit > 0:
            raise MapError(f"lane {self.id}: speed limit must be > 0", self.id)

    @cached_property
    def poly(self) -> Polyline:
        try:
            return Polyline(self.centerline)
        except ValueError as exc:
            raise MapError(f"lane {self.id}: {exc}", self.id) from None

    @property
    def length(self) -> float:
        return self.poly.length


@dataclass(frozen=True)
class ConflictPoint:
    lanes: tuple
    positions: tuple
    kind: str  # "crossing" | "merging"


@dataclass(frozen=True)
class AnchorPoint:
    position: tuple
    dt: float
    speed: float

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if not self.dt > 0:
            raise ValueError("anchor relative time must be > 0")
        if self.speed < 0:
            raise ValueError("anchor speed must be >= 0")


@dataclass(frozen=True)
class MotionPlanningObjective:
    vehicle_id: int
    timestamp: float
    path: tuple
    v_max: tuple
    anchors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "path", tuple((float(x), float(y)) for x, y in self.path))
        object.__setattr__(self, "v_max", tuple(float(v) for v in self.v_max))
        object.__setattr__(self, "anchors", tuple(self.anchors))
        if len(self.path) < 2:
            raise ValueError("path needs >= 2 points")
        if len(self.v_max) != len(self.path) - 1:
            raise ValueError("v_max needs one bound per path segment")
        if any(not v > 0 for v in self.v_max):
            raise ValueError("speed bounds must be > 0")
        poly = Polyline(self.path)
        for ap in self.anchors:
            _, lat = poly.project(*ap.position)
            if abs(lat) > ANCHOR_LATERAL_TOLERANCE:
                raise ValueError(f"anchor {ap.position} is {abs(lat):.3f} m off the path")

    @cached_property
    def poly(self) -> Polyline:
        return Polyline(self.path)


def project_to_lane(pose: Pose, lane: Lane):
    """(arc length, signed lateral offset) of the closest centerline point."""
    return lane.poly.project(pose.x, pose.y)


# ---------------------------------------------------------------------------
# routes and the lane map


class RoutePath:
    """Concatenated centerline of a route plus per-lane bookkeeping."""

    def __init__(self, lane_map: "LaneMap", route: Route):
        pts = []
        self.route = tuple(route)
        self.offsets = {}
        seg_lanes = []
        s = 0.0
        for lid in self.route:
            lane = lane_map.lanes[lid]
            self.offsets[lid] = s
            cl = lane.poly.points
            if pts and np.allclose(pts[-1], cl[0], atol=1e-6):
                cl = cl[1:]
            pts.extend(cl)
            seg_lanes.extend([lid] * len(cl))
            s += lane.length
        self.poly = Polyline(pts)
        self.length = self.poly.length
        # lane owning each segment (segment i starts at point i)
        self.seg_lane = seg_lanes[1:]
        self.seg_limit = np.array([lane_map.lanes[l].speed_limit for l in self.seg_lane])

        self.entry_s = None
        connectors = [l for l in self.route if l in lane_map.connectors]
        access = [l for l in self.route if l in lane_map.entries]
        if access:
            self.entry_s = self.offsets[access[0]] + lane_map.entries[access[0]]
        elif connectors:
            self.entry_s = self.offsets[connectors[0]]
        else:
            self.entry_s = -PAST_ENTRY_OFFSET
        if connectors:
            last = connectors[-1]
            self.exit_s = self.offsets[last] + lane_map.lanes[last].length
        elif access:
            self.exit_s = self.length
        else:
            self.exit_s = self.entry_s
        if connectors or access:
            self.dest_s = min(self.exit_s + DESTINATION_MARGIN, self.length)
        else:
            self.dest_s = -1.0  # already beyond the intersection area

    def lane_at(self, s: float) -> str:
        i = int(self.poly._seg_index(s))
        return self.seg_lane[i]

    def limit_at(self, s):
        return self.seg_limit[self.poly._seg_index(np.asarray(s, dtype=float))]


def _segment_intersections(pa: np.ndarray, pb: np.ndarray):
    """All proper intersections of two polylines: list of (s_a, s_b, point)."""
    a0 = pa[:-1][:, None, :]
    da = (pa[1:] - pa[:-1])[:, None, :]
    b0 = pb[:-1][None, :, :]
    db = (pb[1:] - pb[:-1])[None, :, :]
    denom = da[..., 0] * db[..., 1] - da[..., 1] * db[..., 0]
    w = b0 - a0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[..., 0] * db[..., 1] - w[..., 1] * db[..., 0]) / denom
        u = (w[..., 0] * da[..., 1] - w[..., 1] * da[..., 0]) / denom
    ok = (np.abs(denom) > 1e-12) & (t >= 0) & (t < 1) & (u >= 0) & (u < 1)
    out = []
    la = np.linalg.norm(pa[1:] - pa[:-1], axis=1)
    lb = np.linalg.norm(pb[1:] - pb[:-1], axis=1)
    sa0 = np.concatenate([[0.0], np.cumsum(la)])
    sb0 = np.concatenate([[0.0], np.cumsum(lb)])
    for i, j in zip(*np.nonzero(ok)):
        pt = pa[i] + t[i, j] * (pa[i + 1] - pa[i])
        out.append((float(sa0[i] + t[i, j] * la[i]), float(sb0[j] + u[i, j] * lb[j]), pt))
    return out


def derive_conflict_points(lanes: dict) -> list:
    """Crossings by pairwise polyline intersection, merges where lanes end together."""
    result = []
    ids = sorted(lanes)
    for a, b in itertools.combinations(ids, 2):
        la, lb = lanes[a], lanes[b]
        if b in la.successors or a in lb.successors:
            continue
        pa, pb = la.poly.points, lb.poly.points
        same_end = np.allclose(pa[-1], pb[-1], atol=1e-6)
        same_start = np.allclose(pa[0], pb[0], atol=1e-6)
        if same_end and not same_start:
            result.append(ConflictPoint((a, b), (la.length, lb.length), "merging"))
            continue
        shared = [p for p in (pa[0], pa[-1]) if np.allclose(p, pb[0], atol=1e-6)
                  or np.allclose(p, pb[-1], atol=1e-6)]
        for sa, sb, pt in _segment_intersections(pa, pb):
            if any(np.hypot(*(pt - q)) < 1e-3 for q in shared):
                continue
            result.append(ConflictPoint((a, b), (sa, sb), "crossing"))
    return result


class LaneMap:
    def __init__(self, lanes: Sequence[Lane], entries: dict,
                 conflict_points: Optional[Sequence[ConflictPoint]] = None,
                 priority_lanes: Optional[Sequence[str]] = None, name: str = "map"):
        self.name = name
        self.lanes = {l.id: l for l in lanes}
        if len(self.lanes) != len(lanes):
            raise MapError("duplicate lane ids")
        self.entries = {k: float(v) for k, v in entries.items()}
        self.priority_lanes = None if priority_lanes is None else tuple(priority_lanes)
        self.validate()
        self.conflicts_from_file = conflict_points is not None
        if conflict_points is None:
            conflict_points = derive_conflict_points(self.lanes)
        self.conflict_points = list(conflict_points)
        self.connectors = set()
        for a in self.entries:
            self.connectors.update(self.lanes[a].successors)
        self.predecessors = {lid: [] for lid in self.lanes}
        for lane in self.lanes.values():
            for s in lane.successors:
                self.predecessors[s].append(lane.id)
        self._route_cache = {}
        self._conflict_cache = {}
        self._by_lane = {}
        for cp in self.conflict_points:
            self._by_lane.setdefault(cp.lanes[0], []).append((cp.lanes[1], cp.positions[0], cp.positions[1], cp.kind))
            self._by_lane.setdefault(cp.lanes[1], []).append((cp.lanes[0], cp.positions[1], cp.positions[0], cp.kind))

    def validate(self):
        for lane in self.lanes.values():
            lane.poly  # raises on degenerate centerlines
            for s in lane.successors:
                if s not in self.lanes:
                    raise MapError(f"lane {lane.id}: successor {s!r} does not exist", lane.id)
        for lid, s in self.entries.items():
            if lid not in self.lanes:
                raise MapError(f"entry refers to unknown lane {lid!r}", lid)
            if not 0.0 <= s <= self.lanes[lid].length + 1e-9:
                raise MapError(f"lane {lid}: entry position outside lane", lid)
        for lid in self.priority_lanes or ():
            if lid not in self.entries:
                raise MapError(f"priority lane {lid!r} is not an access lane", lid)

    # -- topology -----------------------------------------------------------

    def validate_route(self, route: Route):
        if not route:
            raise MapError("empty route")
        for a, b in zip(route, route[1:]):
            if b not in self.lanes[a].successors:
                raise MapError(f"route not connected: {a} -> {b}", a)

    def enumerate_routes(self, lane_id: str) -> list:
        """All routes from ``lane_id`` to a lane without successors."""
        out = []

        def walk(path):
            succ = self.lanes[path[-1]].successors
            if not succ:
                out.append(tuple(path))
                return
            for s in succ:
                if s not in path:
                    walk(path + [s])

        walk([lane_id])
        return out

    def access_lane_of(self, lane_id: str) -> Optional[str]:
        if lane_id in self.entries:
            return lane_id
        if lane_id in self.connectors:
            for p in self.predecessors[lane_id]:
                if p in self.entries:
                    return p
        return None

    def route_path(self, route: Route) -> RoutePath:
        route = tuple(route)
        rp = self._route_cache.get(route)
        if rp is None:
            rp = RoutePath(self, route)
            self._route_cache[route] = rp
        return rp

    def route_conflicts(self, ra: Route, rb: Route) -> list:
        """Conflict points shared by two routes as (s on ra, s on rb, kind)."""
        key = (tuple(ra), tuple(rb))
        hit = self._conflict_cache.get(key)
        if hit is not None:
            return hit
        pa, pb = self.route_path(ra), self.route_path(rb)
        lanes_b = set(rb)
        out = []
        for la in ra:
            for other, sa, sb, kind in self._by_lane.get(la, ()):
                if other in lanes_b:
                    out.append((pa.offsets[la] + sa, pb.offsets[other] + sb, kind))
        out.sort()
        self._conflict_cache[key] = out
        return out

    def relative_priority(self, access_a: Optional[str], access_b: Optional[str]) -> int:
        """+1 if a vehicle from ``access_a`` has right of way over one from ``access_b``."""
        if access_a is None or access_b is None or access_a == access_b:
            return 0
        if self.priority_lanes is not None:
            pa = access_a in self.priority_lanes
            pb = access_b in self.priority_lanes
            return int(pa) - int(pb)
        ha = float(self.lanes[access_a].poly.heading_at(self.entries[access_a]))
        hb = float(self.lanes[access_b].poly.heading_at(self.entries[access_b]))
        d = wrap_angle(ha - hb)
        if abs(d - math.pi / 2) < math.pi / 4:
            return 1  # a approaches from b's right
        if abs(d + math.pi / 2) < math.pi / 4:
            return -1
        return 0

    def locate(self, pose: Pose, max_lateral: float = 3.0):
        """Best matching (lane id, arc length, lateral offset) for a pose, or None."""
        best = None
        for lid in sorted(self.lanes):
            lane = self.lanes[lid]
            s, lat = lane.poly.project(pose.x, pose.y)
            if abs(lat) > max_lateral:
                continue
            if abs(wrap_angle(float(lane.poly.heading_at(s)) - pose.heading)) > math.pi / 2:
                continue
            at_end = s >= lane.length - 1e-6
            key = (round(abs(lat), 6), at_end, 0 if lid in self.entries else 1)
            if best is None or key < best[0]:
                best = (key, lid, s, lat)
        if best is None:
            return None
        return best[1], best[2], best[3]

    def intersection_polygon(self, inflate: float = 5.0):
        from shapely.geometry import MultiPoint
        pts = []
        for cp in self.conflict_points:
            pts.append(tuple(self.lanes[cp.lanes[0]].poly.point_at(cp.positions[0])))
        if not pts:
            for lid in self.entries:
                pts.append(tuple(self.lanes[lid].poly.point_at(self.entries[lid])))
        return MultiPoint(pts).convex_hull.buffer(inflate)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": MAP_FORMAT_VERSION,
            "name": self.name,
            "lanes": [
                {"id": l.id, "centerline": [list(p) for p in l.centerline],
                 "speed_limit": l.speed_limit, "successors": list(l.successors)}
                for l in self.lanes.values()
            ],
            "entries": dict(self.entries),
            "priority_lanes": None if self.priority_lanes is None else list(self.priority_lanes),
            "conflict_points": [
                {"lanes": list(c.lanes), "positions": list(c.positions), "kind": c.kind}
                for c in self.conflict_points
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LaneMap":
        version = doc.get("format_version")
        if version != MAP_FORMAT_VERSION:
            raise MapError(f"unsupported map format_version {version!r}")
        try:
            lanes = [Lane(d["id"], tuple(map(tuple, d["centerline"])), float(d["speed_limit"]),
                          tuple(d.get("successors", ()))) for d in doc["lanes"]]
        except KeyError as exc:
            raise MapError(f"lane entry missing field {exc}") from None
        cps = doc.get("conflict_points")
        if cps is not None:
            cps = [ConflictPoint(tuple(c["lanes"]), tuple(float(p) for p in c["positions"]), c["kind"])
                   for c in cps]
        return cls(lanes, doc.get("entries", {}), cps, doc.get("priority_lanes"),
                   doc.get("name", "map"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "LaneMap":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "LaneMap":
        return cls.loads(Path(path).read_text())

    def __eq__(self, other):
        return isinstance(other, LaneMap) and self.to_dict() == other.to_dict()

    __hash__ = object.__hash__


# ---------------------------------------------------------------------------
# the shipped four-arm intersection

ARMS = {"S": (0.0, -1.0), "E": (1.0, 0.0), "N": (0.0, 1.0), "W": (-1.0, 0.0)}


def four_arm_map(box: float = 10.0, lane_offset: float = 1.75, access_length: float = 100.0,
                 exit_length: float = 60.0, speed_limit: float = 10.0,
                 priority_road: Optional[tuple] = ("S", "N")) -> LaneMap:
    """Single-lane-per-approach cross intersection, right-hand traffic.

    Access lanes are named ``<arm>_in``, exits ``<arm>_out`` and connectors
    ``<from>_<to>``. With ``priority_road`` the listed arms have right of way,
    otherwise right-before-left applies.
    """
    lanes = []
    entries = {}
    order = list(ARMS)
    for k in order:
        ux, uy = ARMS[k]
        dx, dy = -ux, -uy
        rx, ry = dy, -dx
        start = (ux * (box + access_length) + rx * lane_offset, uy * (box + access_length) + ry * lane_offset)
        end = (ux * box + rx * lane_offset, uy * box + ry * lane_offset)
        n = int(access_length // 5)
        pts = [(start[0] + (end[0] - start[0]) * i / n, start[1] + (end[1] - start[1]) * i / n)
               for i in range(n + 1)]
        succ = []
        for m in order:
            if m == k:
                continue
            succ.append(f"{k}_{m}")
        lanes.append(Lane(f"{k}_in", tuple(pts), speed_limit, tuple(succ)))
        entries[f"{k}_in"] = access_length
        # exit lane on arm k
        erx, ery = uy, -ux
        e0 = (ux * box + erx * lane_offset, uy * box + ery * lane_offset)
        e1 = (ux * (box + exit_length) + erx * lane_offset, uy * (box + exit_length) + ery * lane_offset)
        n = int(exit_length // 5)
        pts = [(e0[0] + (e1[0] - e0[0]) * i / n, e0[1] + (e1[1] - e0[1]) * i / n) for i in range(n + 1)]
        lanes.append(Lane(f"{k}_out", tuple(pts), speed_limit))
    for k in order:
        ux, uy = ARMS[k]
        dx, dy = -ux, -uy
        rx, ry = dy, -dx
        p = np.array([ux * box + rx * lane_offset, uy * box + ry * lane_offset])
        for m in order:
            if m == k:
                continue
            mx, my = ARMS[m]
            q = np.array([mx * box + my * lane_offset, my * box - mx * lane_offset])
            cross = dx * mx + dy * my
            turn = dx * my - dy * mx  # >0 left, <0 right, 0 straight
            if abs(turn) < 1e-9 and cross > 0:
                n = int(round(2 * box))
                pts = [tuple(p + (q - p) * i / n) for i in range(n + 1)]
            else:
                left = turn > 0
                radius = box + lane_offset if left else box - lane_offset
                r = np.array([rx, ry])
                center = p - r * radius if left else p + r * radius
                v0 = p - center
                n = max(8, int(math.ceil(radius * math.pi / 2 / 0.5)))
                pts = []
                for i in range(n + 1):
                    th = (math.pi / 2) * i / n * (1 if left else -1)
                    c, s = math.cos(th), math.sin(th)
                    pts.append((center[0] + c * v0[0] - s * v0[1], center[1] + s * v0[0] + c * v0[1]))
                pts[-1] = tuple(q)
            lanes.append(Lane(f"{k}_{m}", tuple(pts), speed_limit, (f"{m}_out",)))
    prio = None if priority_road is None else [f"{a}_in" for a in priority_road]
    return LaneMap(lanes, entries, None, prio, name="four_arm")


_DEFAULT = None


def default_map() -> LaneMap:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = four_arm_map()
    return _DEFAULT


# ---------------------------------------------------------------------------
# objective wire format
#
#   <body length in bytes>\n
#   MPO 1\n
#   vehicle_id <int>\n
#   timestamp <float>\n
#   path <n> x0 y0 ... x(n-1) y(n-1)\n
#   v_max <n-1> v0 ...\n
#   anchors <k> (x y dt v)*k\n
#
# Floats are written with repr(), which round-trips bit-exactly.

_FIELDS = ("vehicle_id", "timestamp", "path", "v_max", "anchors")


def serialize_objective(obj: MotionPlanningObjective) -> bytes:
    f = repr
    lines = ["MPO 1", f"vehicle_id {int(obj.vehicle_id)}", f"timestamp {f(float(obj.timestamp))}"]
    flat = " ".join(f"{f(x)} {f(y)}" for x, y in obj.path)
    lines.append(f"path {len(obj.path)} {flat}")
    lines.append(f"v_max {len(obj.v_max)} " + " ".join(f(v) for v in obj.v_max))
    anc = " ".join(f"{f(a.position[0])} {f(a.position[1])} {f(a.dt)} {f(a.speed)}" for a in obj.anchors)
    lines.append(f"anchors {len(obj.anchors)}" + (" " + anc if anc else ""))
    body = ("\n".join(lines) + "\n").encode("ascii")
    return f"{len(body)}\n".encode("ascii") + body


def deserialize_objective(data: bytes) -> MotionPlanningObjective:
    nl = data.find(b"\n")
    if nl < 0:
        raise ObjectiveParseError("length", 0, "missing length prefix")
    try:
        n = int(data[:nl])
    except ValueError:
        raise ObjectiveParseError("length", 0, "length prefix is not an integer") from None
    body_start = nl + 1
    if len(data) - body_start != n:
        raise ObjectiveParseError("length", 0, f"declared {n} bytes, got {len(data) - body_start}")
    try:
        text = data[body_start:].decode("ascii")
    except UnicodeDecodeError as exc:
        raise ObjectiveParseError("body", body_start + exc.start, "non-ascii byte") from None
    if not text.endswith("\n"):
        raise ObjectiveParseError("body", len(data), "record must end with a newline")
    lines = text[:-1].split("\n")
    offsets = []
    pos = body_start
    for ln in lines:
        offsets.append(pos)
        pos += len(ln) + 1
    if lines[0] != "MPO 1":
        raise ObjectiveParseError("header", offsets[0], f"expected 'MPO 1', got {lines[0][:20]!r}")
    if len(lines) != 1 + len(_FIELDS):
        raise ObjectiveParseError("body", offsets[-1], f"expected {1 + len(_FIELDS)} lines, got {len(lines)}")
    values = {}
    for name, ln, off in zip(_FIELDS, lines[1:], offsets[1:]):
        parts = ln.split(" ")
        if parts[0] != name:
            raise ObjectiveParseError(name, off, f"expected field {name!r}, got {parts[0]!r}")
        values[name] = (parts[1:], off + len(name) + 1)

    def num(field_name, tokens, off, conv=float):
        out = []
        for tok in tokens:
            try:
                out.append(conv(tok))
            except ValueError:
                raise ObjectiveParseError(field_name, off, f"bad number {tok!r}") from None
            off += len(tok) + 1
        return out

    toks, off = values["vehicle_id"]
    if len(toks) != 1:
        raise ObjectiveParseError("vehicle_id", off, "expected one integer")
    vid = num("vehicle_id", toks, off, int)[0]
    toks, off = values["timestamp"]
    if len(toks) != 1:
        raise ObjectiveParseError("timestamp", off, "expected one float")
    ts = num("timestamp", toks, off)[0]

    def counted(field_name, width):
        toks, off = values[field_name]
        if not toks:
            raise ObjectiveParseError(field_name, off, "missing count")
        cnt = num(field_name, toks[:1], off, int)[0]
        if len(toks) - 1 != cnt * width:
            raise ObjectiveParseError(field_name, off, f"count {cnt} does not match {len(toks) - 1} values")
        return num(field_name, toks[1:], off + len(toks[0]) + 1), off

    path_vals, path_off = counted("path", 2)
    vmax_vals, vmax_off = counted("v_max", 1)
    anc_vals, anc_off = counted("anchors", 4)
    path = tuple(zip(path_vals[0::2], path_vals[1::2]))
    try:
        anchors = tuple(AnchorPoint((anc_vals[i], anc_vals[i + 1]), anc_vals[i + 2], anc_vals[i + 3])
                        for i in range(0, len(anc_vals), 4))
    except ValueError as exc:
        raise ObjectiveParseError("anchors", anc_off, str(exc)) from None
    try:
        return MotionPlanningObjective(vid, ts, path, tuple(vmax_vals), anchors)
    except ValueError as exc:
        msg = str(exc)
        if "anchor" in msg:
            raise ObjectiveParseError("anchors", anc_off, msg) from None
        if "v_max" in msg or "speed bounds" in msg:
            raise ObjectiveParseError("v_max", vmax_off, msg) from None
        raise ObjectiveParseError("path", path_off, msg) from None
