"""Graph observation: one vertex per vehicle, edges for conflict and following relations."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .envmodel import EnvironmentModel, LaneMap

POSITION_SCALE = 100.0
SPEED_SCALE = 15.0
# Half extent of the zone around a conflict point a vehicle center occupies;
# covers box overlap down to crossing angles of about 35 degrees.
OCCUPANCY_HALF_LENGTH = 6.0
PASSED_HYSTERESIS = 0.5
VEHICLE_LENGTH = 5.0
VEHICLE_WIDTH = 2.0
OFF_MAP_LATERAL = 3.0
# Past a diverge, paths stay close enough to touch for roughly this distance.
DIVERGE_ZONE = 12.0

KINDS = ("crossing", "merging", "following")
VERTEX_DIM = 4
EDGE_DIM = len(KINDS) + 4


class OffMapError(ValueError):
    def __init__(self, vehicle_id, lateral):
        super().__init__(f"vehicle {vehicle_id} is off the map (lateral offset {lateral:.2f} m)")
        self.vehicle_id = vehicle_id


@dataclass(frozen=True)
class GraphAgent:
    """Vehicle state already located on the map."""
    id: int
    lane_id: str
    lane_s: float
    speed: float
    controllable: bool
    routes: tuple  # candidate routes, all containing lane_id unless route_s is given
    route_s: tuple = ()  # arc length along each candidate route, overrides lane_s


@dataclass(frozen=True)
class VertexFeatures:
    id: int
    position: float  # to own intersection entry, negative while approaching
    speed: float
    speed_limit: float
    controllable: int

    def vector(self) -> np.ndarray:
        v = np.array([self.position / POSITION_SCALE, self.speed / SPEED_SCALE,
                      self.speed_limit / SPEED_SCALE, float(self.controllable)])
        return np.clip(v, -1.0, 1.0)


@dataclass(frozen=True)
class EdgeFeatures:
    kind: str
    distance: float
    priority: int  # of the source relative to the target
    source_dist: float  # source to conflict point (following: bumper gap)
    target_dist: float

    def vector(self, reverse: bool = False) -> np.ndarray:
        onehot = [1.0 if self.kind == k else 0.0 for k in KINDS]
        ds, dt = (self.target_dist, self.source_dist) if reverse else (self.source_dist, self.target_dist)
        p = -self.priority if reverse else self.priority
        v = np.array(onehot + [self.distance / POSITION_SCALE, float(p),
                               ds / POSITION_SCALE, dt / POSITION_SCALE])
        return np.clip(v, -1.0, 1.0)


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    features: EdgeFeatures


@dataclass(frozen=True)
class ObservationGraph:
    vertices: tuple
    edges: tuple

    @property
    def ids(self):
        return [v.id for v in self.vertices]

    def index(self):
        return {v.id: i for i, v in enumerate(self.vertices)}

    def vertex_matrix(self) -> np.ndarray:
        if not self.vertices:
            return np.zeros((0, VERTEX_DIM))
        return np.stack([v.vector() for v in self.vertices])

    def directed_edges(self):
        """(sender index, receiver index, feature vector) in both directions."""
        idx = self.index()
        out = []
        for e in self.edges:
            s, t = idx[e.source], idx[e.target]
            out.append((s, t, e.features.vector()))
            out.append((t, s, e.features.vector(reverse=True)))
        return out

    def to_dict(self):
        return {"vertices": [asdict(v) for v in self.vertices],
                "edges": [{"source": e.source, "target": e.target, **asdict(e.features)}
                          for e in self.edges]}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def diverge_gap(lane_map: LaneMap, ra, sa: float, rb, sb: float):
    """Bumper gap from a vehicle on route ``ra`` to one ahead of it on ``rb`` past a shared split.

    Positions are arc lengths along the respective routes. Returns None
    unless the routes branch off the same lane into different connectors and
    the second vehicle is within the diverge zone ahead of the first.
    """
    pa, pb = lane_map.route_path(tuple(ra)), lane_map.route_path(tuple(rb))
    for xa in ra:
        if xa not in lane_map.connectors:
            continue
        for xb in rb:
            if xb == xa or xb not in lane_map.connectors:
                continue
            if not set(lane_map.predecessors[xa]) & set(lane_map.predecessors[xb]):
                continue
            da, db = sa - pa.offsets[xa], sb - pb.offsets[xb]
            if 0.0 <= db <= DIVERGE_ZONE and db > da:
                return db - da - VEHICLE_LENGTH
    return None


def _passed(s: float, conflict_s: float) -> bool:
    return s - conflict_s > OCCUPANCY_HALF_LENGTH + PASSED_HYSTERESIS


def build_graph(agents, lane_map: LaneMap) -> ObservationGraph:
    agents = sorted(agents, key=lambda a: a.id)
    vertices = []
    pos_on = []  # per agent: list of (route, s along route)
    for a in agents:
        entries = []
        for k, r in enumerate(a.routes):
            rp = lane_map.route_path(r)
            s = a.route_s[k] if a.route_s else rp.offsets[a.lane_id] + a.lane_s
            entries.append((r, s))
        pos_on.append(entries)
        r0, s0 = entries[0]
        rp0 = lane_map.route_path(r0)
        lane = lane_map.lanes[a.lane_id]
        vertices.append(VertexFeatures(a.id, s0 - rp0.entry_s, a.speed, lane.speed_limit,
                                       int(bool(a.controllable))))

    # nearest leader per agent
    leader = {}
    for i, a in enumerate(agents):
        best = None
        for j, b in enumerate(agents):
            if i == j:
                continue
            for r, s in pos_on[i]:
                rp = lane_map.route_path(r)
                for rb, sb in pos_on[j]:
                    rpb = lane_map.route_path(rb)
                    lb = rpb.lane_at(sb)
                    if lb not in rp.offsets:
                        gap = diverge_gap(lane_map, r, s, rb, sb)
                        if gap is not None and (best is None or gap < best[0]):
                            best = (gap, j)
                        continue
                    sb_r = rp.offsets[lb] + sb - rpb.offsets[lb]
                    if sb_r > s or (sb_r == s and b.id > a.id):
                        gap = sb_r - s - VEHICLE_LENGTH
                        if best is None or gap < best[0]:
                            best = (gap, j)
        if best is not None:
            leader[i] = best

    edges = []
    access = [lane_map.access_lane_of(a.lane_id) for a in agents]
    for i in range(len(agents)):
        for j in range(i + 1, len(agents)):
            a, b = agents[i], agents[j]
            if leader.get(i, (None, None))[1] == j:
                gap = leader[i][0]
                edges.append(Edge(a.id, b.id, EdgeFeatures("following", gap, -1, gap, gap)))
                continue
            if leader.get(j, (None, None))[1] == i:
                gap = leader[j][0]
                edges.append(Edge(b.id, a.id, EdgeFeatures("following", gap, -1, gap, gap)))
                continue
            best = None
            for ra, sa in pos_on[i]:
                for rb, sb in pos_on[j]:
                    for ca, cb, kind in lane_map.route_conflicts(ra, rb):
                        if _passed(sa, ca) or _passed(sb, cb):
                            continue
                        da, db = ca - sa, cb - sb
                        if best is None or da + db < best[0] + best[1]:
                            best = (da, db, kind)
            if best is not None:
                da, db, kind = best
                prio = lane_map.relative_priority(access[i], access[j])
                edges.append(Edge(a.id, b.id, EdgeFeatures(kind, da + db, prio, da, db)))
    return ObservationGraph(tuple(vertices), tuple(edges))


def locate_vehicle(vehicle, lane_map: LaneMap):
    """(lane id, arc length) for an EM vehicle, raising OffMapError."""
    pose = vehicle.pose
    if vehicle.route is not None:
        lane = lane_map.lanes[vehicle.route[0]]
        s, lat = lane.poly.project(pose.x, pose.y)
        if abs(lat) > OFF_MAP_LATERAL:
            raise OffMapError(vehicle.id, lat)
        return vehicle.route[0], s
    hit = lane_map.locate(pose, OFF_MAP_LATERAL)
    if hit is None:
        raise OffMapError(vehicle.id, float("inf"))
    return hit[0], hit[1]


def build_observation(em: EnvironmentModel, lane_map: LaneMap,
                      routes: Optional[dict] = None) -> ObservationGraph:
    """Observation graph for an environment model.

    ``routes`` maps vehicle id to a tuple of assumed routes; vehicles missing
    from it use their declared route, or every reachable route if unknown.
    """
    routes = routes or {}
    agents = []
    for v in em.vehicles:
        lane_id, s = locate_vehicle(v, lane_map)
        if v.id in routes:
            cand = tuple(tuple(r) for r in routes[v.id])
        elif v.route is not None:
            cand = (tuple(v.route),)
        else:
            cand = tuple(lane_map.enumerate_routes(lane_id))
        agents.append(GraphAgent(v.id, lane_id, s, v.speed, v.controllable, cand))
    return build_graph(agents, lane_map)
