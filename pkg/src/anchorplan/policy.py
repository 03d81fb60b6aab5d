"""Behavior policies mapping an observation graph to one acceleration per vehicle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenegraph import EDGE_DIM, OCCUPANCY_HALF_LENGTH, VERTEX_DIM, ObservationGraph

ACCEL_LIMIT = 3.0


@dataclass(frozen=True)
class JointAction:
    ids: tuple
    accel: tuple

    def __post_init__(self):
        if len(self.ids) != len(self.accel):
            raise ValueError("one acceleration per vehicle required")

    def as_dict(self):
        return dict(zip(self.ids, self.accel))

    def __getitem__(self, vid):
        return self.accel[self.ids.index(vid)]


def _clamp(a):
    return min(ACCEL_LIMIT, max(-ACCEL_LIMIT, a))


# ---------------------------------------------------------------------------
# heuristic reservation policy


def required_accel(distance: float, speed: float, t_req: float) -> float:
    """Smallest-magnitude constant acceleration that reaches ``distance`` no
    earlier than ``t_req``; positive results are the largest acceleration
    that still keeps that promise. Braking to a stop short of the point
    counts as waiting there."""
    if t_req <= 0.0:
        return math.inf
    if distance <= 0.0:
        return -ACCEL_LIMIT
    a = 2.0 * (distance - speed * t_req) / (t_req * t_req)
    if speed + a * t_req >= 0.0:
        return a
    return -speed * speed / (2.0 * distance)


def travel_time(distance: float, v0: float, accel: float, vmax: float) -> float:
    """Time to cover ``distance`` from ``v0`` accelerating at ``accel`` up to ``vmax``."""
    if distance <= 0.0:
        return 0.0
    v0 = max(v0, 0.0)
    if accel <= 0.0 or v0 >= vmax:
        return distance / max(v0, 1e-3)
    t_acc = (vmax - v0) / accel
    d_acc = v0 * t_acc + 0.5 * accel * t_acc * t_acc
    if d_acc >= distance:
        return (-v0 + math.sqrt(v0 * v0 + 2.0 * accel * distance)) / accel
    return t_acc + (distance - d_acc) / vmax


@dataclass(frozen=True)
class HeuristicParams:
    headway: float = 1.5
    gain: float = 0.5
    speed_floor: float = 1.0
    commit_distance: float = 0.5
    stop_offset: float = 1.0  # waiting vehicles hold this far before their entry
    cross_accel: float = 1.0
    yield_cross_speed: float = 3.0
    follow_time_gap: float = 1.0
    idm_time_gap: float = 1.5
    idm_standstill: float = 2.0
    idm_accel: float = 3.0
    idm_decel: float = 2.0


@dataclass
class Schedule:
    order: list
    entry_time: dict  # planned arrival at the yield point
    exit_time: dict  # (vehicle, partner) -> time the vehicle clears their conflict
    required: dict  # (vehicle, partner) -> (yield distance, required time)


class HeuristicPolicy:
    """Conflict-point reservation in order of predicted arrival.

    Vehicles are ranked by constant-speed arrival at their intersection
    entry (vehicles already inside come first). Each vehicle must reach its
    yield point no earlier than every earlier conflicting vehicle's exit
    from the shared conflict zone plus the headway. Right of way binds only
    when a regular vehicle is involved: automated vehicles coordinate first
    come first served among themselves.
    """

    name = "heuristic"

    def __init__(self, params: HeuristicParams | None = None):
        self.params = params or HeuristicParams()

    def select_action(self, obs: ObservationGraph) -> JointAction:
        acc, _ = self._solve(obs)
        return JointAction(tuple(obs.ids), tuple(acc))

    def schedule(self, obs: ObservationGraph) -> Schedule:
        return self._solve(obs)[1]

    # -- internals -----------------------------------------------------------

    def _solve(self, obs):
        p = self.params
        verts = obs.vertices
        n = len(verts)
        if n == 0:
            return [], Schedule([], {}, {}, {})
        idx = obs.index()
        v = [x.speed for x in verts]
        lim = [x.speed_limit for x in verts]
        ctrl = [bool(x.controllable) for x in verts]
        d_entry = [-x.position for x in verts]
        acc = [_clamp(p.gain * (lim[i] - v[i])) for i in range(n)]

        leader = {}
        conflicts = {}
        for e in obs.edges:
            s, t = idx[e.source], idx[e.target]
            f = e.features
            if f.kind == "following":
                leader[s] = (t, f.distance)
            else:
                conflicts[(s, t)] = (f.source_dist, f.target_dist, f.priority)
                conflicts[(t, s)] = (f.target_dist, f.source_dist, -f.priority)

        for i, (j, gap) in leader.items():
            dv = v[i] - v[j]
            s_star = p.idm_standstill + max(0.0, v[i] * p.idm_time_gap
                                            + v[i] * dv / (2.0 * math.sqrt(p.idm_accel * p.idm_decel)))
            a_int = p.idm_accel * (1.0 - (v[i] / lim[i]) ** 4 - (s_star / max(gap, 0.1)) ** 2)
            acc[i] = min(acc[i], _clamp(a_int))

        key = []
        for i in range(n):
            if d_entry[i] > p.commit_distance:
                key.append(d_entry[i] / max(v[i], p.speed_floor))
            else:
                key.append(-1e3 - verts[i].position)
        for _ in range(n):
            for i, (j, _) in leader.items():
                key[i] = max(key[i], key[j] + p.follow_time_gap)
        order = sorted(range(n), key=lambda i: (key[i], verts[i].id))

        def binding(k, j):
            # k has right of way over j, a regular vehicle is involved and j has not entered yet
            return (conflicts[(k, j)][2] > 0 and not (ctrl[k] and ctrl[j])
                    and d_entry[j] > p.commit_distance)

        sched = self._schedule(order, conflicts, v, lim, d_entry, binding, ctrl)
        for _ in range(n * n):
            moved = False
            pos = {k: r for r, k in enumerate(order)}
            for k in order:
                for j in order[:pos[k]]:
                    if (k, j) not in conflicts or not binding(k, j):
                        continue
                    arrival = d_entry[k] / max(v[k], p.speed_floor) if d_entry[k] > p.commit_distance else 0.0
                    if sched.exit_time[(j, k)] + p.headway > arrival and d_entry[k] > p.commit_distance:
                        order.remove(k)
                        order.insert(pos[j], k)
                        moved = True
                        break
                if moved:
                    break
            if not moved:
                break
            sched = self._schedule(order, conflicts, v, lim, d_entry, binding, ctrl)

        for (k, j), (dist, t_req) in sched.required.items():
            acc[k] = min(acc[k], _clamp(required_accel(dist, v[k], t_req)))
        ids = [x.id for x in verts]
        sched.order = [ids[i] for i in order]
        sched.entry_time = {ids[i]: t for i, t in sched.entry_time.items()}
        sched.exit_time = {(ids[a], ids[b]): t for (a, b), t in sched.exit_time.items()}
        sched.required = {(ids[a], ids[b]): r for (a, b), r in sched.required.items()}
        return acc, sched

    def _schedule(self, order, conflicts, v, lim, d_entry, binding, ctrl):
        p = self.params
        L = OCCUPANCY_HALF_LENGTH
        entry_time, exit_time, required = {}, {}, {}
        done = []
        for k in order:
            committed = d_entry[k] <= p.commit_distance
            t_free = 0.0 if committed else d_entry[k] / max(v[k], p.speed_floor)
            t_entry = t_free
            for j in done:
                if (k, j) not in conflicts or binding(k, j):
                    continue
                if committed and ctrl[k]:
                    continue  # automated vehicles inside the box only follow their plan
                d_kj = conflicts[(k, j)][0]
                if committed:
                    y = d_kj - L
                    if y <= 0.05 or v[k] ** 2 / (2.0 * ACCEL_LIMIT) > y:
                        continue  # can no longer stop in front of it
                else:
                    y = max(d_entry[k] - p.stop_offset, 0.0)
                    if v[k] ** 2 / (2.0 * ACCEL_LIMIT) > y + 0.05:
                        continue
                t_req = exit_time[(j, k)] + p.headway
                required[(k, j)] = (y, t_req)
                if not committed:
                    t_entry = max(t_entry, t_req)
            entry_time[k] = t_entry
            yielding = t_entry > t_free + 1e-6
            for (a, b), (d_ab, _, _) in conflicts.items():
                if a != k:
                    continue
                if yielding:
                    rest = d_ab + L - d_entry[k]
                    # constant-acceleration arrival at the yield point, never faster than now
                    v_in = min(v[k], max(0.0, 2.0 * d_entry[k] / t_entry - v[k]), p.yield_cross_speed)
                    exit_time[(k, b)] = t_entry + travel_time(rest, v_in, p.cross_accel, lim[k])
                else:
                    exit_time[(k, b)] = travel_time(d_ab + L, v[k], p.cross_accel, lim[k])
            done.append(k)
        return Schedule(list(order), entry_time, exit_time, required)


# ---------------------------------------------------------------------------
# graph neural network forward pass


class WeightsError(ValueError):
    pass


NUM_LAYERS = 3


def weight_shapes(hidden: int) -> dict:
    shapes = {
        "enc_v.W": (hidden, VERTEX_DIM), "enc_v.b": (hidden,),
        "enc_e.W": (hidden, EDGE_DIM), "enc_e.b": (hidden,),
    }
    for k in range(NUM_LAYERS):
        shapes[f"mp{k}.msg.W"] = (hidden, 2 * hidden)
        shapes[f"mp{k}.msg.b"] = (hidden,)
        shapes[f"mp{k}.upd.W"] = (hidden, 2 * hidden)
        shapes[f"mp{k}.upd.b"] = (hidden,)
    shapes.update({"dec.W1": (hidden, hidden), "dec.b1": (hidden,),
                   "dec.W2": (1, hidden), "dec.b2": (1,)})
    return shapes


class PolicyWeights:
    """Named tensors of the graph network, validated against the layer dims."""

    def __init__(self, tensors: dict, hidden: int):
        self.hidden = int(hidden)
        expected = weight_shapes(self.hidden)
        missing = set(expected) - set(tensors)
        extra = set(tensors) - set(expected)
        if missing or extra:
            raise WeightsError(f"tensor names mismatch; missing={sorted(missing)} extra={sorted(extra)}")
        self.tensors = {}
        for name, shape in expected.items():
            arr = np.asarray(tensors[name], dtype=float)
            if arr.shape != shape:
                raise WeightsError(f"{name}: expected shape {shape}, got {arr.shape}")
            self.tensors[name] = arr

    def __getitem__(self, name):
        return self.tensors[name]

    @classmethod
    def zeros(cls, hidden: int = 32):
        return cls({k: np.zeros(s) for k, s in weight_shapes(hidden).items()}, hidden)

    @classmethod
    def random(cls, hidden: int = 32, seed: int = 0, scale: float = 0.5):
        rng = np.random.default_rng(seed)
        tensors = {}
        for k, s in weight_shapes(hidden).items():
            fan_in = s[-1] if len(s) == 2 else hidden
            tensors[k] = rng.normal(0.0, scale / math.sqrt(fan_in), size=s)
        return cls(tensors, hidden)

    def dumps(self) -> str:
        lines = ["# anchorplan policy weights", "format_version 1", f"hidden {self.hidden}"]
        for name, arr in self.tensors.items():
            lines.append(f"tensor {name} " + " ".join(str(d) for d in arr.shape))
            rows = arr.reshape(arr.shape[0], -1) if arr.ndim == 2 else arr.reshape(1, -1)
            for row in rows:
                lines.append(" ".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PolicyWeights":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0].split() != ["format_version", "1"]:
            raise WeightsError("missing 'format_version 1' header")
        if len(lines) < 2 or lines[1].split()[0] != "hidden":
            raise WeightsError("missing 'hidden <n>' header")
        hidden = int(lines[1].split()[1])
        tensors = {}
        i = 2
        while i < len(lines):
            head = lines[i].split()
            if head[0] != "tensor" or len(head) < 3:
                raise WeightsError(f"line {i}: expected tensor header, got {lines[i][:40]!r}")
            name, shape = head[1], tuple(int(d) for d in head[2:])
            nrows = shape[0] if len(shape) == 2 else 1
            rows = lines[i + 1:i + 1 + nrows]
            if len(rows) != nrows:
                raise WeightsError(f"{name}: truncated tensor data")
            try:
                data = np.array([[float(x) for x in r.split()] for r in rows])
                tensors[name] = data.reshape(shape)
            except ValueError as exc:
                raise WeightsError(f"{name}: {exc}") from None
            i += 1 + nrows
        return cls(tensors, hidden)

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "PolicyWeights":
        return cls.loads(Path(path).read_text())


def _relu(x):
    return np.maximum(x, 0.0)


def gnn_forward(weights: PolicyWeights, obs: ObservationGraph) -> JointAction:
    """Encode, run three rounds of sum-aggregated message passing, decode."""
    w = weights
    n = len(obs.vertices)
    if n == 0:
        return JointAction((), ())
    h = _relu(obs.vertex_matrix() @ w["enc_v.W"].T + w["enc_v.b"])
    directed = obs.directed_edges()
    if directed:
        snd = np.array([d[0] for d in directed])
        rcv = np.array([d[1] for d in directed])
        e = _relu(np.stack([d[2] for d in directed]) @ w["enc_e.W"].T + w["enc_e.b"])
    for k in range(NUM_LAYERS):
        agg = np.zeros_like(h)
        if directed:
            msg = _relu(np.concatenate([h[snd], e], axis=1) @ w[f"mp{k}.msg.W"].T + w[f"mp{k}.msg.b"])
            np.add.at(agg, rcv, msg)
        h = _relu(np.concatenate([h, agg], axis=1) @ w[f"mp{k}.upd.W"].T + w[f"mp{k}.upd.b"])
    z = _relu(h @ w["dec.W1"].T + w["dec.b1"])
    out = ACCEL_LIMIT * np.tanh(z @ w["dec.W2"].T + w["dec.b2"])[:, 0]
    return JointAction(tuple(obs.ids), tuple(float(np.clip(a, -ACCEL_LIMIT, ACCEL_LIMIT)) for a in out))


class GnnPolicy:
    name = "gnn"

    def __init__(self, weights: PolicyWeights):
        self.weights = weights

    def select_action(self, obs: ObservationGraph) -> JointAction:
        return gnn_forward(self.weights, obs)


def make_policy(spec: str):
    """``heuristic`` or ``gnn:<weights path>``."""
    if spec == "heuristic":
        return HeuristicPolicy()
    if spec.startswith("gnn:"):
        return GnnPolicy(PolicyWeights.load(spec[4:]))
    raise ValueError(f"unknown policy {spec!r}; use 'heuristic' or 'gnn:<weights>'")
