"""Sampling-based longitudinal trajectory planner along a fixed path."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envmodel import MotionPlanningObjective


@dataclass(frozen=True)
class CostWeights:
    """Arbitrary but fixed multipliers of the candidate cost terms."""
    anchor_time: float = 200.0
    anchor_speed: float = 50.0
    accel: float = 1.0
    jerk: float = 1.0
    limit_deviation: float = 20.0

    def __post_init__(self):
        vals = (self.anchor_time, self.anchor_speed, self.accel, self.jerk, self.limit_deviation)
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ValueError("cost weights must be >= 0 with at least one > 0")


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = 0.1
    horizon: float = 10.0
    accel_limit: float = 3.5
    lateral_limit: float = 3.0
    # envelope margins so the post-anchor extension can always stay legal
    envelope_lateral: float = 2.9
    envelope_decel: float = 3.0
    extension_accel: float = 1.5
    time_offsets: tuple = (0.0, -0.2, 0.2, -0.4, 0.4)
    speed_offsets: tuple = (0.0, -0.5, 0.5, -1.0, 1.0)
    free_times: tuple = (2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
    speed_step: float = 1.0
    anchor_reached: float = 0.5
    anchor_expiry: float = 0.4
    commit_time: float = 1.0
    commit_speed: float = 1.0
    sensing_range: float = 60.0
    follow_time_gap: float = 1.5
    follow_standstill: float = 2.0
    follow_trigger_time_gap: float = 1.0
    follow_gap_gain: float = 0.25
    follow_speed_gain: float = 0.7


@dataclass
class Trajectory:
    t: np.ndarray  # relative to ``start_time``
    s: np.ndarray  # arc length along the objective path
    v: np.ndarray
    a: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    start_time: float = 0.0
    mode: str = "free"  # anchored | free | follow | fallback
    infeasible: bool = False
    follow_engaged: bool = False
    cost: float = 0.0
    vehicle_id: Optional[int] = None

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    def sample(self, t_abs: float):
        """Interpolated (s, v, a) at absolute time; holds the last state after the horizon."""
        tr = t_abs - self.start_time
        if tr >= self.t[-1]:
            dt = tr - self.t[-1]
            return float(self.s[-1] + self.v[-1] * dt), float(self.v[-1]), 0.0
        return (float(np.interp(tr, self.t, self.s)), float(np.interp(tr, self.t, self.v)),
                float(np.interp(tr, self.t, self.a)))

    def violations(self, accel_limit=3.5, lateral_limit=3.0, tol=1e-6):
        """Names of hard limits violated at any sample."""
        out = []
        if np.any(np.diff(self.t) <= 0):
            out.append("time")
        if np.any(np.abs(self.a) > accel_limit + tol):
            out.append("accel")
        if np.any(self.v < -tol):
            out.append("speed")
        if np.any(self.v ** 2 * np.abs(self.curvature) > lateral_limit + 1e-3):
            out.append("lateral")
        return out

    def dumps(self) -> str:
        rows = ["t,s,x,y,heading,speed,accel,curvature"]
        for i in range(len(self.t)):
            rows.append(f"{self.start_time + self.t[i]:.2f},{self.s[i]:.4f},{self.x[i]:.4f},{self.y[i]:.4f},"
                        f"{self.heading[i]:.5f},{self.v[i]:.4f},{self.a[i]:.4f},{self.curvature[i]:.5f}")
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class FollowCommand:
    accel: float
    engaged: bool
    infeasible: bool = False


def follow_mode(gap: float, lead_speed: float, ego_speed: float,
                config: PlannerConfig = PlannerConfig()) -> FollowCommand:
    """Time-gap regulation behind a lead vehicle (bumper-to-bumper ``gap``)."""
    if gap < 0:
        raise ValueError(f"negative gap {gap:.3f} m to lead vehicle")
    if gap > config.sensing_range:
        return FollowCommand(0.0, False)
    desired = config.follow_standstill + config.follow_time_gap * ego_speed
    a = (config.follow_gap_gain * (gap - desired)
         + config.follow_speed_gain * (lead_speed - ego_speed))
    needed = 0.0
    closing = ego_speed - lead_speed
    if closing > 0:
        room = gap - config.follow_standstill
        needed = closing * closing / (2.0 * room) if room > 1e-6 else np.inf
        a = min(a, -needed)
    lim = config.accel_limit
    return FollowCommand(float(np.clip(a, -lim, lim)), True, bool(needed > lim))


def quintic_coeffs(v0, a0, d, v1, a1, T):
    """Coefficients c0..c5 of s(t) with s(0)=0, s'(0)=v0, s''(0)=a0, s(T)=d, s'(T)=v1, s''(T)=a1."""
    T = np.asarray(T, dtype=float)
    d = np.broadcast_to(np.asarray(d, dtype=float), T.shape)
    v1 = np.broadcast_to(np.asarray(v1, dtype=float), T.shape)
    T2, T3, T4, T5 = T ** 2, T ** 3, T ** 4, T ** 5
    r0 = d - v0 * T - 0.5 * a0 * T2
    r1 = v1 - v0 - a0 * T
    r2 = a1 - a0
    c3 = (10 * r0 - 4 * r1 * T + 0.5 * r2 * T2) / T3
    c4 = (-15 * r0 + 7 * r1 * T - r2 * T2) / T4
    c5 = (6 * r0 - 3 * r1 * T + 0.5 * r2 * T2) / T5
    z = np.zeros_like(T)
    return np.stack([z, z + v0, z + 0.5 * a0, c3, c4, c5], axis=-1)


def quartic_coeffs(v0, a0, v1, a1, T):
    """Coefficients c0..c5 (c5 = 0) of s(t) with velocity/acceleration boundary values only."""
    T = np.asarray(T, dtype=float)
    v1 = np.broadcast_to(np.asarray(v1, dtype=float), T.shape)
    r1 = v1 - v0 - a0 * T
    r2 = a1 - a0
    c3 = (3 * r1 - r2 * T) / (3 * T ** 2)
    c4 = (-2 * r1 + r2 * T) / (4 * T ** 3)
    z = np.zeros_like(T)
    return np.stack([z, z + v0, z + 0.5 * a0, c3, c4, z], axis=-1)


def _eval(c, t):
    """Position, speed, acceleration, jerk of polynomial rows ``c`` on times ``t`` (shared or per row)."""
    tt = t if t.ndim == 2 else t[None, :]
    c = c[:, :, None]
    s = c[:, 0] + tt * (c[:, 1] + tt * (c[:, 2] + tt * (c[:, 3] + tt * (c[:, 4] + tt * c[:, 5]))))
    v = c[:, 1] + tt * (2 * c[:, 2] + tt * (3 * c[:, 3] + tt * (4 * c[:, 4] + tt * 5 * c[:, 5])))
    a = 2 * c[:, 2] + tt * (6 * c[:, 3] + tt * (12 * c[:, 4] + tt * 20 * c[:, 5]))
    j = 6 * c[:, 3] + tt * (24 * c[:, 4] + tt * 60 * c[:, 5])
    return s, v, a, j


class MotionPlanner:
    """One planner instance per vehicle; holds its current objective."""

    def __init__(self, weights: CostWeights | None = None, config: PlannerConfig | None = None):
        self.weights = weights or CostWeights()
        self.config = config or PlannerConfig()
        self.objective = None

    def set_objective(self, obj: MotionPlanningObjective):
        cfg = self.config
        self.objective = obj
        poly = obj.poly
        self.poly = poly
        self.seg_limit = np.array(obj.v_max)
        grid = np.arange(0.0, poly.length + 0.25, 0.25)
        kappa = np.abs(poly.curvature_at(grid))
        with np.errstate(divide="ignore"):
            curve = np.where(kappa > 1e-9, np.sqrt(cfg.envelope_lateral / np.maximum(kappa, 1e-12)), np.inf)
        raw = np.minimum(curve, self.limit_at(grid))
        env = raw.copy()
        for i in range(len(env) - 2, -1, -1):
            env[i] = min(raw[i], np.sqrt(env[i + 1] ** 2 + 2 * cfg.envelope_decel * (grid[i + 1] - grid[i])))
        self.env_grid = grid
        self.env = env
        self.anchor_s = [poly.project(*ap.position)[0] for ap in obj.anchors]

    def limit_at(self, s):
        return self.seg_limit[self.poly._seg_index(np.asarray(s, dtype=float))]

    def envelope(self, s):
        return np.interp(s, self.env_grid, self.env)

    # -- planning ------------------------------------------------------------

    def plan(self, s0: float, v0: float, a0: float = 0.0, now: Optional[float] = None,
             lead: Optional[tuple] = None, horizon: Optional[float] = None) -> Trajectory:
        """Trajectory from arc length ``s0`` / speed ``v0`` / accel ``a0`` at time ``now``.

        ``lead`` is an optional (bumper gap, speed) of a vehicle ahead on the path.
        """
        if self.objective is None:
            raise RuntimeError("no objective set")
        cfg, w = self.config, self.weights
        obj = self.objective
        now = obj.timestamp if now is None else now
        v0 = max(0.0, v0)
        a0 = float(np.clip(a0, -cfg.accel_limit, cfg.accel_limit))

        anchor = None
        for ap, s_ap in zip(obj.anchors, self.anchor_s):
            rem = obj.timestamp + ap.dt - now
            # a moving vehicle this close in time is committed; short horizons only add jerk
            committed = v0 >= cfg.commit_speed and rem < cfg.commit_time
            if s_ap - s0 > cfg.anchor_reached and rem > -cfg.anchor_expiry and not committed:
                anchor = (s_ap - s0, rem, ap.speed)
                break
        H = horizon or cfg.horizon
        if anchor is not None:
            H = max(H, anchor[1] + max(cfg.time_offsets) + 1.0)
        n = int(round(H / cfg.dt))
        t = np.arange(n + 1) * cfg.dt

        if anchor is not None:
            d, rem, v_ap = anchor
            Ts, Vs = [], []
            for dt_off in cfg.time_offsets:
                for dv in cfg.speed_offsets:
                    T = rem + dt_off
                    if T >= cfg.dt and v_ap + dv >= 0:
                        Ts.append(T)
                        Vs.append(v_ap + dv)
            Ts, Vs = np.array(Ts), np.array(Vs)
            coeffs = quintic_coeffs(v0, a0, d, Vs, 0.0, Ts) if len(Ts) else np.zeros((0, 6))
            mode = "anchored"
        else:
            top = float(self.envelope(s0))
            speeds = sorted(set(list(np.arange(0.0, float(self.seg_limit.max()) + 1e-9, cfg.speed_step))
                                + [float(self.limit_at(s0)), top]))
            Ts = np.array([T for T in cfg.free_times for _ in speeds])
            Vs = np.array([vv for _ in cfg.free_times for vv in speeds])
            coeffs = quartic_coeffs(v0, a0, Vs, 0.0, Ts)
            mode = "free"

        best = None
        if len(Ts):
            # dense check on each candidate's own interval, not only on the output grid
            u = np.linspace(0.0, 1.0, 41)
            tc = Ts[:, None] * u[None, :]
            S, V, A, J = _eval(coeffs, tc)
            env = self.envelope(s0 + S)
            bad = (np.abs(A) > cfg.accel_limit + 1e-9) | (V < -1e-6) | (V > env + 1e-3)
            feasible = ~bad.any(axis=1)
            if anchor is not None:
                mean_a2 = (A ** 2).mean(axis=1)
                mean_j2 = (J ** 2).mean(axis=1)
                ref = np.maximum(env, 1e-3)
                dev = (((ref - V) / ref) ** 2).mean(axis=1)
            else:
                # free candidates compete over a common window, holding their end speed
                tw = np.linspace(0.0, max(cfg.free_times), 81)
                inside = tw[None, :] <= Ts[:, None]
                Sw, Vw, Aw, Jw = _eval(coeffs, np.minimum(tw[None, :], Ts[:, None]))
                Sw = Sw + np.where(inside, 0.0, Vw * (tw[None, :] - Ts[:, None]))
                Aw, Jw = np.where(inside, Aw, 0.0), np.where(inside, Jw, 0.0)
                mean_a2 = (Aw ** 2).mean(axis=1)
                mean_j2 = (Jw ** 2).mean(axis=1)
                ref = np.maximum(self.envelope(s0 + Sw), 1e-3)
                dev = (((ref - Vw) / ref) ** 2).mean(axis=1)
            cost = w.accel * mean_a2 + w.jerk * mean_j2 + w.limit_deviation * dev
            if anchor is not None:
                cost = cost + w.anchor_time * (Ts - anchor[1]) ** 2 + w.anchor_speed * (Vs - anchor[2]) ** 2
            cost = np.where(feasible, cost, np.inf)
            k = int(np.argmin(cost))
            if np.isfinite(cost[k]):
                best = (k, float(cost[k]))

        if best is None:
            traj = self._fallback(s0, v0, t)
            traj.infeasible = True
        else:
            k, c = best
            traj = self._assemble(coeffs[k], float(Ts[k]), s0, t)
            traj.cost = c
            traj.mode = mode

        if lead is not None and 0.0 <= lead[0] <= cfg.sensing_range:
            gap0, vl = lead
            gap = gap0 + vl * t - (traj.s - s0)
            if np.any(gap < cfg.follow_standstill + cfg.follow_trigger_time_gap * traj.v):
                traj = self._follow(s0, v0, gap0, vl, t)
        traj.start_time = now
        traj.vehicle_id = obj.vehicle_id
        return traj

    def _finish(self, s, v, a, t, mode):
        s = np.asarray(s)
        pts = self.poly.point_at(s)
        return Trajectory(t.copy(), s, np.maximum(np.asarray(v), 0.0), np.asarray(a), pts[:, 0], pts[:, 1],
                          self.poly.heading_at(s), self.poly.curvature_at(s), mode=mode)

    def _assemble(self, c, T, s0, t):
        cfg = self.config
        S, V, A, _ = _eval(c[None, :], t)
        S, V, A = S[0] + s0, V[0], A[0]
        inside = t <= T + 1e-9
        if not inside.all():
            sT, vT, aT, _ = _eval(c[None, :], np.array([T]))
            s, v = float(sT[0, 0]) + s0, float(vT[0, 0])
            prev_t = T
            for i in np.nonzero(~inside)[0]:
                h = t[i] - prev_t
                target = min(float(self.envelope(s + v * h)), v + cfg.extension_accel * h)
                acc = float(np.clip((target - v) / h, -cfg.accel_limit, cfg.extension_accel))
                if v + acc * h < 0:
                    acc = -v / h
                s += v * h + 0.5 * acc * h * h
                v = v + acc * h
                S[i], V[i], A[i] = s, v, acc
                prev_t = t[i]
        return self._finish(S, V, A, t, "anchored")

    def _integrate(self, s0, v0, t, accel_fn):
        S, V, A = np.empty_like(t), np.empty_like(t), np.empty_like(t)
        s, v = s0, v0
        for i in range(len(t)):
            acc = accel_fn(i, s, v)
            if i + 1 < len(t):
                h = t[i + 1] - t[i]
                if v + acc * h < 0:
                    acc = -v / h
            S[i], V[i], A[i] = s, v, acc
            if i + 1 < len(t):
                s += v * h + 0.5 * acc * h * h
                v = max(0.0, v + acc * h)
        return S, V, A

    def _fallback(self, s0, v0, t):
        lim = self.config.accel_limit
        S, V, A = self._integrate(s0, v0, t, lambda i, s, v: -lim if v > 0 else 0.0)
        return self._finish(S, V, A, t, "fallback")

    def _follow(self, s0, v0, gap0, vl, t):
        cfg = self.config
        flags = []

        def acc(i, s, v):
            gap = max(gap0 + vl * t[i] - (s - s0), 0.0)
            cmd = follow_mode(gap, vl, v, cfg)
            flags.append(cmd.infeasible)
            target = min(float(self.envelope(s + v * cfg.dt)), v + cfg.extension_accel * cfg.dt)
            a_env = (target - v) / cfg.dt
            return float(np.clip(min(cmd.accel, a_env), -cfg.accel_limit, cfg.accel_limit))

        S, V, A = self._integrate(s0, v0, t, acc)
        traj = self._finish(S, V, A, t, "follow")
        traj.follow_engaged = True
        traj.infeasible = bool(flags and flags[0])
        return traj


def plan_trajectory(obj: MotionPlanningObjective, ego_s: float, ego_v: float,
                    lead: Optional[tuple] = None, weights: CostWeights | None = None,
                    horizon: Optional[float] = None, ego_a: float = 0.0,
                    now: Optional[float] = None, config: PlannerConfig | None = None) -> Trajectory:
    planner = MotionPlanner(weights, config)
    planner.set_objective(obj)
    return planner.plan(ego_s, ego_v, ego_a, now=now, lead=lead, horizon=horizon)
