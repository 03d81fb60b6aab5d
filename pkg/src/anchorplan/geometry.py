"""Planar polyline helpers shared by the map, the rollout and the motion planner."""
from __future__ import annotations

import math

import numpy as np


def wrap_angle(angle: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(angle + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def _menger_curvature(points: np.ndarray) -> np.ndarray:
    """Signed curvature at each vertex (left turn positive), zero at endpoints."""
    n = len(points)
    kappa = np.zeros(n)
    if n < 3:
        return kappa
    a = points[:-2]
    b = points[1:-1]
    c = points[2:]
    ab = b - a
    bc = c - b
    ac = c - a
    cross = ab[:, 0] * bc[:, 1] - ab[:, 1] * bc[:, 0]
    denom = (np.linalg.norm(ab, axis=1) * np.linalg.norm(bc, axis=1)
             * np.linalg.norm(ac, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(denom > 1e-12, 2.0 * cross / denom, 0.0)
    kappa[1:-1] = k
    return kappa


class Polyline:
    """Arc-length parametrized polyline.

    Curvature is estimated per vertex from the circumscribed circle of three
    consecutive points and interpolated linearly in between, so densely
    sampled circular arcs report exactly 1/R.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("polyline needs at least two points")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError("polyline points must be pairwise distinct")
        self.points = pts
        self.seg = seg
        self.seg_len = seg_len
        self.s = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.s[-1])
        self.seg_heading = np.arctan2(seg[:, 1], seg[:, 0])
        self.kappa = _menger_curvature(pts)

    def __len__(self):
        return len(self.points)

    def _seg_index(self, s):
        idx = np.searchsorted(self.s, s, side="right") - 1
        return np.clip(idx, 0, len(self.seg_len) - 1)

    def point_at(self, s):
        """Position(s) at arc length; clamps outside [0, length] except for
        linear extrapolation along the last/first segment."""
        s_arr = np.asarray(s, dtype=float)
        i = self._seg_index(s_arr)
        frac = (s_arr - self.s[i]) / self.seg_len[i]
        frac = np.maximum(frac, 0.0)
        p = self.points[i] + self.seg[i] * frac[..., None]
        return p

    def heading_at(self, s):
        return self.seg_heading[self._seg_index(np.asarray(s, dtype=float))]

    def curvature_at(self, s):
        s_arr = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        return np.interp(s_arr, self.s, self.kappa)

    def project(self, x: float, y: float, lo: float | None = None,
                hi: float | None = None):
        """Closest point on the polyline.

        Returns (arc length, signed lateral offset, left positive). The search
        can be restricted to the segments overlapping [lo, hi].
        """
        i0, i1 = 0, len(self.seg_len)
        if lo is not None:
            i0 = int(self._seg_index(max(lo, 0.0)))
        if hi is not None:
            i1 = int(self._seg_index(min(hi, self.length))) + 1
        a = self.points[i0:i1]
        d = self.seg[i0:i1]
        L2 = self.seg_len[i0:i1] ** 2
        px = x - a[:, 0]
        py = y - a[:, 1]
        t = np.clip((px * d[:, 0] + py * d[:, 1]) / L2, 0.0, 1.0)
        cx = px - t * d[:, 0]
        cy = py - t * d[:, 1]
        dist2 = cx * cx + cy * cy
        k = int(np.argmin(dist2))
        j = i0 + k
        s = float(self.s[j] + t[k] * self.seg_len[j])
        cross = d[k, 0] * py[k] - d[k, 1] * px[k]
        lat = math.sqrt(float(dist2[k]))
        return s, (lat if cross >= 0.0 else -lat)

    def sub(self, s0: float, s1: float | None = None) -> np.ndarray:
        """Points of the sub-polyline between two arc lengths."""
        if s1 is None:
            s1 = self.length
        inner = self.points[(self.s > s0 + 1e-6) & (self.s < s1 - 1e-6)]
        start = self.point_at(s0)
        end = self.point_at(s1)
        return np.vstack([start, inner, end])
