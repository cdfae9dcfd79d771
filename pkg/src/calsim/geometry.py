"""Planar geometry primitives shared by the simulator.

Conventions: global frame is right-handed (x east, y north, heading CCW from +x).
The local frame of a pose has x pointing forward and y pointing left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

Point = Tuple[float, float]


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError(f"non-finite pose: {self}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> Point:
        return (self.x, self.y)

    def forward(self, distance: float) -> "Pose2D":
        """Pose translated ``distance`` meters along its own heading."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Pose2D(self.x + distance * c, self.y + distance * s, self.heading)


def global_to_local(frame: Pose2D, p: Point) -> Point:
    dx, dy = p[0] - frame.x, p[1] - frame.y
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    return (c * dx + s * dy, -s * dx + c * dy)


def local_to_global(frame: Pose2D, p: Point) -> Point:
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    return (frame.x + c * p[0] - s * p[1], frame.y + s * p[0] + c * p[1])


# --------------------------------------------------------------------------
# polylines

class Polyline:
    """Ordered 2D polyline with cumulative arc length.

    Projection queries are vectorized over segments.
    """

    def __init__(self, points: Sequence[Point]):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two 2D points")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0.0):
            raise ValueError("polyline has repeated consecutive points")
        self.points = pts
        self.seg = seg
        self.seg_len = lengths
        self.cum = np.concatenate([[0.0], np.cumsum(lengths)])
        self.headings = np.arctan2(seg[:, 1], seg[:, 0])

    def __eq__(self, other):
        if not isinstance(other, Polyline):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.array_equal(self.points, other.points))

    __hash__ = None

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def project(self, p: Point):
        """Closest point on the polyline to ``p``.

        Returns ``(closest, heading, signed_offset, s)`` where the offset is
        positive when ``p`` lies left of the tangent and ``s`` is arc length.
        """
        px, py = p
        rel_x = px - self.points[:-1, 0]
        rel_y = py - self.points[:-1, 1]
        t = (rel_x * self.seg[:, 0] + rel_y * self.seg[:, 1]) / (self.seg_len ** 2)
        t = np.clip(t, 0.0, 1.0)
        cx = self.points[:-1, 0] + t * self.seg[:, 0]
        cy = self.points[:-1, 1] + t * self.seg[:, 1]
        dist2 = (px - cx) ** 2 + (py - cy) ** 2
        i = int(np.argmin(dist2))
        return self._result(i, float(t[i]), float(cx[i]), float(cy[i]), p)

    def _result(self, i, t, cx, cy, p):
        heading = float(self.headings[i])
        cross = self.seg[i, 0] * (p[1] - cy) - self.seg[i, 1] * (p[0] - cx)
        dist = math.hypot(p[0] - cx, p[1] - cy)
        offset = math.copysign(dist, cross) if dist > 0.0 else 0.0
        s = float(self.cum[i] + t * self.seg_len[i])
        return (cx, cy), heading, offset, s

    def point_at(self, s: float):
        """Point and tangent heading at arc length ``s`` (clamped to the ends)."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.seg_len) - 1)
        t = (s - self.cum[i]) / self.seg_len[i]
        x = self.points[i, 0] + t * self.seg[i, 0]
        y = self.points[i, 1] + t * self.seg[i, 1]
        return (float(x), float(y)), float(self.headings[i])

    def concat(self, other: "Polyline") -> "Polyline":
        pts = list(map(tuple, self.points))
        for q in other.points:
            if math.hypot(q[0] - pts[-1][0], q[1] - pts[-1][1]) > 1e-9:
                pts.append(tuple(q))
        return Polyline(pts)


# --------------------------------------------------------------------------
# oriented boxes

def box_corners(pose: Pose2D, half_extents: Tuple[float, float]) -> np.ndarray:
    """Corners of an oriented box in CCW order, shape (4, 2)."""
    hx, hy = half_extents
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([pose.x, pose.y])


def _axes(poly: np.ndarray) -> np.ndarray:
    edges = np.roll(poly, -1, axis=0) - poly
    normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def convex_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (touching counts)."""
    for axis in np.vstack([_axes(a), _axes(b)]):
        pa, pb = a @ axis, b @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def convex_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Shortest distance between two convex polygons, 0 when they overlap."""
    if convex_overlap(a, b):
        return 0.0
    best = math.inf
    for poly, other in ((a, b), (b, a)):
        n = len(other)
        for p in poly:
            for j in range(n):
                best = min(best, _point_segment_distance(p, other[j], other[(j + 1) % n]))
    return best


def point_in_polygon(p: Point, poly: Sequence[Point]) -> bool:
    """Even-odd rule; points on an edge may go either way."""
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 <= 0.0) and (d3 * d4 <= 0.0) and not (d1 == d2 == 0.0)
