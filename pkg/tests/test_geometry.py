import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calsim.geometry import (Polyline, Pose2D, box_corners, convex_distance, convex_overlap, global_to_local,
                             local_to_global, wrap_angle)
from calsim.town import Actor, Lane, bbox_distance, bbox_overlap, nearest_centerline_point

coord = st.floats(-1e3, 1e3, allow_nan=False)
angle = st.floats(-20.0, 20.0, allow_nan=False)


def test_pose_heading_wrapped():
    assert Pose2D(0, 0, 3 * math.pi).heading == pytest.approx(math.pi)
    assert Pose2D(0, 0, -math.pi).heading == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        Pose2D(float("nan"), 0.0)


@given(angle)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_global_to_local_identity_case():
    ego = Pose2D(0.0, 0.0, 0.0)
    assert global_to_local(ego, (0.0, 0.0)) == (0.0, 0.0)


def test_global_to_local_rotated_norm():
    ego = Pose2D(3.0, -2.0, math.pi / 2)
    ahead = ego.forward(1.0).position
    loc = global_to_local(ego, ahead)
    assert math.hypot(*loc) == pytest.approx(1.0)
    assert loc == pytest.approx((1.0, 0.0))  # x forward
    left = (ego.x - 1.0, ego.y)  # heading north, west is to the left
    assert global_to_local(ego, left) == pytest.approx((0.0, 1.0))


def test_frame_round_trip_1000_samples():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        ego = Pose2D(*rng.uniform(-500, 500, 2), rng.uniform(-math.pi, math.pi))
        p = tuple(rng.uniform(-500, 500, 2))
        q = local_to_global(ego, global_to_local(ego, p))
        assert math.hypot(q[0] - p[0], q[1] - p[1]) < 1e-9


@given(coord, coord, angle, coord, coord)
def test_frame_round_trip_property(x, y, h, px, py):
    ego = Pose2D(x, y, h)
    q = local_to_global(ego, global_to_local(ego, (px, py)))
    assert math.hypot(q[0] - px, q[1] - py) < 1e-9


# --------------------------------------------------------------------------
# centerline projection

def _lane(points):
    return Lane("l", Polyline(points), 4.0, 30, {})


def test_point_on_centerline_zero_offset():
    lane = _lane([(0, 0), (10, 0), (10, 10)])
    _, _, off = nearest_centerline_point(lane, (4.0, 0.0))
    assert off == 0.0


def test_point_left_of_segment_positive_offset():
    lane = _lane([(0, 0), (10, 0)])
    closest, heading, off = nearest_centerline_point(lane, (3.0, 0.5))
    assert off == pytest.approx(0.5)
    assert closest == pytest.approx((3.0, 0.0))
    assert heading == pytest.approx(0.0)
    assert nearest_centerline_point(lane, (3.0, -0.5))[2] == pytest.approx(-0.5)


def _brute_force_distance(points, p):
    best = math.inf
    for a, b in zip(points[:-1], points[1:]):
        a, b, q = np.asarray(a, float), np.asarray(b, float), np.asarray(p, float)
        # dense sampling of the segment plus the analytic foot point
        t = np.clip(np.dot(q - a, b - a) / np.dot(b - a, b - a), 0, 1)
        for tt in np.append(np.linspace(0, 1, 201), t):
            best = min(best, float(np.linalg.norm(q - (a + tt * (b - a)))))
    return best


def test_projection_matches_exhaustive_segments():
    rng = np.random.default_rng(1)
    for _ in range(200):
        pts = np.cumsum(rng.uniform(-5, 5, size=(rng.integers(2, 8), 2)), axis=0)
        if np.any(np.hypot(*np.diff(pts, axis=0).T) < 1e-3):
            continue
        line = Polyline(pts)
        p = tuple(rng.uniform(-20, 20, 2))
        closest, _, off, s = line.project(p)
        ref = _brute_force_distance(pts, p)
        assert abs(off) == pytest.approx(ref, abs=1e-9)
        assert math.hypot(closest[0] - p[0], closest[1] - p[1]) == pytest.approx(abs(off), abs=1e-12)
        assert line.point_at(s)[0] == pytest.approx(closest, abs=1e-9)


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=2, max_size=6),
       st.floats(-60, 60), st.floats(-60, 60))
def test_offset_magnitude_is_point_to_polyline_distance(points, px, py):
    pts = np.asarray(points, float)
    if np.any(np.hypot(*np.diff(pts, axis=0).T) < 1e-3):
        return
    line = Polyline(pts)
    closest, _, off, _ = line.project((px, py))
    assert abs(off) == pytest.approx(math.hypot(closest[0] - px, closest[1] - py), abs=1e-9)
    assert abs(off) <= _brute_force_distance(pts, (px, py)) + 1e-9


def test_polyline_rejects_degenerate():
    with pytest.raises(ValueError):
        Polyline([(0, 0)])
    with pytest.raises(ValueError):
        Polyline([(0, 0), (0, 0), (1, 0)])


# --------------------------------------------------------------------------
# oriented boxes

def _actor(x, y, h, hx=1.0, hy=0.5):
    return Actor("vehicle", Pose2D(x, y, h), 0.0, (hx, hy))


def test_identical_boxes_overlap():
    a = _actor(1, 2, 0.3)
    assert bbox_overlap(a, a)
    assert bbox_distance(a, a) == 0.0


def test_far_boxes_do_not_overlap():
    a, b = _actor(0, 0, 0, 0.5, 0.5), _actor(10, 0, 0, 0.5, 0.5)
    assert not bbox_overlap(a, b)
    assert bbox_distance(a, b) == pytest.approx(9.0)


def _inside(pose, half, pts):
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dx, dy = pts[:, 0] - pose.x, pts[:, 1] - pose.y
    lx, ly = c * dx + s * dy, -s * dx + c * dy
    return (np.abs(lx) <= half[0]) & (np.abs(ly) <= half[1])


def _raster_overlap(a: Actor, b: Actor, res=0.01) -> bool:
    """Any 1 cm grid point inside both boxes."""
    ca = a.corners()
    xs = np.arange(ca[:, 0].min(), ca[:, 0].max() + res, res)
    ys = np.arange(ca[:, 1].min(), ca[:, 1].max() + res, res)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    pts = pts[_inside(a.pose, a.half_extents, pts)]
    return bool(np.any(_inside(b.pose, b.half_extents, pts)))


def _shrunk(a: Actor, by: float) -> Actor:
    return Actor(a.kind, a.pose, 0.0, (a.half_extents[0] - by, a.half_extents[1] - by))


def test_bbox_overlap_agrees_with_raster_oracle():
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(300):
        a = _actor(0.0, 0.0, rng.uniform(-math.pi, math.pi), *rng.uniform(0.3, 1.5, 2))
        b = _actor(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi), *rng.uniform(0.3, 1.5, 2))
        sat = bbox_overlap(a, b)
        raster = _raster_overlap(a, b)
        if raster:
            assert sat
        elif sat:
            # only grazing contact may escape a 1 cm raster
            assert not bbox_overlap(_shrunk(a, 0.02), _shrunk(b, 0.02))
        if bbox_distance(a, b) > 0.02:
            assert not raster
        checked += 1
    assert checked == 300


@given(coord, coord, angle, angle, st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.1, 3))
def test_bbox_distance_symmetric_nonnegative_zero_iff_overlap(x, y, h1, h2, a1, a2, b1, b2):
    x, y = x / 100.0, y / 100.0
    a = _actor(0.0, 0.0, h1, a1, a2)
    b = _actor(x, y, h2, b1, b2)
    d_ab, d_ba = bbox_distance(a, b), bbox_distance(b, a)
    assert d_ab == pytest.approx(d_ba, abs=1e-9)
    assert d_ab >= 0.0
    assert (d_ab == 0.0) == bbox_overlap(a, b)


def test_convex_distance_axis_aligned():
    a = box_corners(Pose2D(0, 0, 0), (1, 1))
    b = box_corners(Pose2D(5, 5, 0), (1, 1))
    assert convex_distance(a, b) == pytest.approx(math.hypot(3, 3))
    assert convex_overlap(a, box_corners(Pose2D(2, 0, 0), (1, 1)))  # touching counts
