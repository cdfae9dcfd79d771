import dataclasses
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from calsim.affordances import (A1, A2, A3, Affordances, OffRoadError, box_in_area, compute_affordances,
                                point_in_area, select_reference_path)
from calsim.geometry import Pose2D, local_to_global
from calsim.town import (EGO_HALF_EXTENTS, PEDESTRIAN_HALF_EXTENTS, VEHICLE_HALF_EXTENTS, Actor, SpeedSign,
                         TrafficLight, bbox_distance, load_town, world_at)
from calsim.towngen import straight_road

ROAD = straight_road(300.0)
L = 2.7


def _ego_at_front(x, y=-2.0, h=0.0):
    """Ego actor whose front axle sits at (x, y)."""
    c = Pose2D(x, y, h).forward(-L / 2)
    return Actor("vehicle", c, 0.0, EGO_HALF_EXTENTS, id="ego")


def _world(town=ROAD, front=(50.0, -2.0), h=0.0, actors=(), t=0.0, lane="east"):
    return world_at(town, t, _ego_at_front(*front, h), actors, ego_lane=lane)


def test_point_in_area_examples():
    assert point_in_area(A1, (10.0, -3.0))
    assert point_in_area(A2, (0.0, 0.0))
    assert not point_in_area(A3, (60.0, 0.0))


@pytest.mark.parametrize("area", [A1, A2, A3])
def test_area_corners_boundary_inclusive(area):
    for v in area.vertices:
        assert point_in_area(area, v)
    x0, x1, y0, y1 = area.bounds
    assert not point_in_area(area, (x1 + 1e-9, y0))
    assert not point_in_area(area, (x0, y0 - 1e-9))


def test_empty_road_centered():
    assert compute_affordances(_world(), "straight") == Affordances(False, False, None, 50.0, 0.0, 0.0)


def _vehicle_ahead(gap):
    """Lead vehicle whose rear edge is ``gap`` m ahead of the ego front bumper."""
    ego = _ego_at_front(50.0)
    bumper = ego.pose.x + EGO_HALF_EXTENTS[0]
    return Actor("vehicle", Pose2D(bumper + gap + VEHICLE_HALF_EXTENTS[0], -2.0, 0.0), 5.0, VEHICLE_HALF_EXTENTS)


def test_lead_vehicle_distance_20m():
    lead = _vehicle_ahead(20.0)
    w = _world(actors=(lead,))
    a = compute_affordances(w, "straight")
    assert a.vehicle_distance == pytest.approx(20.0, abs=1e-6)
    assert a.vehicle_distance == pytest.approx(bbox_distance(w.ego, lead), abs=1e-12)
    assert not a.hazard_stop


def test_vehicle_beyond_a3_gives_50():
    a = compute_affordances(_world(actors=(_vehicle_ahead(60.0),)), "straight")
    assert a.vehicle_distance == 50.0


def test_oncoming_lane_vehicle_not_in_a3():
    other = Actor("vehicle", Pose2D(70.0, 2.0, math.pi), 5.0)
    assert compute_affordances(_world(actors=(other,)), "straight").vehicle_distance == 50.0


def test_pedestrian_in_a2_is_hazard_static_is_not():
    ped = Actor("pedestrian", Pose2D(54.0, -2.5), 0.0, PEDESTRIAN_HALF_EXTENTS)
    bollard = Actor("static", Pose2D(54.0, -2.5), 0.0, (0.3, 0.3))
    assert compute_affordances(_world(actors=(ped,)), "straight").hazard_stop
    assert not compute_affordances(_world(actors=(bollard,)), "straight").hazard_stop


def _with_light(x_local, state_red=True, y_local=-3.0, front_x=50.0):
    front = Pose2D(front_x, -2.0, 0.0)
    pos = local_to_global(front, (x_local, y_local))
    cycle = (1.0, 1.0, 1e6) if state_red else (1e6, 1.0, 1.0)
    light = TrafficLight("L", Pose2D(*pos, 0.0), ((0, 0), (0, 1)), cycle, offset=2.5 if state_red else 0.0)
    return dataclasses.replace(ROAD, lights=[light])


def test_green_light_in_a1_not_red():
    assert not compute_affordances(_world(_with_light(10.0, state_red=False)), "straight").red_light
    assert compute_affordances(_world(_with_light(10.0)), "straight").red_light


def test_red_light_toggles_at_a1_boundaries():
    # ego front axle at the origin so local and global x coincide exactly
    x0, x1, _, _ = A1.bounds
    xs = [k * 0.01 for k in range(2001)] + [x0, x1, math.nextafter(x0, 0), math.nextafter(x1, 99)]
    for x in xs:
        expected = x0 <= x <= x1
        w = _world(_with_light(x, front_x=0.0), front=(0.0, -2.0))
        assert compute_affordances(w, "straight").red_light == expected, x


def test_nearest_sign_in_a1_wins():
    signs = [SpeedSign(Pose2D(50 + 12, -5.0), 90), SpeedSign(Pose2D(50 + 8, -5.0), 60),
             SpeedSign(Pose2D(50 + 30, -5.0), 30)]
    town = dataclasses.replace(ROAD, signs=signs)
    assert compute_affordances(_world(town), "straight").speed_sign == 60


def test_lateral_offset_and_heading_error_measured_at_front_axle():
    a = compute_affordances(_world(front=(50.0, -1.5), h=0.1), "straight")
    assert a.center_distance == pytest.approx(0.5)
    assert a.relative_angle == pytest.approx(0.1)


def test_offroad_raises():
    with pytest.raises(OffRoadError):
        compute_affordances(_world(front=(50.0, -9.0), lane=None), "straight")
    with pytest.raises(OffRoadError):
        compute_affordances(_world(front=(50.0, -9.0)), "straight")


# --------------------------------------------------------------------------
# reference paths

TOWN = load_town("town-a")


def _front_on(lane_id, s):
    (x, y), h = TOWN.lanes[lane_id].centerline.point_at(s)
    return Pose2D(x, y, h)


def test_straight_road_any_command_single_lane():
    for cmd in ("straight", "left", "right"):
        path = select_reference_path(ROAD, "east", Pose2D(50, -2, 0), cmd)
        assert path.lanes == ("east",) and not path.substituted


def test_branch_command_selects_successor():
    lane = TOWN.lanes["J00-J01"]
    path = select_reference_path(TOWN, "J00-J01", _front_on("J00-J01", 60), "right")
    assert path.lanes == ("J00-J01", lane.successors["right"]) and not path.substituted


def test_missing_command_falls_back_and_flags():
    # every lane whose successors lack a command must fall back to an available one
    seen = 0
    for lid, lane in TOWN.lanes.items():
        if not lane.successors:
            continue
        for cmd in ("straight", "left", "right"):
            path = select_reference_path(TOWN, lid, _front_on(lid, 1.0), cmd)
            if cmd in lane.successors:
                assert path.lanes[1] == lane.successors[cmd] and not path.substituted
            else:
                seen += 1
                assert path.substituted and path.lanes[1] in lane.successors.values()
                if len(lane.successors) == 1:
                    assert path.lanes[1] == next(iter(lane.successors.values()))
    assert seen > 0


def test_commands_agree_before_branch_region():
    lid = "J00-J01"
    front = _front_on(lid, 30.0)
    ego = Actor("vehicle", front.forward(-L / 2), 0.0, EGO_HALF_EXTENTS)
    w = world_at(TOWN, 0.0, ego, ego_lane=lid)
    outs = {compute_affordances(w, c) for c in ("straight", "left", "right")}
    assert len(outs) == 1


def test_hazard_is_command_independent():
    lid = "J00-J01"
    front = _front_on(lid, 68.0)
    ped = Actor("pedestrian", front.forward(4.0), 0.0, PEDESTRIAN_HALF_EXTENTS)
    ego = Actor("vehicle", front.forward(-L / 2), 0.0, EGO_HALF_EXTENTS)
    w = world_at(TOWN, 0.0, ego, (ped,), ego_lane=lid)
    assert {compute_affordances(w, c).hazard_stop for c in ("straight", "left", "right")} == {True}


# --------------------------------------------------------------------------
# properties

actor_st = st.builds(
    lambda kind, x, y, h, hx, hy: Actor(kind, Pose2D(x, y, h), 0.0, (hx, hy)),
    st.sampled_from(["vehicle", "pedestrian", "static"]), st.floats(0, 300), st.floats(-10, 10),
    st.floats(-4, 4), st.floats(0.1, 3), st.floats(0.1, 3))


@given(st.floats(5, 295), st.floats(-6.9, 2.9), st.floats(-3.5, 3.5), st.lists(actor_st, max_size=8),
       st.lists(st.tuples(st.floats(0, 300), st.floats(-8, 8), st.booleans()), max_size=4),
       st.lists(st.tuples(st.floats(0, 300), st.floats(-8, 8), st.sampled_from([30, 60, 90])), max_size=4),
       st.sampled_from(["straight", "left", "right"]))
def test_outputs_always_in_range(x, y, h, actors, lights, signs, cmd):
    town = dataclasses.replace(
        ROAD,
        lights=[TrafficLight(f"L{i}", Pose2D(lx, ly), ((0, 0), (0, 1)), (5, 1, 5) if red else (1e6, 1, 1), 6.5)
                for i, (lx, ly, red) in enumerate(lights)],
        signs=[SpeedSign(Pose2D(sx, sy), lim) for sx, sy, lim in signs])
    w = world_at(town, 0.0, _ego_at_front(x, y, h), actors, ego_lane="east")
    a = compute_affordances(w, cmd)  # front axle stays within 5 m of the lane
    assert 0.0 <= a.vehicle_distance <= 50.0
    assert -math.pi <= a.relative_angle <= math.pi
    assert -2.0 <= a.center_distance <= 2.0
    assert a.speed_sign in (None, 30, 60, 90)
    assert compute_affordances(w, cmd) == a  # deterministic
    if not any(box_in_area(A3, w.front_axle, act) for act in w.actors if act.kind == "vehicle"):
        assert a.vehicle_distance == 50.0
