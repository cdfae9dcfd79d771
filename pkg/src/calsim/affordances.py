"""Ground-truth affordances from a world snapshot.

Observation areas are axis-aligned rectangles in the ego front-axle frame
(x forward, y left). Objects falling inside an area are "detected".
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .geometry import Point, Polyline, Pose2D, box_corners, convex_distance, convex_overlap, global_to_local, wrap_angle
from .town import Actor, Lane, Town, WorldState

MAX_VEHICLE_DISTANCE = 50.0
MAX_CENTER_DISTANCE = 2.0
OFFROAD_DISTANCE = 5.0


class DirectionalCommand(str, Enum):
    STRAIGHT = "straight"
    LEFT = "left"
    RIGHT = "right"


class OffRoadError(RuntimeError):
    """The ego is not within reach of any lane."""


@dataclass(frozen=True)
class ObservationArea:
    id: str
    vertices: Tuple[Point, Point, Point, Point]

    @property
    def bounds(self):
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), max(xs), min(ys), max(ys)

    def corners(self) -> np.ndarray:
        x0, x1, y0, y1 = self.bounds
        return np.array([[x1, y1], [x0, y1], [x0, y0], [x1, y0]])


A1 = ObservationArea("A1", ((7.4, -0.8), (7.4, -5.8), (14.0, -0.8), (14.0, -5.8)))
A2 = ObservationArea("A2", ((0.0, 2.0), (0.0, -2.0), (8.2, 2.0), (8.2, -2.0)))
A3 = ObservationArea("A3", ((0.0, 1.6), (0.0, -1.6), (50.0, 1.6), (50.0, -1.6)))


def point_in_area(area: ObservationArea, p: Point) -> bool:
    x0, x1, y0, y1 = area.bounds
    return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


def box_in_area(area: ObservationArea, frame: Pose2D, actor: Actor) -> bool:
    """Does the actor's bounding box intersect the area placed at ``frame``?"""
    corners = box_corners(actor.pose, actor.half_extents)
    local = np.array([global_to_local(frame, tuple(c)) for c in corners])
    return convex_overlap(area.corners(), local)


@dataclass(frozen=True)
class Affordances:
    hazard_stop: bool = False
    red_light: bool = False
    speed_sign: Optional[int] = None
    vehicle_distance: float = MAX_VEHICLE_DISTANCE
    relative_angle: float = 0.0
    center_distance: float = 0.0


@dataclass(frozen=True, eq=False)
class ReferencePath:
    lanes: Tuple[str, ...]
    line: Polyline
    lane_end: float  # arc length where the current lane ends
    substituted: bool = False


def select_reference_path(town: Town, ego_lane: Optional[str], front: Pose2D, command) -> ReferencePath:
    """Current lane followed by the successor picked by ``command``.

    When the command has no successor the unique (or the first of straight,
    right, left) available one is used and ``substituted`` is set.
    """
    command = DirectionalCommand(command).value
    lane = town.lanes.get(ego_lane) if ego_lane is not None else None
    if lane is None:
        lane = town.nearest_lane(front.position, front.heading, OFFROAD_DISTANCE)
        if lane is None:
            raise OffRoadError(f"no lane within {OFFROAD_DISTANCE} m of ({front.x:.2f}, {front.y:.2f})")
    if not lane.successors:
        return ReferencePath((lane.id,), lane.centerline, lane.length)
    substituted = command not in lane.successors
    if substituted:
        command = next(c for c in ("straight", "right", "left") if c in lane.successors)
    nxt = town.lanes[lane.successors[command]]
    return ReferencePath((lane.id, nxt.id), lane.centerline.concat(nxt.centerline), lane.length, substituted)


def lane_errors(path: ReferencePath, front: Pose2D):
    """(signed offset d, heading error psi, arc length s) of the front axle."""
    _, heading, offset, s = path.line.project(front.position)
    return offset, wrap_angle(front.heading - heading), s


def compute_affordances(world: WorldState, command, path: Optional[ReferencePath] = None) -> Affordances:
    front = world.front_axle
    if path is None:
        path = select_reference_path(world.town, world.ego_lane, front, command)
    d, psi, _ = lane_errors(path, front)
    if abs(d) > OFFROAD_DISTANCE:
        raise OffRoadError(f"ego {abs(d):.2f} m away from lane {path.lanes[0]}")

    red = False
    for light in world.lights:
        if light.state == "red" and point_in_area(A1, global_to_local(front, light.pose.position)):
            red = True
            break

    sign, sign_x = None, math.inf
    for sg in world.signs:
        local = global_to_local(front, sg.pose.position)
        if point_in_area(A1, local) and local[0] < sign_x:
            sign, sign_x = sg.limit, local[0]

    ego_box = world.ego.corners()
    hazard = False
    ell = MAX_VEHICLE_DISTANCE
    for actor in world.actors:
        if actor.kind == "static":
            continue
        if not hazard and box_in_area(A2, front, actor):
            hazard = True
        if actor.kind == "vehicle" and box_in_area(A3, front, actor):
            ell = min(ell, convex_distance(ego_box, actor.corners()))

    return Affordances(
        hazard_stop=hazard,
        red_light=red,
        speed_sign=sign,
        vehicle_distance=float(min(max(ell, 0.0), MAX_VEHICLE_DISTANCE)),
        relative_angle=float(min(max(psi, -math.pi), math.pi)),
        center_distance=float(min(max(d, -MAX_CENTER_DISTANCE), MAX_CENTER_DISTANCE)),
    )


def advance_lane(town: Town, path: ReferencePath, front: Pose2D) -> str:
    """Lane the ego occupies after moving, given the path it was following."""
    if len(path.lanes) < 2:
        return path.lanes[0]
    _, _, s = lane_errors(path, front)
    return path.lanes[1] if s > path.lane_end else path.lanes[0]


__all__: List[str] = [
    "A1", "A2", "A3", "Affordances", "DirectionalCommand", "ObservationArea", "OffRoadError",
    "ReferencePath", "advance_lane", "box_in_area", "compute_affordances", "lane_errors",
    "point_in_area", "select_reference_path",
]
