"""Rule-violation detection shared by the online loop and trace replay."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

from .geometry import Point, Pose2D, convex_overlap, point_in_polygon, segments_intersect
from .town import EGO_HALF_EXTENTS, Actor, Town, world_at

KINDS = ("opposite_lane", "sidewalk", "collision_static", "collision_car", "collision_pedestrian",
         "red_light_violation")
DEBOUNCE_S = 2.0

_COLLISION_KIND = {"static": "collision_static", "vehicle": "collision_car", "pedestrian": "collision_pedestrian"}


@dataclass(frozen=True)
class Infraction:
    kind: str
    time: float
    x: float
    y: float


class InfractionMonitor:
    """Feeds on consecutive ego states; each continuous violation of a kind
    yields one event, re-armed once that kind has been clear for 2 s."""

    def __init__(self, town: Town, wheelbase: float = 2.7, debounce: float = DEBOUNCE_S):
        self.town = town
        self.wheelbase = wheelbase
        self.debounce = debounce
        self.events: List[Infraction] = []
        self._last_active: Dict[str, float] = {}
        self._armed: Dict[str, bool] = {k: True for k in KINDS}
        self._prev_front: Optional[Point] = None
        self._sidewalk_boxes = [(min(p[0] for p in poly), max(p[0] for p in poly),
                                 min(p[1] for p in poly), max(p[1] for p in poly)) for poly in town.sidewalks]

    def _on_sidewalk(self, p: Point) -> bool:
        for (x0, x1, y0, y1), poly in zip(self._sidewalk_boxes, self.town.sidewalks):
            if x0 <= p[0] <= x1 and y0 <= p[1] <= y1 and point_in_polygon(p, poly):
                return True
        return False

    def _in_opposite_lane(self, p: Point, lane_id: Optional[str]) -> bool:
        lane = self.town.lanes.get(lane_id) if lane_id else None
        if lane is None or lane.opposite_lane_id is None:
            return False
        opp = self.town.lanes[lane.opposite_lane_id]
        _, _, offset, s = opp.centerline.project(p)
        return abs(offset) < 0.5 * opp.width and 0.0 < s < opp.length

    def update(self, t: float, ego: Actor, lane_id: Optional[str], actors: Sequence[Actor], lights) -> List[Infraction]:
        center = ego.pose.position
        front = ego.pose.forward(self.wheelbase / 2.0).position
        active = set()
        if self._in_opposite_lane(center, lane_id):
            active.add("opposite_lane")
        if self._on_sidewalk(center):
            active.add("sidewalk")
        ego_box = ego.corners()
        for a in actors:
            kind = _COLLISION_KIND[a.kind]
            if kind not in active and convex_overlap(ego_box, a.corners()):
                active.add(kind)
        if self._prev_front is not None:
            for light in lights:
                if light.state != "red":
                    continue
                hx, hy = math.cos(light.pose.heading), math.sin(light.pose.heading)
                moving_with = (front[0] - self._prev_front[0]) * hx + (front[1] - self._prev_front[1]) * hy > 0
                if moving_with and segments_intersect(self._prev_front, front, *light.stop_line):
                    active.add("red_light_violation")
                    break
        self._prev_front = front

        new = []
        for kind in KINDS:
            if kind in active:
                if self._armed[kind]:
                    new.append(Infraction(kind, t, center[0], center[1]))
                    self._armed[kind] = False
                self._last_active[kind] = t
            elif not self._armed[kind] and t - self._last_active[kind] >= self.debounce - 1e-9:
                self._armed[kind] = True
        self.events.extend(new)
        return new

    def update_from_row(self, row, world) -> List[Infraction]:
        return self.update(float(row["time_s"]), ego_from_row(row), row.get("lane") or None,
                           world.actors, world.lights)


def detect_infractions(rows: Iterable[dict], town: Town, actors: Sequence[Actor] = (), wheelbase: float = 2.7,
                       light_overrides=None) -> List[Infraction]:
    """Replay a trace against the (scripted, time-deterministic) world."""
    from .simulation import apply_light_overrides

    if light_overrides:
        town = apply_light_overrides(town, light_overrides)
    monitor = InfractionMonitor(town, wheelbase)
    for row in rows:
        ego = ego_from_row(row)
        world = world_at(town, float(row["time_s"]), ego, actors)
        monitor.update_from_row(row, world)
    return monitor.events


def ego_from_row(row) -> Actor:
    return Actor("vehicle", Pose2D(float(row["x_m"]), float(row["y_m"]), float(row["heading_rad"])),
                 float(row["speed_mps"]), EGO_HALF_EXTENTS)


def count_by_kind(events: Iterable[Infraction]) -> Dict[str, int]:
    counts = {k: 0 for k in KINDS}
    for e in events:
        counts[e.kind] += 1
    return counts


__all__ = ["DEBOUNCE_S", "Infraction", "InfractionMonitor", "KINDS", "count_by_kind", "detect_infractions"]
