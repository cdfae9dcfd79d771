"""Road network, regulators, actors and the world snapshot."""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import yaml

from .geometry import Point, Polyline, Pose2D, box_corners, convex_distance, convex_overlap

KMH = 1.0 / 3.6
SPEED_LIMITS = (30, 60, 90)
COMMANDS = ("straight", "left", "right")
LIGHT_STATES = ("green", "orange", "red")
ACTOR_KINDS = ("vehicle", "pedestrian", "static")

EGO_HALF_EXTENTS = (2.3, 0.95)
VEHICLE_HALF_EXTENTS = (2.3, 0.95)
PEDESTRIAN_HALF_EXTENTS = (0.3, 0.3)

BUILTIN_TOWNS = ("town-a", "town-b")


class TownError(ValueError):
    """Invalid town or scenario definition."""


@dataclass(frozen=True, eq=False)
class Lane:
    id: str
    centerline: Polyline
    width: float = 4.0
    speed_limit: int = 30
    successors: Dict[str, str] = field(default_factory=dict)
    opposite_lane_id: Optional[str] = None

    @property
    def length(self) -> float:
        return self.centerline.length

    @property
    def is_branch(self) -> bool:
        """True where a directional command picks the continuation."""
        return bool(self.successors) and set(self.successors) != {"straight"}


@dataclass(frozen=True)
class TrafficLight:
    id: str
    pose: Pose2D
    stop_line: Tuple[Point, Point]
    cycle: Tuple[float, float, float] = (10.0, 3.0, 7.0)  # green, orange, red
    offset: float = 0.0
    state: str = "green"

    def __post_init__(self):
        if any(d <= 0 for d in self.cycle):
            raise TownError(f"light {self.id}: cycle durations must be positive")

    def state_at(self, t: float) -> str:
        g, o, r = self.cycle
        phase = math.fmod(t + self.offset, g + o + r)
        if phase < 0:
            phase += g + o + r
        if phase < g:
            return "green"
        if phase < g + o:
            return "orange"
        return "red"

    def at(self, t: float) -> "TrafficLight":
        s = self.state_at(t)
        return self if s == self.state else dataclasses.replace(self, state=s)


@dataclass(frozen=True)
class SpeedSign:
    pose: Pose2D
    limit: int

    def __post_init__(self):
        if self.limit not in SPEED_LIMITS:
            raise TownError(f"speed sign limit {self.limit} not in {SPEED_LIMITS}")


@dataclass(frozen=True)
class ActorScript:
    """Constant-speed motion along a waypoint polyline starting at ``start_time``."""

    path: Polyline
    speed: float
    start_time: float = 0.0
    despawn: bool = False

    def state_at(self, t: float):
        """(pose, speed, alive) of the scripted actor at time ``t``."""
        s = max(0.0, t - self.start_time) * self.speed
        (x, y), h = self.path.point_at(s)
        done = s >= self.path.length
        moving = self.speed if (t >= self.start_time and not done) else 0.0
        return Pose2D(x, y, h), moving, not (done and self.despawn)


@dataclass(frozen=True)
class Actor:
    kind: str
    pose: Pose2D
    speed: float = 0.0
    half_extents: Tuple[float, float] = VEHICLE_HALF_EXTENTS
    script: Optional[ActorScript] = None
    id: str = ""

    def __post_init__(self):
        if self.kind not in ACTOR_KINDS:
            raise TownError(f"unknown actor kind {self.kind!r}")
        if min(self.half_extents) <= 0:
            raise TownError("actor half extents must be positive")
        if not math.isfinite(self.speed) or self.speed < 0:
            raise TownError("actor speed must be finite and non-negative")

    def corners(self):
        return box_corners(self.pose, self.half_extents)


def bbox_overlap(a: Actor, b: Actor) -> bool:
    return convex_overlap(a.corners(), b.corners())


def bbox_distance(a: Actor, b: Actor) -> float:
    return convex_distance(a.corners(), b.corners())


def nearest_centerline_point(lane: Lane, p: Point):
    """(closest point, tangent heading, signed lateral offset), left positive."""
    closest, heading, offset, _ = lane.centerline.project(p)
    return closest, heading, offset


@dataclass(eq=False)
class Town:
    name: str
    lanes: Dict[str, Lane]
    sidewalks: List[List[Point]] = field(default_factory=list)
    lights: List[TrafficLight] = field(default_factory=list)
    signs: List[SpeedSign] = field(default_factory=list)
    actors: List[Actor] = field(default_factory=list)
    # lane id -> index into ``lights`` of the light guarding its end
    lane_lights: Dict[str, int] = field(default_factory=dict)

    def predecessors(self, lane_id: str) -> List[str]:
        return sorted(l.id for l in self.lanes.values() if lane_id in l.successors.values())

    def nearest_lane(self, p: Point, heading: Optional[float] = None, max_dist: float = 5.0):
        """Closest lane to ``p``, preferring lanes aligned with ``heading``."""
        best, best_cost = None, math.inf
        for lane in self.lanes.values():
            _, h, off, _ = lane.centerline.project(p)
            if abs(off) > max_dist:
                continue
            cost = abs(off)
            if heading is not None:
                cost += 4.0 * abs(math.sin((heading - h) / 2.0))
            if cost < best_cost:
                best, best_cost = lane, cost
        return best


@dataclass(frozen=True)
class WorldState:
    time: float
    ego: Actor
    town: Town
    actors: Tuple[Actor, ...] = ()
    lights: Tuple[TrafficLight, ...] = ()
    ego_lane: Optional[str] = None
    speed_limit: int = 30
    wheelbase: float = 2.7

    @property
    def signs(self) -> List[SpeedSign]:
        return self.town.signs

    @property
    def front_axle(self) -> Pose2D:
        return self.ego.pose.forward(self.wheelbase / 2.0)


def world_at(town: Town, t: float, ego: Actor, extra_actors: Sequence[Actor] = (), **kw) -> WorldState:
    """World snapshot at time ``t`` with all scripted actors and lights evaluated."""
    actors = tuple(a for a in (place_actor(a, t) for a in (*town.actors, *extra_actors)) if a is not None)
    lights = tuple(l.at(t) for l in town.lights)
    return WorldState(time=t, ego=ego, town=town, actors=actors, lights=lights, **kw)


def place_actor(actor: Actor, t: float) -> Optional[Actor]:
    if actor.script is None:
        return actor
    pose, speed, alive = actor.script.state_at(t)
    if not alive:
        return None
    return dataclasses.replace(actor, pose=pose, speed=speed)


# --------------------------------------------------------------------------
# town files

class _LineLoader(yaml.SafeLoader):
    pass


class _LineDict(dict):
    line = 0


def _construct_mapping(loader, node, deep=False):
    d = _LineDict(loader.construct_mapping(node, deep=True))
    d.line = node.start_mark.line + 1
    return d


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_yaml(text: str):
    """Parse YAML keeping source line numbers on every mapping (``.line``)."""
    return yaml.load(text, Loader=_LineLoader)


def _where(node, source) -> str:
    line = getattr(node, "line", 0)
    return f"{source}:{line}" if line else str(source)


def _pose(value, node, source) -> Pose2D:
    try:
        vals = [float(v) for v in value]
        return Pose2D(vals[0], vals[1], vals[2] if len(vals) > 2 else 0.0)
    except (TypeError, ValueError, IndexError) as exc:
        raise TownError(f"{_where(node, source)}: bad pose {value!r}") from exc


def _points(value, node, source) -> List[Point]:
    try:
        return [(float(p[0]), float(p[1])) for p in value]
    except (TypeError, ValueError, IndexError) as exc:
        raise TownError(f"{_where(node, source)}: bad point list") from exc


def parse_actor(a, source="<actor>") -> Actor:
    kind = a.get("kind", "vehicle")
    default_extents = {"pedestrian": PEDESTRIAN_HALF_EXTENTS}.get(kind, VEHICLE_HALF_EXTENTS)
    extents = tuple(float(v) for v in a.get("half_extents", default_extents))
    script = None
    if "script" in a:
        sc = a["script"]
        try:
            path = Polyline(_points(sc["waypoints"], sc, source))
        except ValueError as exc:
            raise TownError(f"{_where(sc, source)}: {exc}") from exc
        script = ActorScript(path, float(sc.get("speed", 0.0)), float(sc.get("start_time", 0.0)),
                             bool(sc.get("despawn", False)))
        pose, speed, _ = script.state_at(0.0)
    else:
        if "pose" not in a:
            raise TownError(f"{_where(a, source)}: actor needs a pose or a script")
        pose, speed = _pose(a["pose"], a, source), float(a.get("speed", 0.0))
    try:
        return Actor(kind, pose, speed, extents, script, str(a.get("id", "")))
    except TownError as exc:
        raise TownError(f"{_where(a, source)}: {exc}") from exc


def parse_town(doc, source="<town>") -> Town:
    if not isinstance(doc, dict) or "lanes" not in doc:
        raise TownError(f"{source}: town file needs a 'lanes' list")
    lanes: Dict[str, Lane] = {}
    for ln in doc["lanes"]:
        lid = str(ln.get("id", ""))
        if not lid:
            raise TownError(f"{_where(ln, source)}: lane without id")
        if lid in lanes:
            raise TownError(f"{_where(ln, source)}: duplicate lane id {lid!r}")
        try:
            line = Polyline(_points(ln.get("centerline", []), ln, source))
        except ValueError as exc:
            raise TownError(f"{_where(ln, source)}: lane {lid}: {exc}") from exc
        width = float(ln.get("width", 4.0))
        limit = int(ln.get("speed_limit", 30))
        if width <= 0:
            raise TownError(f"{_where(ln, source)}: lane {lid}: width must be positive")
        if limit not in SPEED_LIMITS:
            raise TownError(f"{_where(ln, source)}: lane {lid}: speed limit {limit} not in {SPEED_LIMITS}")
        succ = {str(k): str(v) for k, v in (ln.get("successors") or {}).items()}
        bad = set(succ) - set(COMMANDS)
        if bad:
            raise TownError(f"{_where(ln, source)}: lane {lid}: unknown command(s) {sorted(bad)}")
        opp = ln.get("opposite")
        lanes[lid] = Lane(lid, line, width, limit, succ, str(opp) if opp is not None else None)
    for ln in doc["lanes"]:
        lane = lanes[str(ln["id"])]
        for cmd, target in lane.successors.items():
            if target not in lanes:
                raise TownError(f"{_where(ln, source)}: lane {lane.id}: {cmd} successor {target!r} does not exist")
        if lane.opposite_lane_id is not None and lane.opposite_lane_id not in lanes:
            raise TownError(f"{_where(ln, source)}: lane {lane.id}: opposite lane {lane.opposite_lane_id!r} does not exist")

    sidewalks = [_points(sw["polygon"] if isinstance(sw, dict) else sw, sw, source) for sw in doc.get("sidewalks") or []]

    lights, lane_lights = [], {}
    for i, lt in enumerate(doc.get("lights") or []):
        cyc = lt.get("cycle") or {}
        stop = _points(lt.get("stop_line", []), lt, source)
        if len(stop) != 2:
            raise TownError(f"{_where(lt, source)}: stop_line needs two points")
        try:
            light = TrafficLight(str(lt.get("id", f"light{i}")), _pose(lt["pose"], lt, source), (stop[0], stop[1]),
                                 (float(cyc.get("green", 10.0)), float(cyc.get("orange", 3.0)), float(cyc.get("red", 7.0))),
                                 float(lt.get("offset", 0.0)))
        except KeyError as exc:
            raise TownError(f"{_where(lt, source)}: light missing {exc}") from exc
        except TownError as exc:
            raise TownError(f"{_where(lt, source)}: {exc}") from exc
        if "lane" in lt:
            if str(lt["lane"]) not in lanes:
                raise TownError(f"{_where(lt, source)}: light {light.id}: lane {lt['lane']!r} does not exist")
            lane_lights[str(lt["lane"])] = len(lights)
        lights.append(light.at(0.0))

    signs = []
    for sg in doc.get("signs") or []:
        try:
            signs.append(SpeedSign(_pose(sg["pose"], sg, source), int(sg["limit"])))
        except (KeyError, TownError) as exc:
            raise TownError(f"{_where(sg, source)}: sign: {exc}") from exc

    actors = [parse_actor(a, source) for a in doc.get("actors") or []]
    return Town(str(doc.get("name", Path(str(source)).stem)), lanes, sidewalks, lights, signs, actors, lane_lights)


@functools.lru_cache(maxsize=None)
def _builtin_town(ref: str) -> Town:
    text = resources.files("calsim").joinpath("data", ref.replace("-", "_") + ".yaml").read_text()
    return parse_town(load_yaml(text), ref)


def load_town(ref: str) -> Town:
    """Load a built-in town by name (cached, treat as read-only) or a town file by path."""
    if ref in BUILTIN_TOWNS:
        return _builtin_town(ref)
    path = Path(ref)
    if not path.is_file():
        raise TownError(f"town file not found: {ref}")
    try:
        doc = load_yaml(path.read_text())
    except yaml.YAMLError as exc:
        raise TownError(f"{path}: {exc}") from exc
    return parse_town(doc, path)


def _r(v, nd=4) -> float:
    return round(float(v), nd)


def town_to_doc(town: Town) -> dict:
    """Serializable form of a town (inverse of :func:`parse_town`)."""
    lane_of = {i: lid for lid, i in town.lane_lights.items()}
    doc = {"name": town.name, "lanes": [], "sidewalks": [], "lights": [], "signs": [], "actors": []}
    for lane in town.lanes.values():
        d = {"id": lane.id, "centerline": [[_r(x), _r(y)] for x, y in lane.centerline.points],
             "width": lane.width, "speed_limit": lane.speed_limit, "successors": dict(lane.successors)}
        if lane.opposite_lane_id:
            d["opposite"] = lane.opposite_lane_id
        doc["lanes"].append(d)
    doc["sidewalks"] = [[[_r(x), _r(y)] for x, y in poly] for poly in town.sidewalks]
    for i, lt in enumerate(town.lights):
        d = {"id": lt.id, "pose": [_r(lt.pose.x), _r(lt.pose.y), _r(lt.pose.heading, 6)],
             "stop_line": [[_r(x), _r(y)] for x, y in lt.stop_line],
             "cycle": {"green": float(lt.cycle[0]), "orange": float(lt.cycle[1]), "red": float(lt.cycle[2])},
             "offset": float(lt.offset)}
        if i in lane_of:
            d["lane"] = lane_of[i]
        doc["lights"].append(d)
    doc["signs"] = [{"pose": [_r(s.pose.x), _r(s.pose.y), _r(s.pose.heading, 6)], "limit": s.limit}
                    for s in town.signs]
    for a in town.actors:
        d = {"id": a.id, "kind": a.kind, "half_extents": [float(v) for v in a.half_extents]}
        if a.script is None:
            d["pose"] = [_r(a.pose.x), _r(a.pose.y), _r(a.pose.heading, 6)]
        else:
            d["script"] = {"waypoints": a.script.path.points.tolist(), "speed": a.script.speed,
                           "start_time": a.script.start_time, "despawn": a.script.despawn}
        doc["actors"].append(d)
    return doc
