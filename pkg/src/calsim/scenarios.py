"""Scenario files and the built-in closed-loop scenarios.

A scenario file (YAML) looks like::

    name: demo
    town: town-a            # built-in name, town file path, or "straight"
    road: {length: 600, limit: 30}   # only for town: straight
    start: {lane: J00-J01, s: 10, offset: 0.0, heading: 0.0, speed: 0.0}
    goal: {lane: J21-J22, s: 40}     # optional when time_limit is given
    time_limit: 120         # optional; default derives from the route length
    seed: 0
    actors: [...]           # same schema as town-file actors
    lights: {"L:J00-J01": {offset: 4, cycle: {green: 3, orange: 1, red: 20}}}
    config: {...}           # controller/vehicle/perception/episode sections

The scenario's ``config`` section sits between the defaults and a
user-supplied config file in precedence.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from .config import build, merge
from .geometry import Polyline, Pose2D
from .town import (PEDESTRIAN_HALF_EXTENTS, Actor, ActorScript, Town, TownError, load_town, load_yaml,
                   parse_actor)
from .towngen import straight_road
from .simulation import EpisodeSpec, GoalSpec, StartSpec

KMH = 1.0 / 3.6


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    town: Union[str, Town]
    start: StartSpec
    goal: Optional[GoalSpec] = None
    actors: Tuple[Actor, ...] = ()
    lights: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    time_limit: Optional[float] = None
    seed: int = 0
    config: Dict[str, Any] = field(default_factory=dict)

    def episode(self, cfg: Optional[Dict[str, Any]] = None, seed: Optional[int] = None) -> EpisodeSpec:
        """EpisodeSpec under a merged config (defaults + ``self.config`` when None)."""
        from .config import default_config

        cfg = cfg if cfg is not None else merge(default_config(), self.config)
        controller, vehicle, perception, ep = build(cfg)
        return EpisodeSpec(self.town, self.start, self.goal, self.actors, dict(self.lights), perception,
                           controller, vehicle, self.time_limit, self.seed if seed is None else int(seed),
                           name=self.name, **ep)


def _need(doc, key, source):
    if key not in doc:
        line = getattr(doc, "line", None)
        where = f"{source}:{line}" if line else source
        raise ScenarioError(f"{where}: scenario needs '{key}'")
    return doc[key]


def parse_scenario(doc, source: str = "<scenario>", base_dir: Optional[Path] = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: scenario must be a mapping")
    town_ref = str(_need(doc, "town", source))
    if town_ref == "straight":
        road = doc.get("road") or {}
        town: Union[str, Town] = straight_road(float(road.get("length", 600.0)), int(road.get("limit", 30)))
    else:
        cand = (base_dir / town_ref) if base_dir is not None else Path(town_ref)
        town = str(cand) if cand.exists() else town_ref
        try:
            town = load_town(town)
        except (TownError, FileNotFoundError, KeyError) as exc:
            raise ScenarioError(f"{source}: cannot load town {town_ref!r}: {exc}") from exc
    st = _need(doc, "start", source)
    start = StartSpec(str(_need(st, "lane", source)), float(st.get("s", 0.0)), float(st.get("offset", 0.0)),
                      float(st.get("heading", 0.0)), float(st.get("speed", 0.0)))
    goal = None
    if doc.get("goal"):
        g = doc["goal"]
        goal = GoalSpec(str(_need(g, "lane", source)), float(_need(g, "s", source)))
    for lane in [start.lane] + ([goal.lane] if goal else []):
        if lane not in town.lanes:
            raise ScenarioError(f"{source}: lane {lane!r} not in town {town.name!r}")
    try:
        actors = tuple(parse_actor(a, source) for a in doc.get("actors") or [])
    except TownError as exc:
        raise ScenarioError(str(exc)) from exc
    lights = {str(k): dict(v) for k, v in (doc.get("lights") or {}).items()}
    known = {l.id for l in town.lights}
    for lid in lights:
        if lid not in known:
            raise ScenarioError(f"{source}: unknown traffic light {lid!r}")
    tl = doc.get("time_limit")
    if goal is None and tl is None:
        raise ScenarioError(f"{source}: scenario without goal needs a time_limit")
    return Scenario(str(doc.get("name", Path(source).stem)), town, start, goal, actors, lights,
                    float(tl) if tl is not None else None, int(doc.get("seed", 0)),
                    dict(doc.get("config") or {}))


def load_scenario(ref: str) -> Scenario:
    """Built-in scenario name or scenario file path."""
    if ref in BUILTIN:
        return BUILTIN[ref]()
    path = Path(ref)
    if not path.exists():
        raise ScenarioError(f"no built-in scenario or file named {ref!r}")
    return parse_scenario(load_yaml(path.read_text()), str(path), path.parent)


# --------------------------------------------------------------------------
# built-in scenarios

def demo() -> Scenario:
    """Five-branch route across town-a."""
    return Scenario("demo", "town-a", StartSpec("J00-J01", 10.0), GoalSpec("J21-J22", 40.0),
                    config={"controller": {"cruise_cap": 20.0}})


def lateral(offset: float = 1.0, speed_kmh: float = 20.0) -> Scenario:
    """Straight road, start displaced ``offset`` m left of the centerline."""
    return Scenario("lateral", straight_road(600.0), StartSpec("east", 10.0, offset=offset, speed=speed_kmh * KMH),
                    time_limit=10.0, config={"controller": {"cruise_cap": speed_kmh}})


def swaying(damping: float = 0.5, sigma_d: float = 0.1, seed: int = 7) -> Scenario:
    """Straight cruise with noisy centerline distance."""
    return Scenario("swaying", straight_road(1200.0), StartSpec("east", 10.0, speed=20 * KMH), time_limit=60.0,
                    seed=seed, config={"controller": {"cruise_cap": 20.0, "damping": damping},
                                       "perception": {"preset": "clean", "sigma_d": sigma_d}})


def following(leader_kmh: float = 30.0, limit: int = 60) -> Scenario:
    """Ego behind a constant-speed scripted leader on a long straight road."""
    lead = Actor("vehicle", Pose2D(40.0, -2.0, 0.0), leader_kmh * KMH,
                 script=ActorScript(Polyline([(40.0, -2.0), (4000.0, -2.0)]), leader_kmh * KMH), id="leader")
    return Scenario("following", straight_road(4000.0, limit=limit), StartSpec("east", 10.0, speed=leader_kmh * KMH),
                    actors=(lead,), time_limit=120.0)


def hazard(ahead: float = 15.0, speed_kmh: float = 20.0, walk: float = 1.5) -> Scenario:
    """A pedestrian crosses the ego path; it reaches the lane edge when the
    crossing point is ``ahead`` m in front of the ego front axle."""
    v = speed_kmh * KMH
    t_edge = (5.5 - 4.0) / walk  # sidewalk edge at y = -4
    start_s = 10.0
    x_cross = start_s + ahead + v * t_edge
    ped = Actor("pedestrian", Pose2D(x_cross, -5.5, 0.0), 0.0, PEDESTRIAN_HALF_EXTENTS,
                script=ActorScript(Polyline([(x_cross, -5.5), (x_cross, 5.5)]), walk), id="pedestrian")
    return Scenario("hazard", straight_road(600.0), StartSpec("east", start_s, speed=v), actors=(ped,),
                    time_limit=12.0, config={"controller": {"cruise_cap": speed_kmh}})


RED_LIGHT_LANE = "J00-J01"


def red_light(town: str = "town-a", red_for: float = 20.0) -> Scenario:
    """Approach a light that is red from t=0 until ``red_for`` s, then green."""
    lid = f"L:{RED_LIGHT_LANE}"
    return Scenario(f"red-light-{town}", town, StartSpec(RED_LIGHT_LANE, 5.0, speed=20 * KMH),
                    GoalSpec("J01-J02", 20.0),
                    lights={lid: {"offset": 4.0, "cycle": {"green": 3.0, "orange": 1.0, "red": red_for}}},
                    time_limit=80.0, config={"controller": {"cruise_cap": 20.0}})


BUILTIN: Dict[str, Callable[[], Scenario]] = {
    "demo": demo,
    "lateral": lateral,
    "swaying": swaying,
    "following": following,
    "hazard": hazard,
    "red-light-a": lambda: red_light("town-a"),
    "red-light-b": lambda: red_light("town-b"),
}


def with_config(scn: Scenario, **sections) -> Scenario:
    return replace(scn, config=merge(scn.config, sections))
