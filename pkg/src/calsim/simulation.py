"""Vehicle kinematics, world stepping and the closed-loop episode runner."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .affordances import OffRoadError, advance_lane, compute_affordances, select_reference_path
from .controller import Controller, ControllerConfig
from .geometry import Pose2D
from .infractions import Infraction, InfractionMonitor
from .metrics import time_limit as benchmark_time_limit
from .perception import PerceptionModel, PerceptionSimulator, preset
from .planner import CommandStream, Route, RouteComplete, route_between
from .town import EGO_HALF_EXTENTS, Actor, Town, WorldState, load_town, world_at

DT = 0.05


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7
    a_max: float = 3.0
    b_max: float = 8.0
    drag: float = 0.02

    def __post_init__(self):
        if min(self.wheelbase, self.a_max, self.b_max) <= 0 or self.drag < 0:
            raise ValueError(f"invalid vehicle parameters {self}")


@dataclass(frozen=True)
class VehicleState:
    """Rear-axle reference point, heading and forward speed."""

    x: float
    y: float
    heading: float
    v: float = 0.0

    def center(self, params: VehicleParams) -> Pose2D:
        h = self.heading
        half = 0.5 * params.wheelbase
        return Pose2D(self.x + half * math.cos(h), self.y + half * math.sin(h), h)


def step_vehicle(state: VehicleState, throttle: float, brake: float, wheel_angle: float,
                 params: VehicleParams, dt: float = DT) -> VehicleState:
    """Forward-Euler kinematic bicycle; ``wheel_angle`` > 0 turns left."""
    v = state.v
    a = params.a_max * throttle - params.b_max * brake - params.drag * v
    v_new = max(0.0, v + a * dt)
    h = state.heading
    return VehicleState(state.x + v * math.cos(h) * dt, state.y + v * math.sin(h) * dt,
                        h + (v / params.wheelbase) * math.tan(wheel_angle) * dt, v_new)


def step_world(world: WorldState, dt: float = DT, extra_actors: Sequence[Actor] = ()) -> WorldState:
    """Advance scripted actors and lights; the ego is left untouched."""
    return world_at(world.town, world.time + dt, world.ego, extra_actors, ego_lane=world.ego_lane,
                    speed_limit=world.speed_limit, wheelbase=world.wheelbase)


# --------------------------------------------------------------------------
# episodes

@dataclass(frozen=True)
class StartSpec:
    lane: str
    s: float = 0.0
    offset: float = 0.0  # m, left positive, applied at the front axle
    heading: float = 0.0  # rad, relative to the lane tangent
    speed: float = 0.0  # m/s


@dataclass(frozen=True)
class GoalSpec:
    lane: str
    s: float


@dataclass(frozen=True)
class EpisodeSpec:
    town: Union[str, Town]
    start: StartSpec
    goal: Optional[GoalSpec] = None
    actors: Tuple[Actor, ...] = ()
    lights: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    perception: Union[str, PerceptionModel] = "clean"
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    time_limit: Optional[float] = None
    seed: int = 0
    dt: float = DT
    goal_radius: float = 2.0
    activation_distance: float = 30.0
    name: str = "episode"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.goal is None and self.time_limit is None:
            raise ValueError("an episode without goal needs a time limit")


TRACE_COLUMNS = (
    "step", "time_s", "x_m", "y_m", "heading_rad", "speed_mps", "lane", "command", "speed_limit_kmh",
    "true_hazard", "true_red", "true_sign_kmh", "true_ell_m", "true_psi_rad", "true_d_m",
    "p_hazard", "p_red", "perc_sign_kmh", "perc_ell_m", "perc_psi_rad", "perc_d_m",
    "state", "throttle", "brake", "steer_rad", "target_mps",
)


@dataclass
class EpisodeTrace:
    spec: EpisodeSpec
    rows: List[Dict[str, Any]]
    success: bool
    reason: str
    events: List[Infraction]
    route: Optional[Route] = None

    @property
    def duration(self) -> float:
        return self.rows[-1]["time_s"] if self.rows else 0.0

    @property
    def distance_m(self) -> float:
        xy = np.array([[r["x_m"], r["y_m"]] for r in self.rows], float)
        return float(np.sum(np.hypot(*np.diff(xy, axis=0).T))) if len(xy) > 1 else 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self) -> str:
        return trace_to_csv(self.rows)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trace_to_csv(rows: Sequence[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in TRACE_COLUMNS])
    return buf.getvalue()


_INT_COLS = {"step", "true_hazard", "true_red"}
_STR_COLS = {"lane", "command", "state"}
_OPT_INT_COLS = {"speed_limit_kmh", "true_sign_kmh", "perc_sign_kmh"}


def read_trace(path) -> List[Dict[str, Any]]:
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row: Dict[str, Any] = {}
            for k, v in raw.items():
                if k in _STR_COLS:
                    row[k] = v
                elif k in _INT_COLS:
                    row[k] = int(v)
                elif k in _OPT_INT_COLS:
                    row[k] = int(v) if v else None
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


def apply_light_overrides(town: Town, overrides: Dict[str, Dict[str, Any]]) -> Town:
    if not overrides:
        return town
    by_id = {l.id: i for i, l in enumerate(town.lights)}
    lights = list(town.lights)
    for lid, ov in overrides.items():
        if lid not in by_id:
            raise KeyError(f"unknown traffic light {lid!r}")
        l = lights[by_id[lid]]
        cyc = ov.get("cycle")
        if isinstance(cyc, dict):
            cyc = (cyc.get("green", l.cycle[0]), cyc.get("orange", l.cycle[1]), cyc.get("red", l.cycle[2]))
        lights[by_id[lid]] = dataclasses.replace(
            l, offset=float(ov.get("offset", l.offset)),
            cycle=tuple(float(c) for c in (cyc or l.cycle))).at(0.0)
    return dataclasses.replace(town, lights=lights)


def resolve_town(ref: Union[str, Town]) -> Town:
    return ref if isinstance(ref, Town) else load_town(ref)


def initial_state(town: Town, start: StartSpec, params: VehicleParams) -> VehicleState:
    lane = town.lanes[start.lane]
    (x, y), h = lane.centerline.point_at(start.s)
    nx, ny = -math.sin(h), math.cos(h)
    fx, fy = x + start.offset * nx, y + start.offset * ny
    heading = h + start.heading
    L = params.wheelbase
    return VehicleState(fx - L * math.cos(heading), fy - L * math.sin(heading), heading, start.speed)


def run_episode(spec: EpisodeSpec, max_steps: Optional[int] = None) -> EpisodeTrace:
    """Closed loop: affordances -> perception -> command -> control -> actuation.

    Ends on reaching the goal, on the time limit (a failure when there is a
    goal, success for open-ended runs) or when the ego leaves the road.
    """
    town = apply_light_overrides(resolve_town(spec.town), spec.lights)
    params = spec.vehicle
    dt = spec.dt
    route = route_between(town, (spec.start.lane, spec.start.s), (spec.goal.lane, spec.goal.s)) \
        if spec.goal is not None else None
    limit_s = spec.time_limit if spec.time_limit is not None else benchmark_time_limit(route.length)
    stream = CommandStream(route, spec.activation_distance) if route is not None else None
    goal_xy = town.lanes[spec.goal.lane].centerline.point_at(spec.goal.s)[0] if spec.goal else None

    model = spec.perception if isinstance(spec.perception, PerceptionModel) else preset(spec.perception)
    perception = PerceptionSimulator(model.with_seed(spec.seed))
    speed_limit = town.lanes[spec.start.lane].speed_limit
    controller = Controller(spec.controller, speed_limit, dt)
    monitor = InfractionMonitor(town, params.wheelbase)

    vs = initial_state(town, spec.start, params)
    ego_lane: Optional[str] = spec.start.lane
    rows: List[Dict[str, Any]] = []
    success, reason = False, "timeout"
    step = 0
    while True:
        t = step * dt
        center = vs.center(params)
        ego = Actor("vehicle", center, vs.v, EGO_HALF_EXTENTS, id="ego")
        world = world_at(town, t, ego, spec.actors, ego_lane=ego_lane,
                         speed_limit=controller.speed_limit, wheelbase=params.wheelbase)
        if goal_xy is not None and math.hypot(center.x - goal_xy[0], center.y - goal_xy[1]) <= spec.goal_radius:
            success, reason = True, "goal"
            break
        if t > limit_s + 1e-9 or (max_steps is not None and step >= max_steps):
            if goal_xy is None:  # open-ended scenario: surviving the horizon is success
                success, reason = True, "horizon"
            break
        front = world.front_axle
        command = "straight"
        if stream is not None and not stream.complete:
            try:
                command = stream.next_command(front.position, ego_lane)
            except RouteComplete:
                command = "straight"
        try:
            path = select_reference_path(town, ego_lane, front, command)
            truth = compute_affordances(world, command, path)
        except OffRoadError:
            reason = "off_road"
            break
        perceived = perception.perceive(truth, step)
        out = controller.step(perceived, vs.v, command)
        row = {
            "step": step, "time_s": t, "x_m": center.x, "y_m": center.y, "heading_rad": center.heading,
            "speed_mps": vs.v, "lane": ego_lane or "", "command": command, "speed_limit_kmh": controller.speed_limit,
            "true_hazard": int(truth.hazard_stop), "true_red": int(truth.red_light),
            "true_sign_kmh": truth.speed_sign, "true_ell_m": truth.vehicle_distance,
            "true_psi_rad": truth.relative_angle, "true_d_m": truth.center_distance,
            "p_hazard": perceived.p_hazard, "p_red": perceived.p_red, "perc_sign_kmh": perceived.speed_sign,
            "perc_ell_m": perceived.vehicle_distance, "perc_psi_rad": perceived.relative_angle,
            "perc_d_m": perceived.center_distance, "state": out.active_state.label,
            "throttle": float(out.throttle), "brake": float(out.brake), "steer_rad": float(out.steer),
            "target_mps": float(out.target_speed),
        }
        rows.append(row)
        monitor.update_from_row(row, world)

        # controller steer is positive to the right; the bicycle model turns left for positive angles
        vs = step_vehicle(vs, out.throttle, out.brake, -out.steer, params, dt)
        ego_lane = advance_lane(town, path, vs.center(params).forward(0.5 * params.wheelbase))
        step += 1
    return EpisodeTrace(spec, rows, success, reason, list(monitor.events), route)
