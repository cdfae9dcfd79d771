"""Goal-directed navigation benchmark: episode generation, running, reporting.

Episodes are generated per (task, town) from the suite seed, so every
perception tier drives the same 25 routes. Each episode result is reduced to
order-independent sums before aggregation, so a parallel run produces the
same report as a serial one.
"""
from __future__ import annotations

import csv
import io
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .config import build, default_config, merge
from .geometry import Polyline, Pose2D
from .infractions import KINDS
from .metrics import jerk_series, km_between_infractions, time_limit
from .planner import NoRouteError, Route, route_between
from .simulation import EpisodeSpec, GoalSpec, StartSpec, run_episode
from .town import PEDESTRIAN_HALF_EXTENTS, Actor, ActorScript, Town, load_town

TASKS = ("straight", "one_turn", "navigation", "nav_dynamic")
TIERS = ("clean", "train", "test")
FAIR_CRUISE_KMH = 20.0
KMH = 1.0 / 3.6


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class Suite:
    name: str = "desk"
    tasks: Tuple[str, ...] = TASKS
    tiers: Tuple[str, ...] = ("clean",)
    towns: Tuple[str, ...] = ("town-a",)
    episodes: int = 25
    seed: int = 0
    fair: bool = True

    def __post_init__(self):
        bad = set(self.tasks) - set(TASKS)
        if bad:
            raise SuiteError(f"unknown task(s) {sorted(bad)}")
        if self.episodes < 1:
            raise SuiteError("episodes must be >= 1")
        if not self.tasks or not self.tiers or not self.towns:
            raise SuiteError("suite needs at least one task, tier and town")


def parse_suite(doc: Dict[str, Any], source: str = "<suite>") -> Suite:
    if not isinstance(doc, dict):
        raise SuiteError(f"{source}: suite must be a mapping")
    known = {"name", "tasks", "tiers", "towns", "episodes", "seed", "fair"}
    unknown = set(doc) - known
    if unknown:
        raise SuiteError(f"{source}: unknown key(s) {sorted(unknown)}")
    kw: Dict[str, Any] = {}
    for k in ("tasks", "tiers", "towns"):
        if k in doc:
            v = doc[k]
            kw[k] = tuple(str(x) for x in ([v] if isinstance(v, str) else v))
    for k, cast in (("name", str), ("episodes", int), ("seed", int), ("fair", bool)):
        if k in doc:
            kw[k] = cast(doc[k])
    try:
        return Suite(**kw)
    except SuiteError as exc:
        raise SuiteError(f"{source}: {exc}") from exc


def load_suite(ref: str) -> Suite:
    if ref in BUILTIN_SUITES:
        return BUILTIN_SUITES[ref]
    path = Path(ref)
    if not path.is_file():
        raise SuiteError(f"no built-in suite or file named {ref!r}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SuiteError(f"{path}: {exc}") from exc
    return parse_suite(doc, str(path))


BUILTIN_SUITES = {
    "desk": Suite("desk"),
    "desk-table1": Suite("desk-table1", tasks=("straight", "one_turn", "navigation")),
    "full": Suite("full", tiers=TIERS, towns=("town-a", "town-b")),
    "smoke": Suite("smoke", tasks=("straight",), episodes=2),
}


# --------------------------------------------------------------------------
# episode generation

@dataclass(frozen=True)
class EpisodePlan:
    """A generated episode before perception/controller config is attached."""

    id: str
    task: str
    town: str
    start: StartSpec
    goal: GoalSpec
    route_length: float
    turns: int
    actors: Tuple[Actor, ...] = ()


def road_lanes(town: Town) -> List[str]:
    """Lanes between junctions (connector lanes inside junctions excluded)."""
    return sorted(lid for lid in town.lanes if lid.count("-") == 1)


def route_lanes(town: Town, route: Route, start_lane: str, goal_lane: str) -> List[str]:
    lanes = [start_lane]

    def walk_to(target):
        for _ in range(len(town.lanes)):
            if lanes[-1] == target:
                return
            lanes.append(town.lanes[lanes[-1]].successors["straight"])
        raise RuntimeError("route lanes do not connect")

    for step in route.steps:
        walk_to(step.node)
        lanes.extend(step.lanes)
    walk_to(goal_lane)
    return lanes


def _task_ok(task: str, route: Route) -> bool:
    turns = sum(c != "straight" for c in route.commands)
    if task == "straight":
        return turns == 0 and 60.0 <= route.length <= 400.0
    if task == "one_turn":
        return turns == 1 and route.length <= 500.0
    return turns >= 2 and 250.0 <= route.length <= 900.0


def _path_along(town: Town, lanes: Sequence[str], s0: float) -> Polyline:
    line = town.lanes[lanes[0]].centerline
    for lid in lanes[1:]:
        line = line.concat(town.lanes[lid].centerline)
    pts = [line.point_at(s0)[0]] + [tuple(p) for p, c in zip(line.points, line.cum) if c > s0 + 1e-6]
    return Polyline(pts)


def _scripted(kind: str, path: Polyline, speed: float, start_time: float, aid: str,
              half_extents=None) -> Actor:
    script = ActorScript(path, speed, start_time, despawn=True)
    pose, v, _ = script.state_at(0.0)
    kw = {"half_extents": half_extents} if half_extents else {}
    return Actor(kind, pose, v, script=script, id=aid, **kw)


def dynamic_actors(town: Town, lanes: Sequence[str], start_s: float, rng: np.random.Generator,
                   horizon: float) -> Tuple[Actor, ...]:
    """A leader on the ego route, oncoming cars and crossing pedestrians."""
    actors = []
    gap = float(rng.uniform(25.0, 50.0))
    actors.append(_scripted("vehicle", _path_along(town, lanes, start_s + gap),
                            float(rng.uniform(20.0, 25.0)) * KMH, 0.0, "leader"))
    roads = [lid for lid in lanes if lid.count("-") == 1]
    for k in range(2):
        lid = roads[int(rng.integers(len(roads)))]
        opp = town.lanes[lid].opposite_lane_id
        if opp is None:
            continue
        chain = [opp]
        while len(chain) < 4 and town.lanes[chain[-1]].successors.get("straight"):
            chain.append(town.lanes[chain[-1]].successors["straight"])
        actors.append(_scripted("vehicle", _path_along(town, chain, 0.0), float(rng.uniform(20.0, 30.0)) * KMH,
                                float(rng.uniform(0.0, 0.5 * horizon)), f"oncoming{k}"))
    for k in range(2):
        lid = roads[int(rng.integers(len(roads)))]
        lane = town.lanes[lid]
        (x, y), h = lane.centerline.point_at(float(rng.uniform(0.3, 0.7)) * lane.length)
        nx, ny = -math.sin(h), math.cos(h)
        # from the right-hand sidewalk across both lanes to the far sidewalk
        a = (x - 3.5 * nx, y - 3.5 * ny)
        b = (x + 7.5 * nx, y + 7.5 * ny)
        actors.append(_scripted("pedestrian", Polyline([a, b]), float(rng.uniform(1.2, 1.6)),
                                float(rng.uniform(0.0, 0.8 * horizon)), f"pedestrian{k}",
                                PEDESTRIAN_HALF_EXTENTS))
    return tuple(actors)


def generate_episodes(task: str, town_name: str, n: int, seed: int) -> List[EpisodePlan]:
    """``n`` distinct episodes of ``task`` in ``town_name``, a pure function of ``seed``."""
    town = load_town(town_name)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, TASKS.index(task),
                                                                       sum(map(ord, town_name))])))
    roads = road_lanes(town)
    plans: List[EpisodePlan] = []
    seen = set()
    attempts = 0
    while len(plans) < n:
        attempts += 1
        if attempts > 20000:
            raise SuiteError(f"could not generate {n} {task} episodes in {town_name}")
        sl = roads[int(rng.integers(len(roads)))]
        gl = roads[int(rng.integers(len(roads)))]
        s0 = float(np.round(rng.uniform(5.0, town.lanes[sl].length - 15.0), 1))
        g0 = float(np.round(rng.uniform(10.0, town.lanes[gl].length - 10.0), 1))
        if (sl, s0, gl, g0) in seen:
            continue
        try:
            route = route_between(town, (sl, s0), (gl, g0))
        except NoRouteError:
            continue
        if not _task_ok("navigation" if task == "nav_dynamic" else task, route):
            continue
        seen.add((sl, s0, gl, g0))
        actors: Tuple[Actor, ...] = ()
        if task == "nav_dynamic":
            lanes = route_lanes(town, route, sl, gl)
            actors = dynamic_actors(town, lanes, s0, rng, time_limit(route.length))
        turns = sum(c != "straight" for c in route.commands)
        plans.append(EpisodePlan(f"{task}/{town_name}/{len(plans):02d}", task, town_name, StartSpec(sl, s0),
                                 GoalSpec(gl, g0), route.length, turns, actors))
    return plans


# --------------------------------------------------------------------------
# running

@dataclass
class EpisodeResult:
    id: str
    task: str
    tier: str
    town: str
    seed: int
    success: bool
    reason: str
    distance_km: float
    duration_s: float
    route_length_m: float
    events: List[Tuple[str, float, float, float]] = field(default_factory=list)
    median_abs_d: float = math.nan
    # sum of squares and sample counts of the three jerk classes
    jerk_sums: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    jerk_counts: Tuple[int, int, int] = (0, 0, 0)
    error: str = ""


def _episode_seed(suite_seed: int, plan_id: str, tier: str) -> int:
    ss = np.random.SeedSequence([suite_seed] + [ord(c) for c in f"{plan_id}|{tier}"])
    return int(ss.generate_state(1)[0])


def episode_spec(plan: EpisodePlan, tier: str, cfg: Dict[str, Any], seed: int) -> EpisodeSpec:
    controller, vehicle, _, ep = build(cfg)
    return EpisodeSpec(plan.town, plan.start, plan.goal, plan.actors, {}, tier, controller, vehicle,
                       None, seed, name=plan.id, **ep)


def run_one(job) -> EpisodeResult:
    """Worker entry point; never raises."""
    plan, tier, cfg, seed = job
    base = dict(id=plan.id, task=plan.task, tier=tier, town=plan.town, seed=seed,
                route_length_m=plan.route_length)
    try:
        trace = run_episode(episode_spec(plan, tier, cfg, seed))
        d = np.abs(trace.column("true_d_m"))
        cmd = trace.column("command")
        jl, js, jt = jerk_series(trace.column("speed_mps"), trace.column("heading_rad"),
                                 (cmd == "left") | (cmd == "right"), trace.spec.dt) \
            if len(trace.rows) >= 3 else (np.zeros(0),) * 3
        return EpisodeResult(success=trace.success, reason=trace.reason, distance_km=trace.distance_m / 1000.0,
                             duration_s=trace.duration,
                             events=[(e.kind, e.time, e.x, e.y) for e in trace.events],
                             median_abs_d=float(np.median(d)) if len(d) else math.nan,
                             jerk_sums=tuple(float(np.sum(np.square(j))) for j in (jl, js, jt)),
                             jerk_counts=tuple(int(len(j)) for j in (jl, js, jt)), **base)
    except Exception as exc:  # recorded, never aborts the suite
        return EpisodeResult(success=False, reason="error", distance_km=0.0, duration_s=0.0,
                             error=f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}", **base)


def suite_config(suite: Suite, cfg: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Apply fair-comparison mode: cap cruising at 20 km/h unless a cap is set."""
    cfg = merge(default_config(), cfg or {})
    if suite.fair and cfg["controller"].get("cruise_cap") is None:
        cfg["controller"]["cruise_cap"] = FAIR_CRUISE_KMH
    return cfg


def build_jobs(suite: Suite, cfg: Dict[str, Any]):
    jobs = []
    for town in suite.towns:
        for task in suite.tasks:
            plans = generate_episodes(task, town, suite.episodes, suite.seed)
            for tier in suite.tiers:
                for plan in plans:
                    jobs.append((plan, tier, cfg, _episode_seed(suite.seed, plan.id, tier)))
    return jobs


def run_benchmark(suite: Suite, cfg: Optional[Dict[str, Any]] = None, parallel: int = 1,
                  progress=None) -> "BenchmarkReport":
    if parallel < 1:
        raise SuiteError("parallel must be >= 1")
    cfg = suite_config(suite, cfg)
    jobs = build_jobs(suite, cfg)
    results: List[EpisodeResult] = []
    if parallel == 1:
        for job in jobs:
            results.append(run_one(job))
            if progress:
                progress(results[-1])
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for res in pool.map(run_one, jobs, chunksize=1):
                results.append(res)
                if progress:
                    progress(res)
    return aggregate(suite, results, cfg)


# --------------------------------------------------------------------------
# reporting

@dataclass
class BenchmarkReport:
    suite: Suite
    config: Dict[str, Any]
    results: List[EpisodeResult]
    cells: Dict[str, Dict[str, Any]]
    infractions: Dict[str, Dict[str, Any]]
    comfort: Dict[str, Dict[str, Any]]

    def cell(self, task: str, tier: str, town: str) -> Dict[str, Any]:
        return self.cells[cell_key(task, tier, town)]

    def to_json(self) -> str:
        doc = {
            "suite": asdict(self.suite),
            "config": self.config,
            "cells": self.cells,
            "infractions": self.infractions,
            "comfort": self.comfort,
            "episodes": [_result_doc(r) for r in self.results],
        }
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        return format_tables(self)

    def episodes_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "task", "tier", "town", "seed", "success", "reason", "distance_km", "duration_s",
                    "route_length_m", "median_abs_d_m"] + list(KINDS))
        for r in self.results:
            counts = {k: 0 for k in KINDS}
            for e in r.events:
                counts[e[0]] += 1
            w.writerow([r.id, r.task, r.tier, r.town, r.seed, int(r.success), r.reason, repr(r.distance_km),
                        repr(r.duration_s), repr(r.route_length_m), repr(r.median_abs_d)]
                       + [counts[k] for k in KINDS])
        return buf.getvalue()

    def write(self, out_dir) -> List[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"report.json": self.to_json(), "report.txt": self.to_text(),
                 "episodes.csv": self.episodes_csv()}
        paths = []
        for name, text in files.items():
            (out / name).write_text(text)
            paths.append(out / name)
        return paths


def cell_key(task: str, tier: str, town: str) -> str:
    return f"{task}|{tier}|{town}"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(x.item())
    return x


def _result_doc(r: EpisodeResult) -> Dict[str, Any]:
    d = asdict(r)
    d["events"] = [{"kind": k, "time_s": t, "x_m": x, "y_m": y} for k, t, x, y in r.events]
    return d


def _rms(sums: float, count: int) -> float:
    return math.sqrt(sums / count) if count else math.nan


def aggregate(suite: Suite, results: Sequence[EpisodeResult], cfg: Dict[str, Any]) -> BenchmarkReport:
    """Order-independent: results are sorted by (task, tier, town, id) first."""
    results = sorted(results, key=lambda r: (TASKS.index(r.task), r.tier, r.town, r.id))
    cells: Dict[str, Dict[str, Any]] = {}
    for task in suite.tasks:
        for tier in suite.tiers:
            for town in suite.towns:
                rs = [r for r in results if (r.task, r.tier, r.town) == (task, tier, town)]
                ok = sum(r.success for r in rs)
                cells[cell_key(task, tier, town)] = {
                    "task": task, "tier": tier, "town": town, "episodes": len(rs), "successes": ok,
                    "success_pct": 100.0 * ok / len(rs) if rs else 0.0,
                    "errors": sum(bool(r.error) for r in rs),
                    "failed": [r.id for r in rs if not r.success],
                }

    # infraction distances come from the dynamic task when present, else all tasks
    infr_tasks = ("nav_dynamic",) if "nav_dynamic" in suite.tasks else tuple(suite.tasks)
    infractions: Dict[str, Dict[str, Any]] = {}
    comfort: Dict[str, Dict[str, Any]] = {}
    for tier in suite.tiers:
        for town in suite.towns:
            key = f"{tier}|{town}"
            rs = [r for r in results if r.tier == tier and r.town == town and r.task in infr_tasks]
            km = sum(r.distance_km for r in rs)
            counts = {k: sum(1 for r in rs for e in r.events if e[0] == k) for k in KINDS}
            infractions[key] = {"tier": tier, "town": town, "tasks": list(infr_tasks), "total_km": km,
                                "counts": counts,
                                "km_between": {k: km_between_infractions(round(km, 3), c) for k, c in counts.items()}}
            ra = [r for r in results if r.tier == tier and r.town == town and not r.error]
            meds = [r.median_abs_d for r in ra if math.isfinite(r.median_abs_d)]
            sums = [sum(r.jerk_sums[i] for r in ra) for i in range(3)]
            cnts = [sum(r.jerk_counts[i] for r in ra) for i in range(3)]
            comfort[key] = {"tier": tier, "town": town,
                            "median_centerline_distance_m": float(np.median(meds)) if meds else math.nan,
                            "rms_jerk_long": _rms(sums[0], cnts[0]),
                            "rms_jerk_lat_straight": _rms(sums[1], cnts[1]),
                            "rms_jerk_lat_turns": _rms(sums[2], cnts[2])}
    return BenchmarkReport(suite, cfg, list(results), cells, infractions, comfort)


_TASK_LABEL = {"straight": "Straight", "one_turn": "One turn", "navigation": "Navigation",
               "nav_dynamic": "Nav. dynamic"}
_KIND_LABEL = {"opposite_lane": "Opposite lane", "sidewalk": "Sidewalk", "collision_static": "Collision-static",
               "collision_car": "Collision-car", "collision_pedestrian": "Collision-pedestrian",
               "red_light_violation": "Red light"}


def _table(title: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    sep = "-" * len(line(header))
    return "\n".join([title, sep, line(header), sep] + [line(r) for r in rows] + [sep])


def format_tables(report: BenchmarkReport) -> str:
    s = report.suite
    cols = [(tier, town) for town in s.towns for tier in s.tiers]
    col_names = [f"{tier}/{town}" for tier, town in cols]
    t1 = _table(f"Success rate in % over {s.episodes} episodes per cell (perception noise tier / town)",
                ["Task"] + col_names,
                [[_TASK_LABEL[t]] + [f"{report.cell(t, tier, town)['success_pct']:.0f}" for tier, town in cols]
                 for t in s.tasks])

    def fmt_km(v):
        return v if isinstance(v, str) else f"{v:.2f}"

    infr_src = ", ".join(report.infractions[f"{cols[0][0]}|{cols[0][1]}"]["tasks"])
    t2 = _table(f"Average km driven between two infractions ({infr_src}); '>' means none occurred",
                ["Infraction"] + col_names,
                [[_KIND_LABEL[k]] + [fmt_km(report.infractions[f"{tier}|{town}"]["km_between"][k])
                                     for tier, town in cols] for k in KINDS])

    def fmt(v):
        return "n/a" if not math.isfinite(v) else f"{v:.3f}"

    t6 = _table("Driving behavior (all episodes of the tier/town)",
                ["Metric"] + col_names,
                [["Median centerline distance [m]"] + [fmt(report.comfort[f"{a}|{b}"]["median_centerline_distance_m"]) for a, b in cols],
                 ["RMS jerk longitudinal [m/s^3]"] + [fmt(report.comfort[f"{a}|{b}"]["rms_jerk_long"]) for a, b in cols],
                 ["RMS jerk lateral, straight [m/s^3]"] + [fmt(report.comfort[f"{a}|{b}"]["rms_jerk_lat_straight"]) for a, b in cols],
                 ["RMS jerk lateral, turns [m/s^3]"] + [fmt(report.comfort[f"{a}|{b}"]["rms_jerk_lat_turns"]) for a, b in cols]])
    return "\n\n".join([t1, t2, t6]) + "\n"


def summary_table(report: BenchmarkReport) -> str:
    return format_tables(report).split("\n\n")[0]
