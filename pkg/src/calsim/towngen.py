"""Procedural grid towns.

The built-in ``town-a`` / ``town-b`` files under ``calsim/data`` are produced
by :func:`builtin_town` and written with ``python -m calsim.towngen``.
"""
from __future__ import annotations

import math
import sys
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import yaml

from .geometry import Polyline, Pose2D
from .town import Actor, Lane, SpeedSign, Town, TrafficLight, town_to_doc

LANE_WIDTH = 4.0
JUNCTION_RADIUS = 9.0  # lanes stop this far from a junction center
SIDEWALK = (4.0, 7.0)  # lateral band from the road axis
LIGHT_SIDE = 3.0  # light/sign offset to the right of the lane center
SIGN_S = 12.0


def _right(u):
    return np.array([u[1], -u[0]])


def _left(u):
    return np.array([-u[1], u[0]])


def _arc(p, q, u, n_pts=13):
    """Circular arc from p (tangent u) to q for a quarter turn."""
    d = q - p
    radius = float(np.dot(d, u))
    side = d - radius * u
    side = side / np.linalg.norm(side)
    center = p + radius * side
    a0 = math.atan2(p[1] - center[1], p[0] - center[0])
    a1 = math.atan2(q[1] - center[1], q[0] - center[0])
    sweep = (a1 - a0 + math.pi) % (2 * math.pi) - math.pi
    return [tuple(center + radius * np.array([math.cos(a0 + sweep * k / (n_pts - 1)),
                                              math.sin(a0 + sweep * k / (n_pts - 1))])) for k in range(n_pts)]


def grid_town(name: str, xs: Iterable[float], ys: Iterable[float], missing: Iterable[Tuple[str, str]] = (),
              fast_roads: Iterable[Tuple[str, str]] = (), statics: Iterable[Tuple[str, str, float]] = (),
              cycle=(10.0, 3.0, 7.0)) -> Town:
    """Grid of junctions ``J{i}{j}`` at (xs[i], ys[j]) with two-way roads.

    ``missing`` removes roads, ``fast_roads`` get a 60 km/h limit,
    ``statics`` places a bollard on the sidewalk of road (a, b) at fraction f.
    """
    xs, ys = list(xs), list(ys)
    nodes = {f"J{i}{j}": np.array([x, y], float) for i, x in enumerate(xs) for j, y in enumerate(ys)}
    missing = {frozenset(m) for m in missing}
    fast = {frozenset(m) for m in fast_roads}
    roads = []
    for i in range(len(xs)):
        for j in range(len(ys)):
            a = f"J{i}{j}"
            for b in (f"J{i + 1}{j}", f"J{i}{j + 1}"):
                if b in nodes and frozenset((a, b)) not in missing:
                    roads.append((a, b))
    directed = [(a, b) for a, b in roads] + [(b, a) for a, b in roads]
    r = JUNCTION_RADIUS

    def geom(a, b):
        u = nodes[b] - nodes[a]
        u = u / np.linalg.norm(u)
        off = 0.5 * LANE_WIDTH * _right(u)
        return u, nodes[a] + r * u + off, nodes[b] - r * u + off

    lanes: Dict[str, dict] = {}
    for a, b in directed:
        u, p0, p1 = geom(a, b)
        lanes[f"{a}-{b}"] = dict(points=[tuple(p0), tuple(p1)], succ={}, opp=f"{b}-{a}",
                                 limit=60 if frozenset((a, b)) in fast else 30)
    for a, b in directed:
        u, _, p_end = geom(a, b)
        for b2, c in directed:
            if b2 != b or c == a:
                continue
            w, q_start, _ = geom(b, c)
            cross = u[0] * w[1] - u[1] * w[0]
            if abs(cross) < 1e-9:
                cmd, pts = "straight", [tuple(p_end), tuple(q_start)]
            else:
                cmd, pts = ("left" if cross > 0 else "right"), _arc(p_end, q_start, u)
            cid = f"{a}-{b}-{c}"
            lanes[cid] = dict(points=pts, succ={"straight": f"{b}-{c}"}, opp=None, limit=lanes[f"{b}-{c}"]["limit"])
            lanes[f"{a}-{b}"]["succ"][cmd] = cid

    out_lanes = {lid: Lane(lid, Polyline(d["points"]), LANE_WIDTH, d["limit"], d["succ"], d["opp"])
                 for lid, d in lanes.items()}

    sidewalks = []
    for a, b in roads:
        u = nodes[b] - nodes[a]
        u = u / np.linalg.norm(u)
        p0, p1 = nodes[a] + r * u, nodes[b] - r * u
        for side in (_right(u), _left(u)):
            lo, hi = SIDEWALK
            sidewalks.append([tuple(map(float, v)) for v in (p0 + lo * side, p1 + lo * side, p1 + hi * side, p0 + hi * side)])

    degree = {n: 0 for n in nodes}
    for a, b in roads:
        degree[a] += 1
        degree[b] += 1
    if min(degree.values()) < 2:
        raise ValueError("grid town would contain a dead end")
    lights, lane_lights = [], {}
    for a, b in directed:
        if degree[b] < 3:
            continue
        u, _, p_end = geom(a, b)
        pole = p_end + LIGHT_SIDE * _right(u)
        half = 0.5 * LANE_WIDTH * _right(u)
        ns = abs(u[1]) > abs(u[0])
        lane_lights[f"{a}-{b}"] = len(lights)
        lights.append(TrafficLight(f"L:{a}-{b}", Pose2D(float(pole[0]), float(pole[1]), math.atan2(u[1], u[0])),
                                   (tuple(map(float, p_end - half)), tuple(map(float, p_end + half))),
                                   tuple(cycle), 0.0 if ns else sum(cycle) / 2.0).at(0.0))

    signs = []
    for a, b in directed:
        lid = f"{a}-{b}"
        preds = [x for x, y in directed if y == a and x != b]
        if any(lanes[f"{x}-{a}"]["limit"] != lanes[lid]["limit"] for x in preds):
            lane = out_lanes[lid]
            (px, py), h = lane.centerline.point_at(SIGN_S)
            side = _right(np.array([math.cos(h), math.sin(h)]))
            signs.append(SpeedSign(Pose2D(px + LIGHT_SIDE * side[0], py + LIGHT_SIDE * side[1], h), lane.speed_limit))

    actors = []
    for k, (a, b, f) in enumerate(statics):
        u = nodes[b] - nodes[a]
        u = u / np.linalg.norm(u)
        pos = nodes[a] + (r + f * (np.linalg.norm(nodes[b] - nodes[a]) - 2 * r)) * u + 6.0 * _right(u)
        actors.append(Actor("static", Pose2D(float(pos[0]), float(pos[1]), 0.0), 0.0, (0.3, 0.3), id=f"bollard{k}"))

    return Town(name, out_lanes, sidewalks, lights, signs, actors, lane_lights)


def straight_road(length: float = 600.0, limit: int = 30, name: str = "straight") -> Town:
    """Single two-way straight road along +x with sidewalks, no junctions."""
    half = 0.5 * LANE_WIDTH
    lanes = {
        "east": Lane("east", Polyline([(0.0, -half), (length, -half)]), LANE_WIDTH, limit, {}, "west"),
        "west": Lane("west", Polyline([(length, half), (0.0, half)]), LANE_WIDTH, limit, {}, "east"),
    }
    lo, hi = SIDEWALK
    sidewalks = [[(0.0, -lo), (length, -lo), (length, -hi), (0.0, -hi)],
                 [(0.0, lo), (length, lo), (length, hi), (0.0, hi)]]
    return Town(name, lanes, sidewalks)


def builtin_town(name: str) -> Town:
    if name == "town-a":
        return grid_town("town-a", xs=[0, 100, 200, 300], ys=[0, 90, 180],
                         missing=[("J11", "J21"), ("J12", "J22")],
                         fast_roads=[("J00", "J10"), ("J10", "J20"), ("J20", "J30")],
                         statics=[("J01", "J11", 0.4), ("J20", "J21", 0.6), ("J22", "J32", 0.3)])
    if name == "town-b":
        return grid_town("town-b", xs=[0, 80, 160], ys=[0, 110, 220],
                         missing=[("J10", "J11")],
                         fast_roads=[("J02", "J12")],
                         statics=[("J00", "J01", 0.5), ("J21", "J22", 0.4)],
                         cycle=(12.0, 3.0, 9.0))
    raise KeyError(name)


def write_builtin(directory: Optional[Path] = None) -> List[Path]:
    directory = Path(directory or Path(__file__).parent / "data")
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("town-a", "town-b"):
        path = directory / (name.replace("-", "_") + ".yaml")
        path.write_text(yaml.safe_dump(town_to_doc(builtin_town(name)), sort_keys=False, default_flow_style=None))
        written.append(path)
    return written


if __name__ == "__main__":
    for p in write_builtin(Path(sys.argv[1]) if len(sys.argv) > 1 else None):
        print(p)
