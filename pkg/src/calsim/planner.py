"""A* topological planner over the lane-successor graph."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Tuple

from .geometry import Point
from .town import Town

START = "__start__"
GOAL = "__goal__"


class NoRouteError(RuntimeError):
    pass


class RouteComplete(Exception):
    """Every branch point of the route has been passed."""


@dataclass(frozen=True)
class Edge:
    target: Hashable
    length: float
    command: str
    lanes: Tuple[str, ...] = ()


@dataclass
class TopoGraph:
    positions: Dict[Hashable, Point] = field(default_factory=dict)
    edges: Dict[Hashable, List[Edge]] = field(default_factory=dict)

    def add_node(self, node, pos: Point):
        self.positions[node] = (float(pos[0]), float(pos[1]))
        self.edges.setdefault(node, [])

    def add_edge(self, src, edge: Edge):
        if edge.length <= 0:
            raise ValueError("edge length must be positive")
        if any(e.command == edge.command for e in self.edges[src]):
            raise ValueError(f"duplicate command {edge.command!r} at node {src!r}")
        self.edges[src].append(edge)


@dataclass(frozen=True)
class RouteStep:
    node: Hashable
    command: str
    position: Point = (0.0, 0.0)  # branch point (end of the approach lane)
    lanes: Tuple[str, ...] = ()  # lanes traversed after the branch point


@dataclass(frozen=True)
class Route:
    steps: Tuple[RouteStep, ...]
    length: float
    nodes: Tuple[Hashable, ...] = ()

    @property
    def commands(self) -> List[str]:
        return [s.command for s in self.steps]


def _sort_key(node):
    return (0, node) if isinstance(node, (int, float)) else (1, str(node))


def plan_route(graph: TopoGraph, start, goal) -> Route:
    """Minimum-length route by A* with a straight-line heuristic.

    Ties on f-cost break on the smaller node id.
    """
    if start not in graph.positions or goal not in graph.positions:
        raise KeyError("start and goal must be graph nodes")
    gx, gy = graph.positions[goal]

    def h(n):
        x, y = graph.positions[n]
        return math.hypot(x - gx, y - gy)

    best = {start: 0.0}
    parent: Dict[Hashable, Tuple[Hashable, Edge]] = {}
    heap = [(h(start), _sort_key(start), start)]
    closed = set()
    while heap:
        _, _, node = heapq.heappop(heap)
        if node in closed:
            continue
        if node == goal:
            break
        closed.add(node)
        for e in graph.edges.get(node, []):
            g = best[node] + e.length
            if g < best.get(e.target, math.inf) - 1e-12:
                best[e.target] = g
                parent[e.target] = (node, e)
                heapq.heappush(heap, (g + h(e.target), _sort_key(e.target), e.target))
    if goal != start and goal not in parent:
        raise NoRouteError(f"no route from {start!r} to {goal!r}")

    chain = []
    node = goal
    while node != start:
        prev, e = parent[node]
        chain.append((prev, e))
        node = prev
    chain.reverse()
    steps = tuple(RouteStep(n, e.command, graph.positions[n], e.lanes) for n, e in chain if n != START)
    nodes = tuple([start] + [e.target for _, e in chain])
    return Route(steps, best[goal], nodes)


def _chain(town: Town, first: str, stop):
    """Walk single-successor lanes from ``first`` until ``stop(lane_id)`` or a branch."""
    lanes = [first]
    cur = town.lanes[first]
    while not stop(cur.id) and not cur.is_branch and cur.successors:
        cur = town.lanes[cur.successors["straight"]]
        if cur.id in lanes:
            break
        lanes.append(cur.id)
    return lanes


def build_topo_graph(town: Town, start: Optional[Tuple[str, float]] = None,
                     goal: Optional[Tuple[str, float]] = None) -> TopoGraph:
    """Branch-point graph of ``town``; optional (lane, s) start/goal terminals.

    A node is the end of a lane whose successors are picked by a command.
    """
    g = TopoGraph()
    branch = {lid for lid, lane in town.lanes.items() if lane.is_branch}
    for lid in sorted(branch):
        g.add_node(lid, town.lanes[lid].centerline.points[-1])
    goal_lane = goal[0] if goal else None
    if goal:
        gp, _ = town.lanes[goal[0]].centerline.point_at(goal[1])
        g.add_node(GOAL, gp)

    def link(src, lanes, base):
        """Edges from ``src`` for a chain of lanes starting right after it."""
        length = base
        for i, lid in enumerate(lanes):
            if lid == goal_lane:
                yield GOAL, length + goal[1], tuple(lanes[: i + 1])
            if lid in branch:
                yield lid, length + town.lanes[lid].length, tuple(lanes[: i + 1])
                return
            length += town.lanes[lid].length

    for lid in sorted(branch):
        for cmd in sorted(town.lanes[lid].successors):
            lanes = _chain(town, town.lanes[lid].successors[cmd], lambda x: x in branch)
            for target, length, via in link(lid, lanes, 0.0):
                g.add_edge(lid, Edge(target, length, cmd, via))
                if target == GOAL:
                    break

    if start:
        lane_id, s0 = start
        sp, _ = town.lanes[lane_id].centerline.point_at(s0)
        g.add_node(START, sp)
        if lane_id == goal_lane and goal[1] > s0:
            g.add_edge(START, Edge(GOAL, goal[1] - s0, "straight", ()))
        else:
            lane = town.lanes[lane_id]
            if lane_id in branch:
                if lane.length - s0 > 0:
                    g.add_edge(START, Edge(lane_id, lane.length - s0, "straight", ()))
            else:
                rest = _chain(town, town.lanes[lane_id].successors["straight"], lambda x: x in branch) \
                    if lane.successors else []
                for target, length, via in link(START, rest, lane.length - s0):
                    g.add_edge(START, Edge(target, length, "straight", via))
                    break
    return g


def route_between(town: Town, start: Tuple[str, float], goal: Tuple[str, float]) -> Route:
    return plan_route(build_topo_graph(town, start, goal), START, GOAL)


class CommandStream:
    """Turns a route into the per-step directional command.

    A branch point's command is active from ``activation_distance`` before
    the end of its approach lane until the ego reaches the lane after the
    junction connector; it is then marked visited.
    """

    def __init__(self, route: Route, activation_distance: float = 30.0):
        self.route = route
        self.activation_distance = activation_distance
        self.index = 0

    @property
    def complete(self) -> bool:
        return self.index >= len(self.route.steps)

    def _passed(self, step: RouteStep, lane_id: Optional[str]) -> bool:
        if lane_id is None or not step.lanes:
            return False
        after = step.lanes[1:] if len(step.lanes) > 1 else step.lanes
        return lane_id in after

    def next_command(self, position: Point, lane_id: Optional[str] = None) -> str:
        while not self.complete and self._passed(self.route.steps[self.index], lane_id):
            self.index += 1
        if self.complete:
            raise RouteComplete()
        step = self.route.steps[self.index]
        if lane_id is not None and step.lanes and lane_id == step.lanes[0]:
            return step.command
        dist = math.hypot(position[0] - step.position[0], position[1] - step.position[1])
        return step.command if dist <= self.activation_distance else "straight"


def next_command(stream: CommandStream, position: Point, lane_id: Optional[str] = None) -> str:
    return stream.next_command(position, lane_id)
