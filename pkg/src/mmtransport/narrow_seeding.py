"""Targeted seed points for narrow passages.

Every obstacle pair contributes its closest-point segment (a gap edge). A
spanning subset of short gap edges is selected by growing a frontier of
connected obstacles, and the midpoints of the selected edges, shortest edge
first, seed the region growth in narrow places such as doors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geom2d import ConvexRegion, closest_point_on_polygon, closest_point_pair, point_in_polygon
from .world import StaticObstacle

log = logging.getLogger(__name__)

TOUCH_TOL = 1e-6
WALL_THICKNESS = 0.05


@dataclass(frozen=True)
class GapEdge:
    i: int
    j: int
    p_i: np.ndarray
    p_j: np.ndarray
    length: float

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.p_i + self.p_j)

    @property
    def key(self):
        return (self.length, min(self.i, self.j), max(self.i, self.j))


def boundary_walls(bounds: ConvexRegion, start_id: int = 0, thickness: float = WALL_THICKNESS):
    """One thin convex obstacle hugging each face of the workspace boundary."""
    v = bounds.vertices
    walls = []
    for k in range(len(v)):
        a, b = v[k], v[(k + 1) % len(v)]
        e = b - a
        out = np.array([e[1], -e[0]]) / np.hypot(*e)
        shape = np.array([a, b, b + thickness * out, a + thickness * out])
        walls.append(StaticObstacle(shape, start_id + k))
    return walls


def all_gap_edges(obstacles) -> list:
    """Closest-point segment for every unordered obstacle pair."""
    if len(obstacles) < 2:
        raise ValueError("need at least two obstacles")
    edges = []
    for a in range(len(obstacles)):
        for b in range(a + 1, len(obstacles)):
            oa, ob = obstacles[a], obstacles[b]
            pa, pb, d = closest_point_pair(oa.shape, ob.shape)
            edges.append(GapEdge(oa.id, ob.id, pa, pb, d))
    return edges


def _shortest(edges):
    return min(edges, key=lambda e: e.key)


def connect_static_obstacles(obstacles, edges, rng=None) -> list:
    """Frontier search for short edges connecting all obstacles.

    Starts from the globally shortest edge; each newly connected obstacle
    contributes its shortest remaining edge. When the frontier dies out with
    obstacles still unconnected, one of them is drawn with ``rng`` and the
    search resumes from it. Any components still separated at the end are
    joined by their shortest bridging edge.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    ids = sorted(o.id for o in obstacles)
    remaining = sorted(edges, key=lambda e: e.key)
    if not remaining:
        return []
    first = _shortest(remaining)
    chosen = [first]
    remaining.remove(first)
    connected = {first.i, first.j}
    frontier = [first.i, first.j]
    while frontier:
        new = []
        for o in frontier:
            mine = [e for e in remaining if o in (e.i, e.j)]
            if not mine:
                continue
            e = _shortest(mine)
            chosen.append(e)
            remaining.remove(e)
            new.append(e.j if e.i == o else e.i)
        frontier = sorted({o for o in new if o not in connected})
        if frontier:
            connected.update(frontier)
        else:
            left = [o for o in ids if o not in connected]
            if left:
                pick = int(left[rng.integers(len(left))])
                connected.add(pick)
                frontier = [pick]
    return _bridge_components(ids, chosen, remaining)


def _components(ids, edges):
    parent = {i: i for i in ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in edges:
        parent[find(e.i)] = find(e.j)
    return find


def _bridge_components(ids, chosen, remaining):
    find = _components(ids, chosen)
    for e in sorted(remaining, key=lambda e: e.key):
        if len({find(i) for i in ids}) == 1:
            break
        if find(e.i) != find(e.j):
            log.info("bridging disconnected obstacle groups with edge %d-%d", e.i, e.j)
            chosen.append(e)
            find = _components(ids, chosen)
    return chosen


def is_connected(ids, edges) -> bool:
    find = _components(list(ids), edges)
    return len({find(i) for i in ids}) <= 1


def seed_points(obstacles, bounds: ConvexRegion | None = None, rng=None,
                min_clearance: float = 1e-3, return_edges: bool = False):
    """Midpoints of the connecting gap edges, shortest edge first.

    With ``bounds`` the workspace faces join the obstacle set as thin walls.
    Touching pairs (gap below ``TOUCH_TOL``) carry no free gap and are left
    out of the edge list. Midpoints inside an obstacle, or closer than
    ``min_clearance`` to one, are dropped.
    """
    obstacles = list(obstacles)
    if bounds is not None:
        next_id = max((o.id for o in obstacles), default=-1) + 1
        obstacles = obstacles + boundary_walls(bounds, next_id)
    if len(obstacles) < 2:
        return (np.zeros((0, 2)), []) if return_edges else np.zeros((0, 2))
    edges = [e for e in all_gap_edges(obstacles) if e.length > TOUCH_TOL]
    conn = connect_static_obstacles(obstacles, edges, rng)
    conn = sorted(conn, key=lambda e: e.key)
    seeds, kept = [], []
    for e in conn:
        m = e.midpoint
        if bounds is not None and not bounds.contains(m, slack=-min_clearance):
            continue
        blocked = False
        for o in obstacles:
            if point_in_polygon(o.shape, m) or np.hypot(*(closest_point_on_polygon(o.shape, m) - m)) < min_clearance:
                blocked = True
                break
        if blocked:
            log.info("dropping seed %s from edge %d-%d: blocked by an obstacle", m, e.i, e.j)
            continue
        seeds.append(m)
        kept.append(e)
    seeds = np.array(seeds).reshape(-1, 2)
    return (seeds, kept) if return_edges else seeds
