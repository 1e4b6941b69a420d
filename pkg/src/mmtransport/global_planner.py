"""Offline global planning.

Feasible formations are solved at the pairwise intersections of the free
regions, joined into a graph whenever two formations share a region, and the
Dijkstra path through that graph is smoothed into a timed cubic Bézier
reference for the online planner.
"""
from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import formation_terms as ft
from .geom2d import ConvexRegion, chebyshev_center, intersect_regions
from .mmr_model import FormationConfig, FormationSpec, circle_arrays, rot, wrap_angle
from .nlp_solver import NlpProblem, SolverOptions, solve

log = logging.getLogger(__name__)

PLAN_FORMAT = "mmtransport-plan/1"
FEAS_TOL = 1e-4


class Infeasible:
    """Explicit no-solution value returned by :func:`formation_pose_opt`."""

    def __init__(self, reason: str, violation: float = np.inf):
        self.reason = reason
        self.violation = violation

    def __bool__(self):
        return False

    def __repr__(self):
        return f"Infeasible({self.reason!r}, violation={self.violation:.3g})"


class NoStartFormation(RuntimeError):
    pass


class NoGoalFormation(RuntimeError):
    pass


class NoPath(RuntimeError):
    pass


@dataclass
class FormationNode:
    config: FormationConfig
    hosts: tuple
    cost: float
    kind: str = "intersection"

    @property
    def p(self) -> np.ndarray:
        return self.config.p


@dataclass
class FormationGraph:
    nodes: list
    edges: list
    weights: list
    edge_regions: list
    start: int = 0
    goal: int = 1

    def adjacency(self):
        adj = {i: [] for i in range(len(self.nodes))}
        for (a, b), w in zip(self.edges, self.weights):
            adj[a].append((b, w))
            adj[b].append((a, w))
        return adj


def contain_circles(region: ConvexRegion, circles, d_safe: float = 0.0):
    """``(ok, margin)`` with margin ``min (b_j - a_j . c - r - d_safe)``."""
    if len(circles) == 0:
        return True, np.inf
    if isinstance(circles, tuple) and len(circles) == 2 and isinstance(circles[0], np.ndarray):
        centers, radii = circles
    else:
        centers = np.array([c.center for c in circles])
        radii = np.array([c.radius for c in circles])
    m = region.b[None, :] - centers @ region.A.T - radii[:, None] - d_safe
    margin = float(m.min())
    return margin >= 0.0, margin


def static_circles(config: FormationConfig, spec: FormationSpec):
    """Base and object circles, the ones held inside the free regions."""
    return circle_arrays(config, spec, arms=False)


def _nominal_scale(spec: FormationSpec) -> np.ndarray:
    r = np.linalg.norm(spec.grasp.offsets, axis=1)
    return 1.0 + spec.q2_nominal / r


def _pose_problem(spec: FormationSpec, point_region: ConvexRegion | None, hosts, p_s, p_g,
                  d_safe: float, fixed_p=None, reg: float = 1e-3, backoff: float = 1e-4):
    n = spec.n
    dim = ft.knot_dim(n)
    scale = _nominal_scale(spec)
    faces = ft.FaceSet.merged(list(hosts))
    phi_off = np.arctan2(spec.grasp.offsets[:, 1], spec.grasp.offsets[:, 0]) + np.pi
    p_s = np.asarray(p_s, float)
    p_g = np.asarray(p_g, float)

    def expand(x):
        if fixed_p is None:
            return x
        return np.concatenate([fixed_p, x])

    def objective_and_grad(x):
        z = expand(x)
        f = ft.Forward(z, spec)
        p, psi, B, phi = f.p[0], f.psi[0], f.B[0], f.phi[0]
        val = 0.0
        gz = np.zeros(dim)
        if fixed_p is None:
            val += float((p_g - p) @ (p_g - p) + (p_s - p) @ (p_s - p))
            gz[0:2] += 2.0 * (2.0 * p - p_g - p_s)
        Rs = (spec.grasp.offsets * scale[:, None]) @ rot(psi).T
        res = B - p[None, :] - Rs
        val += reg * float((res * res).sum())
        gres = 2.0 * reg * res
        gz[3:3 + 2 * n] += gres.reshape(-1)
        gz[0:2] -= gres.sum(axis=0)
        gz[2] -= float(np.sum(gres * np.column_stack([-Rs[:, 1], Rs[:, 0]])))
        dphi = phi - psi - phi_off
        val += reg * float(np.sum(1.0 - np.cos(dphi)))
        gz[3 + 2 * n:] += reg * np.sin(dphi)
        gz[2] -= reg * float(np.sum(np.sin(dphi)))
        return val, (gz if fixed_p is None else gz[2:])

    def constraints(x):
        f = ft.Forward(expand(x), spec)
        parts, vjps = [], []
        v, j = ft.containment_terms(f, faces, d_safe, backoff)
        parts.append(v)
        vjps.append((len(v), j))
        v, j = ft.joint_bound_terms(f, backoff)
        parts.append(v.reshape(-1))
        vjps.append((v.size, j))
        if point_region is not None and fixed_p is None:
            v = point_region.A @ f.p[0] - point_region.b
            A = point_region.A
            parts.append(v)
            vjps.append((len(v), lambda w, A=A, f=f: f.backward(gp=(w @ A)[None, :])))
        return np.concatenate(parts), vjps

    cache = {}

    def eval_cons(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = constraints(x)
        return cache[key]

    def ineq(x):
        return eval_cons(x)[0]

    def ineq_vjp(x, w):
        _, vjps = eval_cons(x)
        g = np.zeros(dim)
        pos = 0
        for m, fn in vjps:
            g += fn(w[pos:pos + m]).reshape(-1)
            pos += m
        return g if fixed_p is None else g[2:]

    problem = NlpProblem(dim if fixed_p is None else dim - 2,
                         objective=lambda x: objective_and_grad(x)[0],
                         value_and_grad=objective_and_grad,
                         ineq=ineq, ineq_vjp=ineq_vjp)
    return problem, expand


def _initial_guesses(spec, p0, n_psi: int = 4):
    out = []
    for k in range(n_psi):
        psi = 2 * np.pi * k / (n_psi * spec.n)
        out.append(ft.pack(spec.nominal(p0, psi)))
    return out


def formation_pose_opt(intersection: ConvexRegion | None, hosts, p_s, p_g, spec: FormationSpec,
                       d_safe: float = 0.05, fixed_p=None, opts: SolverOptions | None = None):
    """Best formation for ``||p_g - p||^2 + ||p_s - p||^2`` inside ``hosts``.

    The object CoM is restricted to ``intersection``; every base and object
    circle must fit in every host region. With ``fixed_p`` the CoM is pinned
    and only the robots are placed (start and goal nodes). Returns a
    :class:`FormationNode` or an :class:`Infeasible` value.
    """
    hosts = [hosts] if isinstance(hosts, ConvexRegion) else list(hosts)
    p_s = np.asarray(p_s, float)
    p_g = np.asarray(p_g, float)
    fixed = None if fixed_p is None else np.asarray(fixed_p, float)
    problem, expand = _pose_problem(spec, intersection, hosts, p_s, p_g, d_safe, fixed)
    opts = opts or SolverOptions(max_outer=12)
    need = spec.r_obj + d_safe
    for region in hosts + ([intersection] if intersection is not None else []):
        if chebyshev_center(region.A, region.b)[1] < need:
            return Infeasible("region too small for the object circle")
    if fixed is not None:
        p0 = fixed
    else:
        region = intersection if intersection is not None else hosts[0]
        c, _ = chebyshev_center(region.A, region.b)
        mid = 0.5 * (p_s + p_g)
        p0 = mid if region.contains(mid) else c
    best = None
    for z0 in _initial_guesses(spec, p0):
        x0 = z0 if fixed is None else z0[2:]
        sol = solve(problem, x0, opts)
        if best is None or (sol.violation <= FEAS_TOL) > (best.violation <= FEAS_TOL) or (
                (sol.violation <= FEAS_TOL) == (best.violation <= FEAS_TOL)
                and (sol.fun, sol.violation) < (best.fun, best.violation)):
            best = sol
        if sol.converged or (best.violation > 10 * FEAS_TOL and sol is not best):
            break
    if best.violation > FEAS_TOL:
        return Infeasible("no admissible placement", best.violation)
    f = ft.Forward(expand(best.x), spec)
    config = f.config(0)
    config = FormationConfig(config.p, float(wrap_angle(config.psi)), config.base,
                             wrap_angle(config.phi), config.q)
    cost = float(np.sum((p_g - config.p) ** 2) + np.sum((p_s - config.p) ** 2))
    return FormationNode(config, tuple(), cost)


def _fits(region, node_cfg, spec, d_safe, tol=1e-6):
    ok, margin = contain_circles(region, static_circles(node_cfg, spec), d_safe)
    return margin >= -tol and region.contains(node_cfg.p)


def _endpoint_node(regions, point, p_s, p_g, spec, d_safe, kind):
    """Formation pinned at ``point``, placed in the best-fitting region."""
    cands = [(float(r.margin(point)[0]), i) for i, r in enumerate(regions) if r.contains(point)]
    for _, i in sorted(cands, reverse=True):
        node = formation_pose_opt(None, [regions[i]], p_s, p_g, spec, d_safe, fixed_p=point)
        if node:
            node.hosts = (i,)
            node.kind = kind
            node.cost = 0.0
            return node
    return None


def build_graph(regions, spec: FormationSpec, p_s, p_g, d_safe: float = 0.05) -> FormationGraph:
    """Formation graph over region intersections plus start and goal."""
    region_list = list(getattr(regions, "regions", regions))
    p_s = np.asarray(p_s, float)
    p_g = np.asarray(p_g, float)
    start = _endpoint_node(region_list, p_s, p_s, p_g, spec, d_safe, "start")
    if start is None:
        raise NoStartFormation(f"no admissible formation at start {p_s}")
    goal = _endpoint_node(region_list, p_g, p_s, p_g, spec, d_safe, "goal")
    if goal is None:
        raise NoGoalFormation(f"no admissible formation at goal {p_g}")
    nodes = [start, goal]
    for i in range(len(region_list)):
        for j in range(i + 1, len(region_list)):
            inter = intersect_regions(region_list[i], region_list[j])
            if inter is None:
                continue
            node = formation_pose_opt(inter, [region_list[i], region_list[j]], p_s, p_g, spec, d_safe)
            if not node:
                log.info("intersection %d-%d admits no formation: %s", i, j, node.reason)
                continue
            node.hosts = (i, j)
            nodes.append(node)
    members = [[r for r in range(len(region_list)) if _fits(region_list[r], nd.config, spec, d_safe)]
               for nd in nodes]
    edges, weights, edge_regions = [], [], []
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            common = sorted(set(members[a]) & set(members[b]))
            if not common:
                continue
            pa, pb = nodes[a].p, nodes[b].p
            best = max(common, key=lambda r: (min(region_list[r].margin(pa)[0],
                                                  region_list[r].margin(pb)[0]), -r))
            edges.append((a, b))
            weights.append(float(np.hypot(*(pa - pb))))
            edge_regions.append(best)
    return FormationGraph(nodes, edges, weights, edge_regions)


def shortest_path(graph: FormationGraph) -> list:
    """Dijkstra node sequence from start to goal."""
    adj = graph.adjacency()
    dist = {graph.start: 0.0}
    prev = {}
    heap = [(0.0, graph.start)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == graph.goal:
            break
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, np.inf) - 1e-15:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if graph.goal not in done:
        raise NoPath("goal is not reachable from start in the formation graph")
    path = [graph.goal]
    while path[-1] != graph.start:
        path.append(prev[path[-1]])
    return path[::-1]


def path_regions(graph: FormationGraph, path) -> list:
    """Host region of every path edge, in order."""
    lookup = {}
    for (a, b), r in zip(graph.edges, graph.edge_regions):
        lookup[(a, b)] = lookup[(b, a)] = r
    return [lookup[(path[k], path[k + 1])] for k in range(len(path) - 1)]


def _bezier(ctrl, u):
    u = np.asarray(u, float)[:, None]
    c0, c1, c2, c3 = ctrl
    w = 1.0 - u
    return w ** 3 * c0 + 3 * w * w * u * c1 + 3 * w * u * u * c2 + u ** 3 * c3


def _bezier_d(ctrl, u):
    u = np.asarray(u, float)[:, None]
    c0, c1, c2, c3 = ctrl
    w = 1.0 - u
    return 3 * w * w * (c1 - c0) + 6 * w * u * (c2 - c1) + 3 * u * u * (c3 - c2)


@dataclass
class ReferenceTrajectory:
    """Piecewise cubic Bézier CoM reference, reparameterized by arc length."""

    controls: np.ndarray          # (S, 4, 2)
    v_op: float
    samples_per_segment: int = 400
    _table: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self.controls = np.asarray(self.controls, float)
        m = self.samples_per_segment
        u = np.linspace(0.0, 1.0, m + 1)
        seg_len = []
        tabs = []
        for ctrl in self.controls:
            pts = _bezier(ctrl, u)
            d = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
            tabs.append(d)
            seg_len.append(d[-1])
        offsets = np.r_[0.0, np.cumsum(seg_len)]
        self._table = (u, tabs, offsets)

    @property
    def length(self) -> float:
        return float(self._table[2][-1])

    @property
    def T(self) -> float:
        return self.length / self.v_op

    @property
    def start(self) -> np.ndarray:
        return self.controls[0, 0].copy()

    @property
    def goal(self) -> np.ndarray:
        return self.controls[-1, 3].copy()

    def _locate(self, s):
        u, tabs, offsets = self._table
        s = float(np.clip(s, 0.0, self.length))
        k = int(np.clip(np.searchsorted(offsets, s, side="right") - 1, 0, len(tabs) - 1))
        uk = float(np.interp(s - offsets[k], tabs[k], u))
        return k, uk

    def __call__(self, t):
        """Reference CoM position(s) at time(s) ``t``; clamped outside ``[0, T]``."""
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, float))
        out = np.empty((len(ts), 2))
        for j, tj in enumerate(ts):
            if tj <= 0.0:
                out[j] = self.start
            elif tj >= self.T:
                out[j] = self.goal
            else:
                k, uk = self._locate(tj * self.v_op)
                out[j] = _bezier(self.controls[k], [uk])[0]
        return out[0] if scalar else out

    def velocity(self, t):
        ts = np.atleast_1d(np.asarray(t, float))
        out = np.zeros((len(ts), 2))
        for j, tj in enumerate(ts):
            if 0.0 < tj < self.T:
                k, uk = self._locate(tj * self.v_op)
                d = _bezier_d(self.controls[k], [uk])[0]
                nd = np.hypot(*d)
                if nd > 0:
                    out[j] = self.v_op * d / nd
        return out

    def to_dict(self) -> dict:
        return {"controls": self.controls.tolist(), "v_op": self.v_op,
                "length": self.length, "T": self.T}

    @classmethod
    def from_dict(cls, d) -> "ReferenceTrajectory":
        return cls(np.asarray(d["controls"], float), float(d["v_op"]))


def _segment_ok(ctrl, region, floor, m=64):
    pts = _bezier(ctrl, np.linspace(0.0, 1.0, m + 1))
    return bool(np.all(region.margin(pts) >= floor - 1e-9))


def smooth_path(S, v_op: float, regions=None, host_regions=None) -> ReferenceTrajectory:
    """Catmull-Rom cubic Bézier through waypoints ``S``, one segment per edge.

    With ``regions``/``host_regions`` each segment must keep the CoM margin in
    its host region at least as large as along the straight edge; otherwise
    the tangents at its ends are halved, up to five times, then zeroed.
    """
    S = np.asarray(S, float)
    if len(S) < 2:
        raise ValueError("need at least two waypoints")
    keep = [0]
    for k in range(1, len(S)):
        if np.hypot(*(S[k] - S[keep[-1]])) > 1e-9:
            keep.append(k)
    if len(keep) < 2:
        raise ValueError("waypoints coincide")
    if host_regions is not None:
        host_regions = [host_regions[k - 1] for k in keep[1:]]
    S = S[keep]
    m = len(S)
    tang = np.zeros((m, 2))
    if m > 2:
        tang[1:-1] = 0.5 * (S[2:] - S[:-2])
    scale = np.ones(m)
    halvings = np.zeros(m, dtype=int)

    def controls():
        out = []
        for k in range(m - 1):
            c0, c3 = S[k], S[k + 1]
            c1 = c0 + scale[k] * tang[k] / 3.0
            c2 = c3 - scale[k + 1] * tang[k + 1] / 3.0
            out.append([c0, c1, c2, c3])
        return np.array(out)

    if regions is not None and host_regions is not None:
        for _ in range(6 * m):
            ctrl = controls()
            bad = []
            for k in range(m - 1):
                reg = regions[host_regions[k]]
                floor = min(0.0, float(reg.margin(S[k:k + 2]).min()))
                if not _segment_ok(ctrl[k], reg, floor):
                    bad.append(k)
            if not bad:
                break
            for k in bad:
                for e in (k, k + 1):
                    if halvings[e] < 5:
                        scale[e] *= 0.5
                        halvings[e] += 1
                    else:
                        scale[e] = 0.0
    return ReferenceTrajectory(controls(), v_op)


@dataclass
class GlobalPlan:
    regions: object
    graph: FormationGraph
    path: list
    corridor: list
    reference: ReferenceTrajectory
    seeds: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def waypoints(self) -> np.ndarray:
        return np.array([self.graph.nodes[i].p for i in self.path])

    @property
    def start_config(self) -> FormationConfig:
        return self.graph.nodes[self.path[0]].config

    @property
    def path_length(self) -> float:
        w = self.waypoints
        return float(np.sum(np.linalg.norm(np.diff(w, axis=0), axis=1)))

    def corridor_regions(self) -> list:
        return [self.regions.regions[i] for i in self.corridor]

    def to_dict(self) -> dict:
        g = self.graph
        return {
            "format": PLAN_FORMAT,
            **self.meta,
            "regions": self.regions.to_dict(),
            "seed_points": np.asarray(self.seeds).tolist(),
            "nodes": [{"config": nd.config.to_dict(), "hosts": list(nd.hosts),
                       "cost": nd.cost, "kind": nd.kind} for nd in g.nodes],
            "edges": [list(e) for e in g.edges],
            "weights": list(g.weights),
            "edge_regions": list(g.edge_regions),
            "path": list(self.path),
            "corridor": list(self.corridor),
            "reference": self.reference.to_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "GlobalPlan":
        from .free_regions import RegionSet

        if d.get("format") != PLAN_FORMAT:
            raise ValueError(f"unsupported plan format {d.get('format')!r}")
        nodes = [FormationNode(FormationConfig.from_dict(nd["config"]), tuple(nd["hosts"]),
                               float(nd["cost"]), nd["kind"]) for nd in d["nodes"]]
        graph = FormationGraph(nodes, [tuple(e) for e in d["edges"]], list(d["weights"]),
                               list(d["edge_regions"]))
        meta = {k: v for k, v in d.items() if k not in {
            "format", "regions", "seed_points", "nodes", "edges", "weights", "edge_regions",
            "path", "corridor", "reference"}}
        return cls(RegionSet.from_dict(d["regions"]), graph, list(d["path"]), list(d["corridor"]),
                   ReferenceTrajectory.from_dict(d["reference"]),
                   np.asarray(d["seed_points"], float).reshape(-1, 2), meta)

    @classmethod
    def loads(cls, text: str) -> "GlobalPlan":
        return cls.from_dict(json.loads(text))


def corridor_from_path(edge_regions) -> list:
    out = []
    for r in edge_regions:
        if not out or out[-1] != r:
            out.append(r)
    return out


def plan_global(world, spec: FormationSpec, rng=None, d_safe: float = 0.05, v_op: float = 0.15,
                coverage_target: float = 0.95, max_regions: int = 40) -> GlobalPlan:
    """Seeding, region growth, formation graph, shortest path and smoothing."""
    from .free_regions import build_region_set
    from .narrow_seeding import seed_points

    rng = np.random.default_rng(0) if rng is None else rng
    statics = list(world.statics)
    seeds = seed_points(statics, world.bounds, rng=rng) if statics else np.zeros((0, 2))
    regions = build_region_set(statics, world.bounds, rng=rng, coverage_target=coverage_target,
                               max_regions=max_regions, seeds=seeds)
    graph = build_graph(regions, spec, world.start, world.goal, d_safe)
    path = shortest_path(graph)
    hosts = path_regions(graph, path)
    waypoints = np.array([graph.nodes[i].p for i in path])
    ref = smooth_path(waypoints, v_op, regions.regions, hosts)
    return GlobalPlan(regions, graph, path, corridor_from_path(hosts), ref, seeds)
