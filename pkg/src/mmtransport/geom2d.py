"""Planar geometry kernel: convex polygons in halfspace/vertex form, circles,
cones, closest points between polygons and Chebyshev centers.

Points are plain ``numpy`` arrays of shape ``(2,)``; point lists are arrays of
shape ``(k, 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

VERTEX_TOL = 1e-7
EMPTY_RADIUS = 1e-7


class DegenerateShape(ValueError):
    """Polygon with fewer than three vertices or zero area."""


class Unbounded(ValueError):
    """Halfspace set does not describe a bounded region."""


@dataclass(frozen=True)
class Halfspace:
    """The set ``{x : a . x <= b}`` with ``|a| = 1``."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "a", a / n)
        object.__setattr__(self, "b", float(self.b) / n)


@dataclass(frozen=True)
class Circle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("circle radius must be non-negative")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


def polygon_area(vertices) -> float:
    """Signed shoelace area (positive for counter-clockwise order)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def order_ccw(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    return pts[np.argsort(ang, kind="stable")]


def is_convex(vertices, tol: float = 1e-12) -> bool:
    """True if the closed vertex loop is strictly convex in either orientation."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return False
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    scale = tol * max(1.0, float(np.abs(v).max()) ** 2)
    return bool(np.all(cross > scale) or np.all(cross < -scale))


def _check_polygon(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise DegenerateShape("polygon needs at least three 2D vertices")
    if abs(polygon_area(v)) < 1e-14:
        raise DegenerateShape("polygon has zero area")
    return v


def _normalize(A, b):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    n = np.linalg.norm(A, axis=1)
    if np.any(n == 0):
        raise ValueError("halfspace normal must be nonzero")
    return A / n[:, None], b / n


def enumerate_vertices(A, b, tol: float = 1e-9) -> np.ndarray:
    """Vertices of ``{x : A x <= b}`` by pairwise line intersection.

    Returns a counter-clockwise ``(k, 2)`` array (possibly empty).
    """
    A, b = _normalize(A, b)
    m = len(A)
    i, j = np.triu_indices(m, 1)
    det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
    ok = np.abs(det) > 1e-12
    i, j, det = i[ok], j[ok], det[ok]
    x = (b[i] * A[j, 1] - b[j] * A[i, 1]) / det
    y = (A[i, 0] * b[j] - A[j, 0] * b[i]) / det
    pts = np.column_stack([x, y])
    if len(pts) == 0:
        return pts.reshape(0, 2)
    feas = np.all(pts @ A.T - b <= tol * np.maximum(1.0, np.abs(b)), axis=1)
    pts = pts[feas]
    if len(pts) == 0:
        return pts.reshape(0, 2)
    # merge coincident intersections from lines through a shared vertex
    keep = []
    for p in pts:
        if not any(np.hypot(*(p - q)) < 1e-9 for q in keep):
            keep.append(p)
    pts = np.array(keep)
    if len(pts) < 3:
        return pts
    return order_ccw(pts)


def halfspaces_from_vertices(vertices):
    """Outward-normal halfspaces ``(A, b)`` of a convex polygon."""
    v = _check_polygon(vertices)
    if polygon_area(v) < 0:
        v = v[::-1]
    e = np.roll(v, -1, axis=0) - v
    normals = np.column_stack([e[:, 1], -e[:, 0]])
    lens = np.linalg.norm(normals, axis=1)
    keep = lens > 1e-12
    normals = normals[keep] / lens[keep, None]
    b = np.einsum("ij,ij->i", normals, v[keep])
    return normals, b


@dataclass(frozen=True)
class ConvexRegion:
    """Bounded convex polygon held both as ``A x <= b`` and as its vertices.

    Rows of ``A`` are unit outward normals. Build instances with
    :meth:`from_halfspaces`, :meth:`from_vertices` or :meth:`box`.
    """

    A: np.ndarray
    b: np.ndarray
    vertices: np.ndarray = field(repr=False)

    @classmethod
    def from_halfspaces(cls, A, b, prune: bool = True) -> "ConvexRegion":
        A, b = _normalize(A, b)
        _, r = chebyshev_center(A, b)
        if r <= 0:
            raise DegenerateShape("halfspace set has empty interior")
        verts = enumerate_vertices(A, b)
        if len(verts) < 3:
            raise DegenerateShape("halfspace set has fewer than three vertices")
        if prune:
            slack = verts @ A.T - b
            touching = np.any(slack > -1e-9, axis=0)
            A, b = A[touching], b[touching]
        return cls(A, b, verts)

    @classmethod
    def from_vertices(cls, vertices) -> "ConvexRegion":
        v = _check_polygon(vertices)
        if not is_convex(v):
            raise DegenerateShape("vertex list is not convex")
        A, b = halfspaces_from_vertices(v)
        return cls(A, b, order_ccw(v))

    @classmethod
    def box(cls, lo, hi) -> "ConvexRegion":
        (x0, y0), (x1, y1) = lo, hi
        return cls.from_vertices([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    @property
    def halfspaces(self) -> list:
        return [Halfspace(a, b) for a, b in zip(self.A, self.b)]

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def contains(self, pt, slack: float = 0.0) -> bool:
        return contains(self, pt, slack)

    def margin(self, pts) -> np.ndarray:
        """Signed clearance ``min_j (b_j - a_j . x)`` for each point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.min(self.b - pts @ self.A.T, axis=1)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "vertices": self.vertices.tolist()}

    @classmethod
    def from_dict(cls, d) -> "ConvexRegion":
        return cls(np.asarray(d["A"], float), np.asarray(d["b"], float),
                   np.asarray(d["vertices"], float))


def contains(region: ConvexRegion, pt, slack: float = 0.0) -> bool:
    """True iff ``a_j . pt <= b_j + slack`` for every face."""
    pt = np.asarray(pt, dtype=float)
    return bool(np.all(region.A @ pt <= region.b + slack))


def point_in_polygon(vertices, pt, slack: float = 0.0) -> bool:
    """Containment test for a convex vertex list (any orientation)."""
    A, b = halfspaces_from_vertices(vertices)
    return bool(np.all(A @ np.asarray(pt, float) <= b + slack))


def closest_point_on_segment(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return a + t * ab


def closest_point_on_polygon(vertices, pt):
    """Closest point of a convex polygon (boundary or interior) to ``pt``."""
    v = np.asarray(vertices, dtype=float)
    pt = np.asarray(pt, dtype=float)
    if point_in_polygon(v, pt):
        return pt.copy()
    a = v
    ab = np.roll(v, -1, axis=0) - v
    t = np.clip(np.einsum("ij,ij->i", pt - a, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    cand = a + t[:, None] * ab
    d = np.linalg.norm(cand - pt, axis=1)
    return cand[int(np.argmin(d))]


def _segments_cross(p1, p2, q1, q2):
    """Intersection point of two closed segments, or None."""
    r = p2 - p1
    s = q2 - q1
    den = r[0] * s[1] - r[1] * s[0]
    qp = q1 - p1
    if abs(den) < 1e-15:
        return None
    t = (qp[0] * s[1] - qp[1] * s[0]) / den
    u = (qp[0] * r[1] - qp[1] * r[0]) / den
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
        return p1 + t * r
    return None


def _lexkey(p):
    return (round(float(p[0]), 12), round(float(p[1]), 12))


def closest_point_pair(A, B):
    """Closest points between two convex polygons given as vertex lists.

    Exhaustive vertex/edge enumeration. Returns ``(pA, pB, dist)`` with
    ``dist == 0`` when the shapes intersect (then ``pA == pB`` is a common
    point). When several pairs attain the minimum their mean is returned, so
    the result is symmetric under swapping the arguments.
    """
    A = _check_polygon(A)
    B = _check_polygon(B)
    witnesses = []
    for v in A:
        if point_in_polygon(B, v):
            witnesses.append(v)
    for v in B:
        if point_in_polygon(A, v):
            witnesses.append(v)
    nA, nB = len(A), len(B)
    for i in range(nA):
        for j in range(nB):
            x = _segments_cross(A[i], A[(i + 1) % nA], B[j], B[(j + 1) % nB])
            if x is not None:
                witnesses.append(x)
    if witnesses:
        w = min(witnesses, key=_lexkey)
        return w.copy(), w.copy(), 0.0

    cands = []
    for v in A:
        for j in range(nB):
            q = closest_point_on_segment(v, B[j], B[(j + 1) % nB])
            cands.append((float(np.hypot(*(v - q))), v, q))
    for v in B:
        for i in range(nA):
            q = closest_point_on_segment(v, A[i], A[(i + 1) % nA])
            cands.append((float(np.hypot(*(v - q))), q, v))
    dmin = min(c[0] for c in cands)
    tied = [c for c in cands if c[0] <= dmin + 1e-12]

    # closest pairs of convex sets form a convex set, so the mean of the
    # tied pairs is itself closest; for parallel faces it is the overlap centre
    pairs = {(_lexkey(c[1]), _lexkey(c[2])): (c[1], c[2]) for c in tied}
    keys = sorted(pairs)
    pA = np.mean([pairs[k][0] for k in keys], axis=0)
    pB = np.mean([pairs[k][1] for k in keys], axis=0)
    return pA, pB, float(np.hypot(*(pA - pB)))


def chebyshev_center(A, b, prefer=None):
    """Center and radius of the largest circle inside ``{x : A x <= b}``.

    A non-positive radius means the set has no interior. When ``prefer`` is
    given, ties among maximal circles are broken toward that point (L1).
    Raises :class:`Unbounded` for an unbounded set.
    """
    if isinstance(A, (list, tuple)) and A and isinstance(A[0], Halfspace):
        hs = A
        A = np.array([h.a for h in hs])
        b = np.array([h.b for h in hs])
    A, b = _normalize(A, b)
    c = np.array([0.0, 0.0, -1.0])
    Aub = np.column_stack([A, np.ones(len(A))])
    res = linprog(c, A_ub=Aub, b_ub=b, bounds=[(None, None)] * 3, method="highs")
    if res.status == 3:
        raise Unbounded("halfspace set is unbounded")
    if res.status != 0:
        raise RuntimeError(f"Chebyshev LP failed: {res.message}")
    r = float(res.x[2])
    center = res.x[:2]
    if prefer is not None and r > 0:
        prefer = np.asarray(prefer, dtype=float)
        # variables: x, y, t1, t2 with |x - px| <= t1, |y - py| <= t2
        r_req = r - 1e-9 * max(1.0, r)
        Aub2 = np.vstack([
            np.column_stack([A, np.zeros((len(A), 2))]),
            [[1, 0, -1, 0], [-1, 0, -1, 0], [0, 1, 0, -1], [0, -1, 0, -1]],
        ])
        bub2 = np.concatenate([b - r_req, [prefer[0], -prefer[0], prefer[1], -prefer[1]]])
        res2 = linprog([0, 0, 1, 1], A_ub=Aub2, b_ub=bub2,
                       bounds=[(None, None)] * 2 + [(0, None)] * 2, method="highs")
        if res2.status == 0:
            center = res2.x[:2]
            r = float(np.min(b - A @ center))
    return np.asarray(center, dtype=float), r


def intersect_regions(P1: ConvexRegion, P2: ConvexRegion):
    """Intersection of two regions, or ``None`` when its interior is empty."""
    A = np.vstack([P1.A, P2.A])
    b = np.concatenate([P1.b, P2.b])
    _, r = chebyshev_center(A, b)
    if r <= EMPTY_RADIUS:
        return None
    return ConvexRegion.from_halfspaces(A, b)


def perp(v):
    """Counter-clockwise rotation by 90 degrees."""
    v = np.asarray(v, dtype=float)
    return np.array([-v[..., 1], v[..., 0]]).T if v.ndim > 1 else np.array([-v[1], v[0]])


@dataclass(frozen=True)
class Cone2:
    """Planar convex cone with apex ``apex`` between two unit edge rays.

    ``edge_dirs[0]`` is the clockwise edge and ``edge_dirs[1]`` the
    counter-clockwise one. The interior angle lies in ``(0, pi]``; an angle
    of exactly ``pi`` gives a half-plane.
    """

    apex: np.ndarray
    edge_dirs: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.edge_dirs, dtype=float)
        d = d / np.linalg.norm(d, axis=1)[:, None]
        cross = d[0, 0] * d[1, 1] - d[0, 1] * d[1, 0]
        if cross < -1e-12 or (abs(cross) <= 1e-12 and d[0] @ d[1] > 0):
            raise ValueError("cone interior angle must lie in (0, pi]")
        object.__setattr__(self, "edge_dirs", d)
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float))

    @property
    def E(self) -> np.ndarray:
        a_lo, a_hi = self.edge_dirs
        return np.vstack([perp(a_hi), -perp(a_lo)])

    @property
    def angle(self) -> float:
        a, b = self.edge_dirs
        return float(np.arctan2(a[0] * b[1] - a[1] * b[0], a @ b))


def cone_contains(cone: Cone2, pt, tol: float = 0.0) -> bool:
    return bool(np.all(cone.E @ (np.asarray(pt, dtype=float) - cone.apex) <= tol))


def signed_distance_polygon(vertices, pts) -> np.ndarray:
    """Signed distance from each point to a convex polygon (negative inside)."""
    v = np.asarray(vertices, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    A, b = halfspaces_from_vertices(v)
    face = pts @ A.T - b
    inside = np.all(face <= 0.0, axis=1)
    ab = np.roll(v, -1, axis=0) - v
    rel = pts[:, None, :] - v[None, :, :]
    t = np.clip(np.einsum("pkc,kc->pk", rel, ab) / np.einsum("kc,kc->k", ab, ab), 0.0, 1.0)
    d = np.linalg.norm(rel - t[..., None] * ab[None, :, :], axis=-1).min(axis=1)
    return np.where(inside, face.max(axis=1), d)
