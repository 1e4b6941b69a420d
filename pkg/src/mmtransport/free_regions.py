"""Convex obstacle-free regions grown from seed points.

Region growth alternates two steps: separating halfspaces through the
obstacle points closest to the current center, then recentring at the
Chebyshev center of the resulting polygon. Narrow-passage seeds are consumed
first, then uniform random seeds fill the remaining free space until a
Monte-Carlo coverage target is met.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geom2d import (ConvexRegion, DegenerateShape, chebyshev_center, closest_point_on_polygon,
                     halfspaces_from_vertices)
from .narrow_seeding import seed_points

log = logging.getLogger(__name__)

TARGETED = "targeted-seed"
RANDOM = "random-seed"


class SeedBlocked(ValueError):
    """Seed lies inside an obstacle or outside the workspace."""


class CoverageUnreachable(RuntimeError):
    """Region budget exhausted below the coverage target; ``partial`` holds the set."""

    def __init__(self, partial):
        self.partial = partial
        super().__init__(f"coverage {partial.coverage:.3f} after {len(partial.regions)} regions")


@dataclass
class RegionSet:
    regions: list = field(default_factory=list)
    provenance: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    coverage: float = 0.0
    coverage_history: list = field(default_factory=list)
    complete: bool = True

    def __len__(self):
        return len(self.regions)

    def to_dict(self) -> dict:
        return {
            "regions": [r.to_dict() for r in self.regions],
            "provenance": list(self.provenance),
            "seeds": [np.asarray(s).tolist() for s in self.seeds],
            "coverage": self.coverage,
            "complete": self.complete,
        }

    @classmethod
    def from_dict(cls, d) -> "RegionSet":
        return cls(regions=[ConvexRegion.from_dict(r) for r in d["regions"]],
                   provenance=list(d["provenance"]),
                   seeds=[np.asarray(s, float) for s in d.get("seeds", [])],
                   coverage=float(d.get("coverage", 0.0)),
                   complete=bool(d.get("complete", True)))


def _shapes(obstacles):
    return [o.shape if hasattr(o, "shape") else np.asarray(o, float) for o in obstacles]


def _inside_any(shape_hs, pts, slack=0.0):
    pts = np.atleast_2d(pts)
    hit = np.zeros(len(pts), dtype=bool)
    for A, b in shape_hs:
        hit |= np.all(pts @ A.T <= b + slack, axis=1)
    return hit


def _separating_planes(center, shapes, bounds):
    """Tangent halfspaces excluding each obstacle, nearest obstacle first."""
    closest = [closest_point_on_polygon(s, center) for s in shapes]
    dist = [float(np.hypot(*(q - center))) for q in closest]
    A = [row for row in bounds.A]
    b = [val for val in bounds.b]
    for k in np.argsort(dist, kind="stable"):
        s, q = shapes[k], closest[k]
        Ak, bk = np.array(A), np.array(b)
        # already excluded by a single existing plane
        if np.any(np.all(s @ Ak.T >= bk - 1e-12, axis=0)):
            continue
        d = q - center
        nrm = np.hypot(*d)
        if nrm < 1e-12:
            raise SeedBlocked(f"center {center} touches an obstacle")
        a = d / nrm
        A.append(a)
        b.append(float(a @ q))
    return np.array(A), np.array(b)


def inflate_region(seed, obstacles, bounds: ConvexRegion, max_iter: int = 20,
                   tol: float = 1e-4) -> ConvexRegion:
    """Grow an obstacle-free convex region around ``seed``.

    The returned region always contains the seed: it is the latest iterate
    whose polygon still covers it.
    """
    seed = np.asarray(seed, dtype=float)
    shapes = _shapes(obstacles)
    if not bounds.contains(seed, slack=-1e-9):
        raise SeedBlocked(f"seed {seed} is outside the workspace")
    hs = [halfspaces_from_vertices(s) for s in shapes]
    if np.any(_inside_any(hs, seed, slack=1e-9)):
        raise SeedBlocked(f"seed {seed} is inside an obstacle")
    center = seed.copy()
    best = None
    for _ in range(max_iter):
        A, b = _separating_planes(center, shapes, bounds)
        try:
            region = ConvexRegion.from_halfspaces(A, b)
        except DegenerateShape:
            break
        if region.contains(seed, slack=1e-9):
            best = region
        new_center, _ = chebyshev_center(region.A, region.b, prefer=center)
        moved = float(np.hypot(*(new_center - center)))
        center = new_center
        if moved < tol:
            break
    if best is None:
        raise SeedBlocked(f"no region with positive interior grows from {seed}")
    return best


class _CoverageSampler:
    """Fixed Monte-Carlo sample of W_free shared by every coverage estimate."""

    def __init__(self, shapes, bounds: ConvexRegion, rng, n_samples: int):
        lo = bounds.vertices.min(axis=0)
        hi = bounds.vertices.max(axis=0)
        pts = []
        hs = [halfspaces_from_vertices(s) for s in shapes]
        while sum(len(p) for p in pts) < n_samples:
            cand = lo + (hi - lo) * rng.random((n_samples, 2))
            ok = np.all(cand @ bounds.A.T <= bounds.b, axis=1) & ~_inside_any(hs, cand)
            pts.append(cand[ok])
        self.points = np.vstack(pts)[:n_samples]
        self.covered = np.zeros(len(self.points), dtype=bool)

    def add(self, region: ConvexRegion) -> float:
        self.covered |= np.all(self.points @ region.A.T <= region.b, axis=1)
        return self.fraction

    @property
    def fraction(self) -> float:
        return float(self.covered.mean())


def build_region_set(obstacles, bounds: ConvexRegion, rng=None, coverage_target: float = 0.95,
                     max_regions: int = 40, n_samples: int = 10_000, strict: bool = False,
                     seeds=None) -> RegionSet:
    """Targeted regions from narrow-gap seeds, then random regions until coverage.

    With ``strict`` a shortfall raises :class:`CoverageUnreachable`;
    otherwise the partial set is returned with ``complete = False``.
    """
    if not 0 < coverage_target <= 1:
        raise ValueError("coverage_target must lie in (0, 1]")
    rng = np.random.default_rng(0) if rng is None else rng
    obstacles = list(obstacles)
    shapes = _shapes(obstacles)
    sampler = _CoverageSampler(shapes, bounds, rng, n_samples)
    out = RegionSet()

    def accept(region, how, seed):
        out.regions.append(region)
        out.provenance.append(how)
        out.seeds.append(np.asarray(seed, float))
        out.coverage = sampler.add(region)
        out.coverage_history.append(out.coverage)

    if seeds is None:
        seeds = seed_points(obstacles, bounds, rng=rng) if obstacles else np.zeros((0, 2))
    for s in seeds:
        if len(out) >= max_regions:
            break
        if any(r.contains(s, slack=1e-9) for r in out.regions):
            log.info("targeted seed %s already covered, skipped", s)
            continue
        try:
            accept(inflate_region(s, obstacles, bounds), TARGETED, s)
        except SeedBlocked as e:
            log.info("targeted seed skipped: %s", e)

    misses = 0
    while out.coverage < coverage_target and len(out) < max_regions:
        free = np.flatnonzero(~sampler.covered)
        if len(free) == 0:
            break
        s = sampler.points[free[rng.integers(len(free))]]
        try:
            accept(inflate_region(s, obstacles, bounds), RANDOM, s)
        except SeedBlocked as e:
            misses += 1
            log.debug("random seed skipped: %s", e)
            if misses > 10 * max_regions:
                break
    if out.coverage < coverage_target:
        out.complete = False
        if strict:
            raise CoverageUnreachable(out)
        log.warning("coverage %.3f below target %.3f", out.coverage, coverage_target)
    return out
