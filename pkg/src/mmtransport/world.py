"""Environment model: bounded workspace, static convex obstacles and scripted
dynamic obstacles, plus the constant-velocity predictor used online."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from .geom2d import ConvexRegion, DegenerateShape, is_convex, point_in_polygon, polygon_area


class ParseError(ValueError):
    """Scenario document is malformed."""


class ValidationError(ValueError):
    """Scenario document parses but violates a world invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class StaticObstacle:
    shape: np.ndarray
    id: int

    def __post_init__(self):
        object.__setattr__(self, "shape", np.asarray(self.shape, dtype=float))


@dataclass(frozen=True)
class DynamicObstacle:
    """Circular obstacle following a scripted motion.

    ``kind`` is ``"linear"`` (``p0 + v0 t``) or ``"curvilinear"``, whose
    velocity is ``amplitude * [cos(rate t), -sin(rate t)]``.
    """

    id: int
    radius: float
    kind: str
    p0: np.ndarray
    v0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    amplitude: float = 0.0
    rate: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("dynamic obstacle radius must be positive")
        if self.kind not in ("linear", "curvilinear"):
            raise ValueError(f"unknown motion script {self.kind!r}")
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float))


def dynamic_state(obs: DynamicObstacle, t: float):
    """True position and velocity of ``obs`` at time ``t``."""
    if obs.kind == "linear":
        return obs.p0 + obs.v0 * t, obs.v0.copy()
    A, w = obs.amplitude, obs.rate
    x = w * t
    vel = A * np.array([np.cos(x), -np.sin(x)])
    # sin(x)/w and (cos(x) - 1)/w written through sinc, so tiny rates stay finite
    pos = obs.p0 + A * t * np.array([np.sinc(x / np.pi), -np.sin(0.5 * x) * np.sinc(x / (2 * np.pi))])
    return pos, vel


def predict_positions(p, v, N_h: int, T_c: float) -> np.ndarray:
    """Constant-velocity extrapolation ``p + v k T_c`` for ``k = 1..N_h``."""
    if N_h < 1 or T_c <= 0:
        raise ValueError("need N_h >= 1 and T_c > 0")
    k = np.arange(1, N_h + 1, dtype=float)[:, None]
    return np.asarray(p, float)[None, :] + np.asarray(v, float)[None, :] * (k * T_c)


@dataclass(frozen=True)
class World:
    bounds: ConvexRegion
    statics: tuple
    dynamics: tuple
    start: np.ndarray
    goal: np.ndarray
    formation: dict = field(default_factory=dict, repr=False)
    planner_params: dict = field(default_factory=dict, repr=False)
    source_hash: str = ""

    def free_clearance(self, pt) -> float:
        """Signed distance from ``pt`` to the nearest static boundary."""
        from .geom2d import closest_point_on_polygon

        pt = np.asarray(pt, dtype=float)
        d = float(self.bounds.margin(pt)[0])
        for o in self.statics:
            if point_in_polygon(o.shape, pt):
                return -1.0
            q = closest_point_on_polygon(o.shape, pt)
            d = min(d, float(np.hypot(*(q - pt))))
        return d


def _arr(x, shape_tail, what):
    try:
        a = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as e:
        raise ParseError(f"{what}: expected numbers") from e
    if a.ndim != len(shape_tail) or any(s and s != d for s, d in zip(shape_tail, a.shape)):
        raise ParseError(f"{what}: bad shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParseError(f"{what}: non-finite value")
    return a


def scenario_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_scenario(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"scenario is not valid YAML: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("scenario root must be a mapping")
    for key in ("bounds", "start", "goal"):
        if key not in doc:
            raise ParseError(f"missing key {key!r}")
    return doc


def validate_scenario(doc: dict) -> list:
    """Collect every invariant violation of a parsed scenario document."""
    violations = []
    try:
        bounds_v = _arr(doc["bounds"], (0, 2), "bounds")
        bounds = ConvexRegion.from_vertices(bounds_v)
    except (DegenerateShape, ParseError) as e:
        return [f"bounds: {e}"]
    shapes = []
    for k, s in enumerate(doc.get("static_obstacles") or []):
        try:
            v = _arr(s, (0, 2), f"static_obstacles[{k}]")
        except ParseError as e:
            violations.append(str(e))
            continue
        if len(v) < 3 or abs(polygon_area(v)) < 1e-12:
            violations.append(f"static_obstacles[{k}]: degenerate polygon")
        elif not is_convex(v):
            violations.append(f"static_obstacles[{k}]: polygon is not convex")
        else:
            shapes.append(v)
    for key in ("start", "goal"):
        try:
            p = _arr(doc[key], (2,), key)
        except ParseError as e:
            violations.append(str(e))
            continue
        if not bounds.contains(p, slack=-1e-9):
            violations.append(f"{key} lies outside the workspace bounds")
        for k, v in enumerate(shapes):
            if point_in_polygon(v, p, slack=1e-9):
                violations.append(f"{key} lies inside static obstacle {k}")
    for k, d in enumerate(doc.get("dynamic_obstacles") or []):
        if not isinstance(d, dict):
            violations.append(f"dynamic_obstacles[{k}]: expected a mapping")
            continue
        if float(d.get("radius", 0)) <= 0:
            violations.append(f"dynamic_obstacles[{k}]: radius must be positive")
        if d.get("kind") not in ("linear", "curvilinear"):
            violations.append(f"dynamic_obstacles[{k}]: unknown kind {d.get('kind')!r}")
    return violations


def load_scenario(text: str) -> World:
    """Parse and validate a YAML scenario document into a :class:`World`."""
    doc = parse_scenario(text)
    violations = validate_scenario(doc)
    if violations:
        raise ValidationError(violations)
    bounds = ConvexRegion.from_vertices(_arr(doc["bounds"], (0, 2), "bounds"))
    statics = tuple(StaticObstacle(np.asarray(s, float), k)
                    for k, s in enumerate(doc.get("static_obstacles") or []))
    dynamics = []
    for k, d in enumerate(doc.get("dynamic_obstacles") or []):
        try:
            dynamics.append(DynamicObstacle(
                id=k, radius=float(d["radius"]), kind=d["kind"],
                p0=_arr(d["p0"], (2,), "p0"),
                v0=_arr(d.get("v0", [0, 0]), (2,), "v0"),
                amplitude=float(d.get("amplitude", 0.0)),
                rate=float(d.get("rate", 0.0)),
            ))
        except (KeyError, TypeError) as e:
            raise ParseError(f"dynamic_obstacles[{k}]: {e}") from e
    return World(
        bounds=bounds,
        statics=statics,
        dynamics=tuple(dynamics),
        start=_arr(doc["start"], (2,), "start"),
        goal=_arr(doc["goal"], (2,), "goal"),
        formation=doc.get("formation") or {},
        planner_params=doc.get("planner_params") or {},
        source_hash=scenario_hash(text),
    )


def load_scenario_file(path) -> World:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())
