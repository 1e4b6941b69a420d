"""Mobile-manipulator and formation kinematics.

Each robot is a holonomic base ``(x, y, phi)`` carrying a planar
revolute-prismatic-revolute arm ``q = (q1, q2, q3)``. The end effector sits at
``p_i + q2 [cos(phi + q1), sin(phi + q1)]`` and its heading is
``phi + q1 + q3``, which the grasp locks to the object heading ``psi``.

Joint ``q3`` limits are expressed relative to the robot's nominal approach,
``q3_offset = wrap(pi - angle(grasp_offset))``, the value of ``q3`` when the
arm points radially at the object center. The self-collision cones bound that
relative angle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geom2d import Circle, Cone2

SINGULAR_REACH = 1e-9


class SingularArm(ValueError):
    """End effector coincides with the arm base, so ``q1`` is undefined."""


class InvalidSpec(ValueError):
    pass


class ConeInfeasible(ValueError):
    """A robot cannot sit inside its self-collision cone at any ``q3``."""


def wrap_angle(a):
    """Wrap to ``(-pi, pi]``."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rot(psi) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ArmSpec:
    """Joint position and rate bounds of the reduced arm.

    ``q_lower[2]``/``q_upper[2]`` bound ``q3`` relative to the nominal approach.
    """

    q_lower: np.ndarray
    q_upper: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray

    def __post_init__(self):
        for name in ("q_lower", "q_upper", "u_lower", "u_upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.q_lower >= self.q_upper) or np.any(self.u_lower >= self.u_upper):
            raise InvalidSpec("arm bounds must satisfy lower < upper")
        if self.q_lower[1] <= 0:
            raise InvalidSpec("prismatic lower bound must be positive")

    @property
    def q2_max(self) -> float:
        return float(self.q_upper[1])


@dataclass(frozen=True)
class BaseSpec:
    footprint: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray

    def __post_init__(self):
        for name in ("footprint", "u_lower", "u_upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.u_lower >= self.u_upper):
            raise InvalidSpec("base velocity bounds must satisfy lower < upper")

    @property
    def r_v(self) -> float:
        return float(np.max(np.linalg.norm(self.footprint, axis=1)))

    @property
    def r_base(self) -> float:
        return self.r_v


@dataclass(frozen=True)
class GraspSpec:
    offsets: np.ndarray
    object_footprint: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=float))
        object.__setattr__(self, "object_footprint", np.asarray(self.object_footprint, dtype=float))
        if len(self.offsets) < 2:
            raise InvalidSpec("a formation needs at least two robots")

    @property
    def n(self) -> int:
        return len(self.offsets)

    @property
    def r_obj(self) -> float:
        return float(np.max(np.linalg.norm(self.object_footprint, axis=1)))


@dataclass(frozen=True)
class MmrState:
    p: np.ndarray
    phi: float
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, [self.phi], self.q])

    @classmethod
    def from_vector(cls, v) -> "MmrState":
        v = np.asarray(v, dtype=float)
        return cls(v[:2], float(v[2]), v[3:6])


@dataclass(frozen=True)
class ConeSpec:
    cone: Cone2
    beta1: float
    beta2: float
    alpha_lo: float = -np.pi
    alpha_hi: float = np.pi


@dataclass(frozen=True)
class FormationConfig:
    """Object pose plus every robot's base pose and arm joints (array form)."""

    p: np.ndarray
    psi: float
    base: np.ndarray
    phi: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "psi", float(self.psi))
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float).reshape(-1))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1, 3))

    @property
    def n(self) -> int:
        return len(self.base)

    @property
    def robots(self) -> list:
        return [MmrState(self.base[i], float(self.phi[i]), self.q[i]) for i in range(self.n)]

    def robot_vectors(self) -> np.ndarray:
        """``(n, 6)`` array of ``[x, y, phi, q1, q2, q3]`` per robot."""
        return np.column_stack([self.base, self.phi, self.q])

    def with_robot_vectors(self, Q, p=None, psi=None) -> "FormationConfig":
        Q = np.asarray(Q, dtype=float)
        return FormationConfig(self.p if p is None else p, self.psi if psi is None else psi,
                               Q[:, :2], Q[:, 2], Q[:, 3:6])

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "psi": self.psi, "base": self.base.tolist(),
                "phi": self.phi.tolist(), "q": self.q.tolist()}

    @classmethod
    def from_dict(cls, d) -> "FormationConfig":
        return cls(d["p"], d["psi"], d["base"], d["phi"], d["q"])


def ee_position(state: MmrState) -> np.ndarray:
    th = state.phi + state.q[0]
    return state.p + state.q[1] * np.array([np.cos(th), np.sin(th)])


def inverse_arm(p_base, phi, p_ee, psi) -> np.ndarray:
    """Arm joints placing the end effector at ``p_ee`` with heading ``psi``."""
    d = np.asarray(p_ee, dtype=float) - np.asarray(p_base, dtype=float)
    q2 = float(np.hypot(d[0], d[1]))
    if q2 < SINGULAR_REACH:
        raise SingularArm("end effector coincides with the arm base")
    th = float(np.arctan2(d[1], d[0]))
    q1 = wrap_angle(th - phi)
    q3 = wrap_angle(psi - phi - q1)
    return np.array([q1, q2, q3])


def _first_order(q, u):
    return u


def step(q, u, T_c: float, rhs=None) -> np.ndarray:
    """One fourth-order Runge-Kutta step of ``q' = rhs(q, u)`` (default ``u``)."""
    if T_c <= 0:
        raise ValueError("T_c must be positive")
    f = rhs or _first_order
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    k1 = f(q, u)
    k2 = f(q + 0.5 * T_c * k1, u)
    k3 = f(q + 0.5 * T_c * k2, u)
    k4 = f(q + T_c * k3, u)
    return q + (T_c / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def arm_circle(p_base, p_ee, r_base: float, q2_max: float) -> Circle:
    if q2_max <= r_base:
        raise InvalidSpec("arm reach must exceed the base circumradius")
    p_base = np.asarray(p_base, dtype=float)
    center = p_base + 0.5 * (1.0 + r_base / q2_max) * (np.asarray(p_ee, float) - p_base)
    return Circle(center, 0.5 * (q2_max - r_base))


def build_cones(p, grasp: GraspSpec, psi: float = 0.0) -> list:
    """Partition the plane around ``p`` into one cone per robot.

    Cone edges bisect consecutive grasp rays, which gives equal ``2 pi / n``
    sectors for equispaced grasps.
    """
    off = grasp.offsets
    gam = np.arctan2(off[:, 1], off[:, 0]) + psi
    order = np.argsort(np.mod(gam, 2 * np.pi), kind="stable")
    n = len(gam)
    cones = [None] * n
    for rank, i in enumerate(order):
        prev_i = order[(rank - 1) % n]
        next_i = order[(rank + 1) % n]
        gap_prev = np.mod(gam[i] - gam[prev_i], 2 * np.pi) or 2 * np.pi
        gap_next = np.mod(gam[next_i] - gam[i], 2 * np.pi) or 2 * np.pi
        beta1, beta2 = 0.5 * gap_prev, 0.5 * gap_next
        lo = gam[i] - beta1
        hi = gam[i] + beta2
        dirs = np.array([[np.cos(lo), np.sin(lo)], [np.cos(hi), np.sin(hi)]])
        cones[i] = ConeSpec(Cone2(np.asarray(p, float), dirs), float(beta1), float(beta2))
    return cones


def cone_joint_limits(beta1, beta2, grasp_radius, r_v, q2_max):
    """Relative ``q3`` interval keeping the base footprint inside its cone.

    ``beta1`` is the angle from the grasp ray to the clockwise edge (reached
    for positive relative ``q3``), ``beta2`` to the counter-clockwise edge.
    A side whose ``arccos`` argument exceeds 1 never binds and returns
    ``+/-pi``.
    """

    def side(beta):
        c = (grasp_radius * np.sin(beta) - r_v) / q2_max
        if c < -1.0:
            raise ConeInfeasible("base footprint cannot fit inside the cone")
        if c > 1.0:
            return np.pi
        return min(np.pi, 0.5 * np.pi + beta - np.arccos(c))

    hi = side(beta1)
    lo = -side(beta2)
    if lo >= hi:
        raise ConeInfeasible(f"empty q3 interval [{lo:.4f}, {hi:.4f}]")
    return float(lo), float(hi)


@dataclass(frozen=True)
class FormationSpec:
    """Everything needed to evaluate a formation of ``n`` identical robots."""

    base: BaseSpec
    arm: ArmSpec
    grasp: GraspSpec
    q2_nominal: float = 0.0
    extras: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.arm.q2_max <= self.base.r_base:
            raise InvalidSpec("arm reach must exceed the base circumradius")
        if not self.q2_nominal:
            object.__setattr__(self, "q2_nominal",
                               0.5 * (self.arm.q_lower[1] + self.arm.q_upper[1]))

    @property
    def n(self) -> int:
        return self.grasp.n

    @property
    def r_base(self) -> float:
        return self.base.r_base

    @property
    def r_obj(self) -> float:
        return self.grasp.r_obj

    @property
    def r_arm(self) -> float:
        return 0.5 * (self.arm.q2_max - self.base.r_base)

    @property
    def arm_kappa(self) -> float:
        return 0.5 * (1.0 + self.base.r_base / self.arm.q2_max)

    @cached_property
    def q3_offset(self) -> np.ndarray:
        off = self.grasp.offsets
        return wrap_angle(np.pi - np.arctan2(off[:, 1], off[:, 0]))

    @cached_property
    def cones(self) -> list:
        """Object-frame cones (apex at origin) carrying the ``q3`` limits."""
        out = []
        radii = np.linalg.norm(self.grasp.offsets, axis=1)
        for i, c in enumerate(build_cones(np.zeros(2), self.grasp)):
            lo, hi = cone_joint_limits(c.beta1, c.beta2, radii[i], self.base.r_v, self.arm.q2_max)
            out.append(ConeSpec(c.cone, c.beta1, c.beta2, lo, hi))
        return out

    @cached_property
    def q3_rel_bounds(self) -> np.ndarray:
        """``(n, 2)`` admissible relative ``q3`` interval after cone modification."""
        b = np.empty((self.n, 2))
        for i, c in enumerate(self.cones):
            b[i, 0] = max(self.arm.q_lower[2], c.alpha_lo)
            b[i, 1] = min(self.arm.q_upper[2], c.alpha_hi)
            if b[i, 0] >= b[i, 1]:
                raise ConeInfeasible(f"robot {i}: empty admissible q3 interval")
        return b

    def grasp_points(self, p, psi) -> np.ndarray:
        return np.asarray(p, float)[None, :] + self.grasp.offsets @ rot(psi).T

    def nominal(self, p, psi: float, q2=None) -> FormationConfig:
        """Arms radial at length ``q2``, bases facing the object center."""
        q2 = self.q2_nominal if q2 is None else q2
        G = self.grasp_points(p, psi)
        radial = G - np.asarray(p, float)[None, :]
        radial /= np.linalg.norm(radial, axis=1)[:, None]
        base = G + q2 * radial
        phi = np.arctan2(-radial[:, 1], -radial[:, 0])
        return self.from_poses(p, psi, base, phi)

    def from_poses(self, p, psi, base, phi) -> FormationConfig:
        """Grasp-consistent configuration with arm joints from inverse kinematics."""
        G = self.grasp_points(p, psi)
        base = np.asarray(base, dtype=float).reshape(-1, 2)
        phi = np.asarray(phi, dtype=float).reshape(-1)
        q = np.array([inverse_arm(base[i], phi[i], G[i], psi) for i in range(self.n)])
        return FormationConfig(p, psi, base, phi, q)

    def relative_q3(self, config: FormationConfig) -> np.ndarray:
        return wrap_angle(config.q[:, 2] - self.q3_offset)

    def admissible(self, config: FormationConfig, tol: float = 1e-9) -> bool:
        q = config.q
        lo, hi = self.arm.q_lower, self.arm.q_upper
        ok = np.all(q[:, 1] >= lo[1] - tol) and np.all(q[:, 1] <= hi[1] + tol)
        if hi[0] - lo[0] < 2 * np.pi:
            q1 = wrap_angle(q[:, 0])
            ok = ok and np.all(q1 >= lo[0] - tol) and np.all(q1 <= hi[0] + tol)
        rel = self.relative_q3(config)
        b = self.q3_rel_bounds
        return bool(ok and np.all(rel >= b[:, 0] - tol) and np.all(rel <= b[:, 1] + tol))

    def u_lower(self) -> np.ndarray:
        return np.concatenate([self.base.u_lower, self.arm.u_lower])

    def u_upper(self) -> np.ndarray:
        return np.concatenate([self.base.u_upper, self.arm.u_upper])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "base_footprint": self.base.footprint.tolist(),
            "base_u_lower": self.base.u_lower.tolist(),
            "base_u_upper": self.base.u_upper.tolist(),
            "arm_q_lower": self.arm.q_lower.tolist(),
            "arm_q_upper": self.arm.q_upper.tolist(),
            "arm_u_lower": self.arm.u_lower.tolist(),
            "arm_u_upper": self.arm.u_upper.tolist(),
            "grasp_offsets": self.grasp.offsets.tolist(),
            "object_footprint": self.grasp.object_footprint.tolist(),
            "q2_nominal": self.q2_nominal,
        }


def ee_positions(config: FormationConfig) -> np.ndarray:
    th = config.phi + config.q[:, 0]
    return config.base + config.q[:, 1:2] * np.column_stack([np.cos(th), np.sin(th)])


def grasp_errors(config: FormationConfig, spec: FormationSpec) -> np.ndarray:
    """Per-robot distance between end effector and its object grasp point."""
    return np.linalg.norm(ee_positions(config) - spec.grasp_points(config.p, config.psi), axis=1)


def heading_errors(config: FormationConfig) -> np.ndarray:
    return np.abs(wrap_angle(config.phi + config.q[:, 0] + config.q[:, 2] - config.psi))


def bounding_circles(config: FormationConfig, spec: FormationSpec) -> list:
    """Base circles (one per robot), the object circle, then one arm circle per robot."""
    ee = ee_positions(config)
    out = [Circle(config.base[i], spec.r_base) for i in range(config.n)]
    out.append(Circle(config.p, spec.r_obj))
    out += [arm_circle(config.base[i], ee[i], spec.r_base, spec.arm.q2_max) for i in range(config.n)]
    return out


def circle_arrays(config: FormationConfig, spec: FormationSpec, arms: bool = True):
    """Centers ``(m, 2)`` and radii ``(m,)`` in :func:`bounding_circles` order."""
    centers = [config.base, config.p[None, :]]
    radii = [np.full(config.n, spec.r_base), [spec.r_obj]]
    if arms:
        ee = ee_positions(config)
        centers.append(config.base + spec.arm_kappa * (ee - config.base))
        radii.append(np.full(config.n, spec.r_arm))
    return np.vstack(centers), np.concatenate(radii)


DEFAULT_FORMATION = {
    "n": 5,
    "object_radius": 0.3,
    "base_footprint": [[0.1, 0.075], [-0.1, 0.075], [-0.1, -0.075], [0.1, -0.075]],
    "base_u_lower": [-0.3, -0.3, -0.6],
    "base_u_upper": [0.3, 0.3, 0.6],
    # default reach 0.345 m = 0.100 + 0.125 + 0.120 link lengths of the 5-DoF arm
    "arm_q_lower": [-np.pi, 0.1, -np.pi],
    "arm_q_upper": [np.pi, 0.345, np.pi],
    "arm_u_lower": [-0.6, -0.1, -0.6],
    "arm_u_upper": [0.6, 0.1, 0.6],
    "q2_nominal": 0.2,
}


def formation_from_dict(d: dict | None) -> FormationSpec:
    """Build a :class:`FormationSpec` from a scenario ``formation`` block.

    Without explicit ``grasp_offsets`` the robots grasp the vertices of a
    regular ``n``-gon object of circumradius ``object_radius``.
    """
    cfg = dict(DEFAULT_FORMATION)
    cfg.update(d or {})
    n = int(cfg["n"])
    if "grasp_offsets" in cfg:
        offsets = np.asarray(cfg["grasp_offsets"], dtype=float)
    else:
        ang = 2 * np.pi * np.arange(n) / n
        offsets = float(cfg["object_radius"]) * np.column_stack([np.cos(ang), np.sin(ang)])
    footprint = np.asarray(cfg.get("object_footprint", offsets), dtype=float)
    return FormationSpec(
        base=BaseSpec(cfg["base_footprint"], cfg["base_u_lower"], cfg["base_u_upper"]),
        arm=ArmSpec(cfg["arm_q_lower"], cfg["arm_q_upper"], cfg["arm_u_lower"], cfg["arm_u_upper"]),
        grasp=GraspSpec(offsets, footprint),
        q2_nominal=float(cfg.get("q2_nominal", 0.0)),
    )
