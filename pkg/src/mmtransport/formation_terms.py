"""Reduced-coordinate formation kinematics with hand-written reverse-mode derivatives.

A formation knot is the vector ``z = [p (2), psi, B (2n), phi (n)]``: object
pose, base positions and base headings. End effectors sit on the object grasp
points by construction, so the arm joints follow from inverse kinematics:

    a_i = G_i - b_i,   q2_i = |a_i|,   theta_i = atan2(a_i),
    q1_i = theta_i - phi_i,   q3_i = psi - theta_i.

Several knots are handled at once as a ``(K, 3 + 3n)`` array.
"""
from __future__ import annotations

import numpy as np

from .mmr_model import FormationConfig, FormationSpec, wrap_angle


def knot_dim(n: int) -> int:
    return 3 + 3 * n


def pack(config: FormationConfig) -> np.ndarray:
    return np.concatenate([config.p, [config.psi], config.base.reshape(-1), config.phi])


def unpack(Z, n: int):
    Z = np.atleast_2d(Z)
    K = len(Z)
    return Z[:, 0:2], Z[:, 2], Z[:, 3:3 + 2 * n].reshape(K, n, 2), Z[:, 3 + 2 * n:3 + 3 * n]


def _perp(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


class Forward:
    """Every derived quantity of a stack of knots, kept for the backward pass."""

    def __init__(self, Z, spec: FormationSpec):
        self.spec = spec
        self.n = n = spec.n
        self.Z = np.atleast_2d(np.asarray(Z, dtype=float))
        self.p, self.psi, self.B, self.phi = unpack(self.Z, n)
        c, s = np.cos(self.psi)[:, None], np.sin(self.psi)[:, None]
        o = spec.grasp.offsets
        self.Ro = np.stack([c * o[:, 0] - s * o[:, 1], s * o[:, 0] + c * o[:, 1]], axis=-1)
        self.G = self.p[:, None, :] + self.Ro
        self.a = self.G - self.B
        self.q2 = np.linalg.norm(self.a, axis=-1)
        self.theta = np.arctan2(self.a[..., 1], self.a[..., 0])

    @property
    def q1(self):
        return wrap_angle(self.theta - self.phi)

    @property
    def q3(self):
        return wrap_angle(self.psi[:, None] - self.theta)

    @property
    def rel_q3(self):
        return wrap_angle(self.psi[:, None] - self.theta - self.spec.q3_offset[None, :])

    @property
    def arm_centers(self):
        k = self.spec.arm_kappa
        return (1.0 - k) * self.B + k * self.G

    def config(self, k: int = 0) -> FormationConfig:
        q = np.column_stack([self.q1[k], self.q2[k], self.q3[k]])
        return FormationConfig(self.p[k].copy(), float(self.psi[k]), self.B[k].copy(),
                               self.phi[k].copy(), q)

    def backward(self, gp=None, gpsi=None, gB=None, gphi=None, gq2=None, gtheta=None,
                 gG=None, garm=None) -> np.ndarray:
        """Pull gradients on derived quantities back to the knot vectors."""
        K, n = len(self.Z), self.n
        gG_tot = np.zeros((K, n, 2)) if gG is None else np.array(gG, dtype=float)
        gB_tot = np.zeros((K, n, 2)) if gB is None else np.array(gB, dtype=float)
        if garm is not None:
            k = self.spec.arm_kappa
            gG_tot += k * garm
            gB_tot += (1.0 - k) * garm
        if gq2 is not None or gtheta is not None:
            ga = np.zeros((K, n, 2))
            if gq2 is not None:
                ga += gq2[..., None] * self.a / self.q2[..., None]
            if gtheta is not None:
                ga += gtheta[..., None] * _perp(self.a) / (self.q2 ** 2)[..., None]
            gG_tot += ga
            gB_tot -= ga
        out = np.zeros_like(self.Z)
        out[:, 0:2] = gG_tot.sum(axis=1)
        if gp is not None:
            out[:, 0:2] += gp
        out[:, 2] = np.einsum("kic,kic->k", gG_tot, _perp(self.Ro))
        if gpsi is not None:
            out[:, 2] += gpsi
        out[:, 3:3 + 2 * n] = gB_tot.reshape(K, -1)
        if gphi is not None:
            out[:, 3 + 2 * n:] = gphi
        return out


def joint_bound_terms(f: Forward, backoff: float = 0.0):
    """Inequalities ``<= 0`` for q2, relative q3 and (if narrow) q1 limits.

    Returns ``(values (K, m), vjp)`` where ``vjp(w)`` maps weights of shape
    ``(K, m)`` to a knot gradient.
    """
    spec = f.spec
    lo, hi = spec.arm.q_lower, spec.arm.q_upper
    b3 = spec.q3_rel_bounds
    rel = f.rel_q3
    parts = [lo[1] + backoff - f.q2, f.q2 - hi[1] + backoff,
             b3[:, 0][None, :] + backoff - rel, rel - b3[:, 1][None, :] + backoff]
    narrow = hi[0] - lo[0] < 2 * np.pi
    if narrow:
        q1 = f.q1
        parts += [lo[0] + backoff - q1, q1 - hi[0] + backoff]
    vals = np.concatenate(parts, axis=1)
    n = f.n

    def vjp(w):
        w = w.reshape(len(f.Z), -1)
        w_lo2, w_hi2, w_lo3, w_hi3 = (w[:, j * n:(j + 1) * n] for j in range(4))
        gq2 = -w_lo2 + w_hi2
        grel = -w_lo3 + w_hi3
        gtheta = -grel
        gpsi = grel.sum(axis=1)
        gphi = None
        if narrow:
            g1 = -w[:, 4 * n:5 * n] + w[:, 5 * n:6 * n]
            gtheta = gtheta + g1
            gphi = -g1
        return f.backward(gpsi=gpsi, gphi=gphi, gq2=gq2, gtheta=gtheta)

    return vals, vjp


class FaceSet:
    """Region faces stacked over knots: row ``j`` belongs to knot ``kidx[j]``."""

    def __init__(self, regions_per_knot):
        A, b, k = [], [], []
        for kk, r in enumerate(regions_per_knot):
            A.append(r.A)
            b.append(r.b)
            k.append(np.full(len(r.b), kk))
        self.A = np.vstack(A)
        self.b = np.concatenate(b)
        self.kidx = np.concatenate(k)

    @classmethod
    def merged(cls, regions):
        """All faces of ``regions`` applied to a single knot."""
        out = cls(regions)
        out.kidx = np.zeros(len(out.b), dtype=int)
        return out


def containment_terms(f: Forward, faces: FaceSet, d_safe: float, backoff: float = 0.0):
    """Static containment of base and object circles, ``a.c - b + r + d <= 0``."""
    spec = f.spec
    A, b, ki = faces.A, faces.b, faces.kidx
    base = np.einsum("fc,fic->fi", A, f.B[ki]) - b[:, None] + spec.r_base + d_safe + backoff
    obj = np.einsum("fc,fc->f", A, f.p[ki]) - b + spec.r_obj + d_safe + backoff
    vals = np.concatenate([base.reshape(-1), obj])
    K, n = len(f.Z), f.n
    F = len(b)

    def vjp(w):
        wb = w[:F * n].reshape(F, n)
        wo = w[F * n:]
        gB = np.zeros((K, n, 2))
        np.add.at(gB, ki, wb[..., None] * A[:, None, :])
        gp = np.zeros((K, 2))
        np.add.at(gp, ki, wo[:, None] * A)
        return f.backward(gp=gp, gB=gB)

    return vals, vjp


def body_circles(f: Forward):
    """Centers ``(K, 2n+1, 2)`` and radii ``(2n+1,)``: bases, object, arms."""
    spec = f.spec
    centers = np.concatenate([f.B, f.p[:, None, :], f.arm_centers], axis=1)
    radii = np.concatenate([np.full(f.n, spec.r_base), [spec.r_obj], np.full(f.n, spec.r_arm)])
    return centers, radii


def dynamic_terms(f: Forward, obstacles, d_safe_dyn: float, backoff: float = 0.0):
    """Distance inequalities ``r_d + r_m + d - |c_m - o_d| <= 0``.

    ``obstacles`` is a list of ``(positions (K, 2), radius)``, one position per
    knot of ``f``.
    """
    if not obstacles:
        return np.zeros(0), lambda w: np.zeros_like(f.Z)
    centers, radii = body_circles(f)
    n = f.n
    O = np.stack([o for o, _ in obstacles])           # (D, K, 2)
    rd = np.array([r for _, r in obstacles])          # (D,)
    diff = centers[None, :, :, :] - O[:, :, None, :]  # (D, K, M, 2)
    dist = np.linalg.norm(diff, axis=-1)
    vals = rd[:, None, None] + radii[None, None, :] + d_safe_dyn + backoff - dist
    unit = diff / np.maximum(dist, 1e-12)[..., None]

    def vjp(w):
        w = w.reshape(vals.shape)
        gc = -(w[..., None] * unit).sum(axis=0)       # (K, M, 2)
        return f.backward(gB=gc[:, :n], gp=gc[:, n], garm=gc[:, n + 1:])

    return vals.reshape(-1), vjp
