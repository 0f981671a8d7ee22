"""Scalar fields evaluable at arbitrary points with gradients.

All fields share a duck-typed interface: ``field(points)`` returns values
and ``field.gradient(points)`` returns gradients, both vectorized over a
(n, d) array of points.  Mesh-backed fields live in :mod:`cracklab.solver`;
this module provides analytic fields (homogeneous slit-sphere modes) and
the wrappers used by the frequency and blow-up machinery.
"""

from __future__ import annotations

import numpy as np

from .spectral import SlitSphereMode, ModeIndex, rung_indices


def _pts(points, dim):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != dim:
        raise ValueError(f"expected points in R^{dim}")
    return pts, np.ndim(points) > 1


def _radial_knots_of(field):
    """Radii where a field may kink (mesh ring radii), if known."""
    knots = getattr(field, "radial_knots", None)
    if knots is not None:
        return np.asarray(knots, dtype=float)
    mesh = getattr(field, "mesh", None)
    if mesh is not None and hasattr(mesh, "radial_knots"):
        return np.asarray(mesh.radial_knots, dtype=float)
    return None


class ConstantField:
    """Spatially constant field (no crack; used by trivial oracles)."""

    def __init__(self, dim, value=1.0):
        self.dim = dim
        self.value = float(value)

    def __call__(self, points):
        pts, batch = _pts(points, self.dim)
        out = np.full(len(pts), self.value)
        return out if batch else float(out[0])

    def gradient(self, points):
        pts, batch = _pts(points, self.dim)
        out = np.zeros_like(pts)
        return out if batch else out[0]


class HomogeneousModeField:
    """u(x) = coef * |x|^(k/2) * Y(x/|x|) for a slit-sphere eigenmode Y.

    The gradient splits into radial and tangential parts:
    grad u = r^(gamma-1) (gamma * Y * theta + grad_S Y), gamma = k/2.
    """

    def __init__(self, N, k, m=1, coefficient=1.0, mode: SlitSphereMode | None = None):
        self.N = N
        self.dim = N + 1
        self.k = k
        self.gamma = 0.5 * k
        self.coefficient = float(coefficient)
        if mode is None:
            idx = [i for i in rung_indices(N, k) if i.m == m]
            if not idx:
                raise ValueError(f"no mode (k={k}, m={m}) for N={N}")
            mode = SlitSphereMode(N, idx[0])
        self.mode = mode

    def __call__(self, points):
        pts, batch = _pts(points, self.dim)
        r = np.linalg.norm(pts, axis=1)
        safe = np.where(r == 0.0, 1.0, r)
        theta = pts / safe[:, None]
        out = self.coefficient * safe**self.gamma * self.mode(theta)
        out = np.where(r == 0.0, 0.0, out)
        return out if batch else float(out[0])

    def gradient(self, points):
        pts, batch = _pts(points, self.dim)
        r = np.linalg.norm(pts, axis=1)
        if np.any(r == 0.0):
            raise ValueError("gradient of a homogeneous mode is singular at 0")
        theta = pts / r[:, None]
        val = self.mode(theta)
        gs = self.mode.surface_gradient(theta)
        out = self.coefficient * r[:, None] ** (self.gamma - 1.0) * (
            self.gamma * val[:, None] * theta + gs
        )
        return out if batch else out[0]


class LinearCombinationField:
    def __init__(self, fields, weights):
        if not fields:
            raise ValueError("empty combination")
        self.dim = fields[0].dim
        self.fields = list(fields)
        self.weights = [float(w) for w in weights]
        knots = [k for k in (_radial_knots_of(f) for f in fields) if k is not None]
        if knots:
            self.radial_knots = np.unique(np.concatenate(knots))

    def __call__(self, points):
        return sum(w * f(points) for f, w in zip(self.fields, self.weights))

    def gradient(self, points):
        return sum(w * f.gradient(points) for f, w in zip(self.fields, self.weights))


class ScaledField:
    """w(x) = u(lambda x) / norm: the blow-up rescaling."""

    def __init__(self, base, lam, norm=1.0):
        self.base = base
        self.dim = base.dim
        self.lam = float(lam)
        self.norm = float(norm)
        knots = _radial_knots_of(base)
        if knots is not None:
            self.radial_knots = knots / self.lam

    def __call__(self, points):
        pts, batch = _pts(points, self.dim)
        out = self.base(self.lam * pts) / self.norm
        return out if batch else float(np.atleast_1d(out)[0])

    def gradient(self, points):
        pts, batch = _pts(points, self.dim)
        out = self.lam * self.base.gradient(self.lam * pts) / self.norm
        return out if batch else np.atleast_2d(out)[0]


class PullbackField:
    """u = v o Xi: evaluate a straightened field in curved-crack coordinates.

    grad u(y) = (Jac Xi(y))^T grad v(Xi(y)).
    """

    def __init__(self, straightened, straightening):
        self.base = straightened
        self.map = straightening
        self.dim = straightened.dim
        knots = _radial_knots_of(straightened)
        if knots is not None:
            # the straightening preserves radii, so kinks stay at ring radii
            self.radial_knots = knots

    def __call__(self, points):
        pts, batch = _pts(points, self.dim)
        out = self.base(self.map.xi(pts))
        return out if batch else float(np.atleast_1d(out)[0])

    def gradient(self, points):
        pts, batch = _pts(points, self.dim)
        x = self.map.xi(pts)
        gv = np.atleast_2d(self.base.gradient(x))
        J = self.map.jac_xi(pts)
        out = np.einsum("nji,nj->ni", J, gv)
        return out if batch else out[0]
