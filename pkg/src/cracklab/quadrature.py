"""Quadrature rules shared by the spectral, frequency and blow-up machinery.

Two building blocks live here: a product Gauss-Legendre quadrature on the
unit sphere S^N (N = 1 or 2) aligned with the slit, and a geometric radial
grid with power-law-aware cumulative integration used for volume integrals
of near-homogeneous integrands.
"""

from __future__ import annotations

import numpy as np


def gauss_legendre(n, a, b):
    """Gauss-Legendre nodes and weights on the interval (a, b)."""
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


class SphereQuadrature:
    """Product Gauss-Legendre quadrature on S^N minus the slit.

    Coordinates are adapted to the slit: every node carries a slit angle
    ``t`` in (0, 2pi) measured from the positive x_N axis in the
    (x_N, x_{N+1}) plane, so the square-root factor of the modes varies
    along a single coordinate.  For N = 2 the polar angle ``phi`` in
    (0, pi) is measured from the positive x' axis and the surface measure
    factorizes as sin(phi) dphi dt.

    Attributes
    ----------
    nodes : (Q, N+1) array of points on the unit sphere
    weights : (Q,) array summing to the sphere area
    t : (Q,) slit angles
    phi : (Q,) polar angles (N = 2 only)
    """

    def __init__(self, N, n_t=64, n_phi=64):
        if N not in (1, 2):
            raise ValueError(f"sphere quadrature implemented for N in {{1, 2}}, got {N}")
        self.N = N
        self.dim = N + 1
        self.n_t = int(n_t)
        self.n_phi = int(n_phi)
        t, wt = gauss_legendre(self.n_t, 0.0, 2.0 * np.pi)
        if N == 1:
            self.t = t
            self.phi = None
            self.weights = wt
            self.nodes = np.column_stack([np.cos(t), np.sin(t)])
        else:
            phi, wphi = gauss_legendre(self.n_phi, 0.0, np.pi)
            T, P = np.meshgrid(t, phi, indexing="ij")
            self.t = T.ravel()
            self.phi = P.ravel()
            W = np.outer(wt, wphi * np.sin(phi))
            self.weights = W.ravel()
            sp = np.sin(self.phi)
            self.nodes = np.column_stack(
                [np.cos(self.phi), sp * np.cos(self.t), sp * np.sin(self.t)]
            )

    def refine(self):
        """Quadrature of the same kind with both node counts doubled."""
        return SphereQuadrature(self.N, 2 * self.n_t, 2 * self.n_phi)

    def integrate(self, values):
        """Integrate nodal samples over the sphere."""
        return float(np.dot(self.weights, values))

    @property
    def area(self):
        return float(np.sum(self.weights))


def default_sphere_quadrature(N):
    if N == 1:
        return SphereQuadrature(1, n_t=192)
    return SphereQuadrature(2, n_t=64, n_phi=64)


def _interval_power_integral(s0, s1, y0, y1, p_extra):
    """Integral of y(s) * s**p_extra over (s0, s1).

    When both endpoint values share a sign, y is interpolated as a local
    power law c*s^p (exact for homogeneous integrands); otherwise the
    combined integrand is handled with the trapezoid rule.
    """
    if y0 == 0.0 and y1 == 0.0:
        return 0.0
    f0 = y0 * s0**p_extra
    f1 = y1 * s1**p_extra
    log_ratio = np.log(s1 / s0) if s0 > 0.0 else np.inf
    if y0 * y1 > 0.0 and 1e-3 < log_ratio < np.inf:
        p = np.log(abs(y1 / y0)) / log_ratio + p_extra
        if abs(p) < 60.0 and abs(p + 1.0) > 1e-9:
            return (f1 * s1 - f0 * s0) / (p + 1.0)
        if abs(p + 1.0) <= 1e-9:
            return f0 * s0 * log_ratio
    return 0.5 * (f0 + f1) * (s1 - s0)


class RadialGrid:
    """Geometric radial grid with power-law-aware cumulative integration.

    Densities sampled at the nodes are integrated assuming local power-law
    behaviour between nodes, which is exact for homogeneous fields and
    accurate for the near-homogeneous integrands produced by crack-tip
    asymptotics.  The portion below the smallest node is estimated by
    extrapolating the power observed on the first interval.
    """

    def __init__(self, s_min, s_max, points_per_decade=16):
        if not (0.0 < s_min < s_max):
            raise ValueError("need 0 < s_min < s_max")
        decades = np.log10(s_max / s_min)
        n = max(int(np.ceil(decades * points_per_decade)) + 1, 4)
        self.s = np.geomspace(s_min, s_max, n)

    def cumulative(self, density, weight_exponent=0.0, tail=True):
        """Cumulative integral F(s_k) = int_0^{s_k} density(s) s^w ds.

        Parameters
        ----------
        density : nodal samples of the density on ``self.s``
        weight_exponent : extra power ``w`` of s multiplying the density
        tail : include the extrapolated contribution of (0, s_min)

        Returns
        -------
        (values, tail_estimate) where values[k] corresponds to s[k].
        """
        s = self.s
        y = np.asarray(density, dtype=float)
        if y.shape != s.shape:
            raise ValueError("density must be sampled on the grid nodes")
        parts = np.zeros_like(s)
        for k in range(1, len(s)):
            parts[k] = _interval_power_integral(
                s[k - 1], s[k], y[k - 1], y[k], weight_exponent
            )
        tail_est = 0.0
        if tail and y[0] != 0.0 and y[1] != 0.0 and y[0] * y[1] > 0.0:
            p = np.log(abs(y[1] / y[0])) / np.log(s[1] / s[0]) + weight_exponent
            if p > -0.999:
                tail_est = y[0] * s[0] ** (weight_exponent + 1.0) / (p + 1.0)
        out = np.cumsum(parts)
        if tail:
            out = out + tail_est
        return out, tail_est

    def integral_between(self, density, s_lo, s_hi, weight_exponent=0.0):
        """Integral of density * s^w over (s_lo, s_hi) by grid interpolation."""
        cum, _ = self.cumulative(density, weight_exponent, tail=True)
        lo = np.interp(s_lo, self.s, cum)
        hi = np.interp(s_hi, self.s, cum)
        return hi - lo
