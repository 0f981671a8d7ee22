"""Slit-sphere eigenvalue ladder and explicit eigenmode bases.

The Dirichlet eigenproblem on S^N minus the closed half-equator
{x_{N+1} = 0, x_N >= 0} has the explicit spectrum mu_k = k(k + 2N - 2)/4,
k >= 1.  For N = 1 (circle cut at one point) each rung is simple with mode
sin(k t / 2).  For N = 2 the eigenspace of rung k is spanned by separated
modes

    (sin phi)^(j/2) * C_q^{(j/2 + 1/2)}(cos phi) * sin(j t / 2),

with j = k, k-2, ..., down to 1 or 2 and q = (k - j)/2; C_q is a Gegenbauer
polynomial, phi is the polar angle from the slit-endpoint axis and t the
slit angle.  These are the sphere restrictions of homogeneous harmonics of
degree k/2 vanishing on the straight crack, obtained from the pure slit
factor rho^(j/2) sin(j t / 2) multiplied by polynomial corrections in the
remaining variables.  They are exactly L^2-orthogonal, so multiplicities
come out as M_k = ceil(k/2).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lgamma, exp, log, pi

import numpy as np
from scipy.special import eval_gegenbauer

from .quadrature import SphereQuadrature, default_sphere_quadrature


def ladder(N, k):
    """Exact eigenvalue mu_k = k(k + 2N - 2)/4 as a Fraction.

    The ladder starts at k = 1; k = 0 is rejected.
    """
    if N < 1:
        raise ValueError(f"sphere dimension must be >= 1, got {N}")
    if k < 1:
        raise ValueError(f"the eigenvalue ladder starts at k = 1, got k = {k}")
    return Fraction(k * (k + 2 * N - 2), 4)


def slit_coordinates(points):
    """Slit-adapted coordinates (rho_slit, t) of points in R^(N+1).

    rho_slit is the distance to the codimension-two edge axis and t in
    [0, 2pi) is the angle in the (x_N, x_{N+1}) plane measured from the
    positive x_N axis, so the slit sits at t = 0.
    """
    pts = np.atleast_2d(points)
    xN = pts[:, -2]
    xN1 = pts[:, -1]
    rho = np.hypot(xN, xN1)
    t = np.arctan2(xN1, xN)
    t = np.where(t < 0.0, t + 2.0 * np.pi, t)
    return rho, t


def exact_mode(N, k, points):
    """Unnormalized pure slit mode rho_slit^(k/2) sin(k t / 2).

    This is the restriction to the sphere of the homogeneous harmonic that
    exists for every N >= 1; it vanishes on the slit and realizes rung k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rho, t = slit_coordinates(points)
    out = rho ** (0.5 * k) * np.sin(0.5 * k * t)
    return out if np.ndim(points) > 1 else float(out[0])


def _gegenbauer_norm_sq(q, alpha):
    """L2 norm of C_q^(alpha) with weight (1 - x^2)^(alpha - 1/2) on (-1, 1)."""
    val = (
        log(pi)
        + (1.0 - 2.0 * alpha) * log(2.0)
        + lgamma(q + 2.0 * alpha)
        - lgamma(q + 1.0)
        - log(q + alpha)
        - 2.0 * lgamma(alpha)
    )
    return exp(val)


@dataclass(frozen=True)
class ModeIndex:
    k: int
    m: int      # position within the rung, 1-based
    j: int      # slit Fourier index; j = k for the pure slit mode
    q: int      # polynomial correction degree, q = (k - j)/2


class SlitSphereMode:
    """One orthonormal eigenmode Y_{k,m} with value and tangential gradient."""

    def __init__(self, N, index: ModeIndex):
        self.N = N
        self.index = index
        j, q = index.j, index.q
        if N == 1:
            self.norm_const = 1.0 / np.sqrt(np.pi)
        else:
            alpha = 0.5 * (j + 1.0)
            self.norm_const = 1.0 / np.sqrt(np.pi * _gegenbauer_norm_sq(q, alpha))
            self._alpha = alpha

    @property
    def eigenvalue(self):
        k, N = self.index.k, self.N
        return k * (k + 2 * N - 2) / 4.0

    def __call__(self, points):
        idx = self.index
        if self.N == 1:
            _, t = slit_coordinates(points)
            return self.norm_const * np.sin(0.5 * idx.k * t)
        pts = np.atleast_2d(points)
        r = np.linalg.norm(pts, axis=1)
        c = np.clip(pts[:, 0] / r, -1.0, 1.0)
        sp = np.sqrt(np.maximum(1.0 - c * c, 0.0))
        _, t = slit_coordinates(pts)
        val = (
            self.norm_const
            * sp ** (0.5 * idx.j)
            * eval_gegenbauer(idx.q, self._alpha, c)
            * np.sin(0.5 * idx.j * t)
        )
        return val if np.ndim(points) > 1 else float(val[0])

    def surface_gradient(self, points):
        """Tangential gradient on S^N as vectors in R^(N+1).

        Points are assumed to lie on the unit sphere.  The gradient blows
        up like dist^(-1/2) at the slit endpoints for j = 1; callers
        integrate it against the surface measure, which absorbs that.
        """
        idx = self.index
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.N == 1:
            _, t = slit_coordinates(pts)
            dpsi_dt = self.norm_const * 0.5 * idx.k * np.cos(0.5 * idx.k * t)
            e_t = np.column_stack([-np.sin(t), np.cos(t)])
            return dpsi_dt[:, None] * e_t
        j, q = idx.j, idx.q
        r = np.linalg.norm(pts, axis=1)
        c = np.clip(pts[:, 0] / r, -1.0, 1.0)
        phi = np.arccos(c)
        sp = np.sin(phi)
        _, t = slit_coordinates(pts)
        sp_safe = np.where(sp < 1e-300, 1e-300, sp)
        G = eval_gegenbauer(q, self._alpha, c)
        if q >= 1:
            dG = 2.0 * self._alpha * eval_gegenbauer(q - 1, self._alpha + 1.0, c)
        else:
            dG = np.zeros_like(c)
        sin_jt = np.sin(0.5 * j * t)
        cos_jt = np.cos(0.5 * j * t)
        # d/dphi of (sin phi)^(j/2) G(cos phi)
        dpsi_dphi = self.norm_const * sin_jt * (
            0.5 * j * sp_safe ** (0.5 * j - 1.0) * c * G
            - sp_safe ** (0.5 * j + 1.0) * dG
        )
        # (1/sin phi) d/dt
        dpsi_dt = self.norm_const * 0.5 * j * cos_jt * sp_safe ** (0.5 * j - 1.0) * G
        e_phi = np.column_stack([-sp, c * np.cos(t), c * np.sin(t)])
        e_t = np.column_stack(
            [np.zeros_like(t), -np.sin(t), np.cos(t)]
        )
        return dpsi_dphi[:, None] * e_phi + dpsi_dt[:, None] * e_t


def rung_indices(N, k):
    """Mode indices of rung k, ordered by decreasing slit index j."""
    if N == 1:
        return [ModeIndex(k, 1, k, 0)]
    out = []
    j = k
    m = 1
    while j >= 1:
        out.append(ModeIndex(k, m, j, (k - j) // 2))
        j -= 2
        m += 1
    return out


def multiplicity(N, k):
    return len(rung_indices(N, k))


class SlitSphereBasis:
    """Orthonormal eigenbasis of the slit sphere up to rung k_max.

    The analytic modes are exactly orthonormal; a Gram-Schmidt pass under
    the attached quadrature is still applied so that the basis satisfies
    discrete orthonormality to quadrature precision, as downstream Fourier
    coefficients assume.  The basis identifier records the construction so
    that coefficient vectors are comparable across runs.
    """

    def __init__(self, N, k_max, quadrature: SphereQuadrature | None = None,
                 orthonormalize=True, gram_tol=1e-6):
        if N not in (1, 2):
            raise ValueError("explicit bases are available for N = 1 and N = 2")
        self.N = N
        self.k_max = int(k_max)
        self.quadrature = quadrature or default_sphere_quadrature(N)
        self.modes = []
        self.indices = []
        for k in range(1, self.k_max + 1):
            for idx in rung_indices(N, k):
                self.indices.append(idx)
                self.modes.append(SlitSphereMode(N, idx))
        self._values = np.column_stack(
            [m(self.quadrature.nodes) for m in self.modes]
        )
        self._coeff = np.eye(len(self.modes))
        if orthonormalize:
            self._gram_schmidt(gram_tol)
        self.identifier = (
            f"slit-sphere N={N} k_max={k_max} "
            f"family=gegenbauer-halfangle order=j-desc "
            f"quad={self.quadrature.n_t}x{self.quadrature.n_phi}"
        )

    def _gram_schmidt(self, gram_tol):
        w = self.quadrature.weights
        V = self._values
        G = V.T @ (w[:, None] * V)
        # Cholesky of the Gram matrix: V_ortho = V L^-T
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise ValueError(
                "Gram matrix of slit-sphere modes is rank deficient; "
                "offending rungs up to k_max=%d" % self.k_max
            ) from exc
        diag = np.diag(L)
        if np.any(diag < gram_tol):
            bad = self.indices[int(np.argmin(diag))]
            raise ValueError(f"rank-deficient mode family at rung k={bad.k}")
        self._coeff = np.linalg.solve(L, np.eye(len(self.modes))).T
        self._values = V @ self._coeff

    def multiplicities(self):
        table = {}
        for idx in self.indices:
            table[idx.k] = max(table.get(idx.k, 0), idx.m)
        return table

    def mode_position(self, k, m):
        for pos, idx in enumerate(self.indices):
            if idx.k == k and idx.m == m:
                return pos
        raise KeyError(f"no mode (k={k}, m={m}) in basis")

    def evaluate(self, k, m, points):
        """Value of the orthonormalized Y_{k,m} at arbitrary points."""
        pos = self.mode_position(k, m)
        cols = np.nonzero(self._coeff[:, pos])[0]
        vals = 0.0
        for c in cols:
            vals = vals + self._coeff[c, pos] * self.modes[c](points)
        return vals

    def surface_gradient(self, k, m, points):
        pos = self.mode_position(k, m)
        cols = np.nonzero(self._coeff[:, pos])[0]
        grad = 0.0
        for c in cols:
            grad = grad + self._coeff[c, pos] * self.modes[c].surface_gradient(points)
        return grad

    def values_at_quadrature(self, k, m):
        return self._values[:, self.mode_position(k, m)]

    def gram_matrix(self):
        w = self.quadrature.weights
        return self._values.T @ (w[:, None] * self._values)

    def export_dict(self, sample_limit=None):
        """JSON-ready summary: ladder, multiplicities, sampled mode values."""
        mult = self.multiplicities()
        quad = self.quadrature
        nodes = quad.nodes
        if sample_limit is not None and len(nodes) > sample_limit:
            step = int(np.ceil(len(nodes) / sample_limit))
        else:
            step = 1
        modes = []
        for idx in self.indices:
            vals = self.values_at_quadrature(idx.k, idx.m)
            modes.append({
                "k": idx.k, "m": idx.m, "slit_index": idx.j,
                "values": [float(v) for v in vals[::step]],
            })
        return {
            "basis": self.identifier,
            "sphere_dim": self.N,
            "ladder": [
                {"k": k, "mu": float(ladder(self.N, k)),
                 "mu_exact": f"{ladder(self.N, k).numerator}/{ladder(self.N, k).denominator}",
                 "multiplicity": mult[k]}
                for k in range(1, self.k_max + 1)
            ],
            "quadrature_nodes": [[float(c) for c in p] for p in nodes[::step]],
            "quadrature_weights": [float(v) for v in quad.weights[::step]],
        }
