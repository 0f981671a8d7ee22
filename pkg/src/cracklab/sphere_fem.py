"""Surface finite elements for the slit-sphere eigenproblem (N = 2).

A structured triangulation of S^2 in slit-adapted coordinates (polar
angle phi from the slit-endpoint axis, slit angle t) conforms to the slit
by construction: the slit is the pair of coordinate columns t = 0 and
t = 2pi, which are kept as separate vertex columns and both eliminated by
Dirichlet rows together with the two pole vertices (the slit endpoints).

P1 stiffness/mass matrices on the flat inscribed triangles feed a
shift-invert Lanczos solve of the generalized pencil.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError
from .meshing import _power_grading

TWO_PI = 2.0 * np.pi


class SlitSphereMesh:
    """Structured triangulation of the slit sphere."""

    def __init__(self, n_phi=40, n_t=80, grading=1.0):
        self.n_phi = n_phi
        self.n_t = n_t
        self.grading = grading
        phi = np.pi * _power_grading(np.arange(n_phi + 1) / n_phi, grading)
        t = TWO_PI * np.arange(n_t + 1) / n_t
        verts = [(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0)]

        def vid(j, i):
            return 2 + (j - 1) * (n_t + 1) + i

        for j in range(1, n_phi):
            sp_, cp = np.sin(phi[j]), np.cos(phi[j])
            for i in range(n_t + 1):
                verts.append((cp, sp_ * np.cos(t[i]), sp_ * np.sin(t[i])))
        tris = []
        for i in range(n_t):
            tris.append((0, vid(1, i), vid(1, i + 1)))
        for j in range(1, n_phi - 1):
            for i in range(n_t):
                a, b = vid(j, i), vid(j + 1, i)
                c, d = vid(j + 1, i + 1), vid(j, i + 1)
                tris.append((a, b, c))
                tris.append((a, c, d))
        for i in range(n_t):
            tris.append((vid(n_phi - 1, i), 1, vid(n_phi - 1, i + 1)))
        self.vertices = np.asarray(verts)
        self.triangles = np.asarray(tris, dtype=np.int64)
        slit = np.zeros(len(verts), dtype=bool)
        slit[0] = slit[1] = True
        for j in range(1, n_phi):
            slit[vid(j, 0)] = True
            slit[vid(j, n_t)] = True
        self.slit_nodes = slit

    @property
    def h_max(self):
        v, t = self.vertices, self.triangles
        e = max(
            np.max(np.linalg.norm(v[t[:, 0]] - v[t[:, 1]], axis=1)),
            np.max(np.linalg.norm(v[t[:, 1]] - v[t[:, 2]], axis=1)),
            np.max(np.linalg.norm(v[t[:, 2]] - v[t[:, 0]], axis=1)),
        )
        return float(e)


def surface_p1_matrices(vertices, triangles):
    """P1 stiffness and consistent mass on a triangulated surface in R^3.

    Stiffness uses the opposite-edge formula K_ij = e_i . e_j / (4 A).
    """
    v1 = vertices[triangles[:, 0]]
    v2 = vertices[triangles[:, 1]]
    v3 = vertices[triangles[:, 2]]
    e1 = v3 - v2
    e2 = v1 - v3
    e3 = v2 - v1
    area = 0.5 * np.linalg.norm(np.cross(e3, -e2), axis=1)
    if np.any(area <= 0.0):
        raise NumericalError("degenerate surface triangle")
    E = np.stack([e1, e2, e3], axis=1)
    Ke = np.einsum("mia,mja->mij", E, E) / (4.0 * area)[:, None, None]
    Me = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    n = len(vertices)
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


class SphereEigenResult:
    def __init__(self, mesh, eigenvalues, modes, free):
        self.mesh = mesh
        self.eigenvalues = eigenvalues
        self.modes = modes          # (n_vertices, count), zero on the slit
        self.free = free

    def multiplicity_table(self, reference, rel_tol=0.01):
        """Count numeric eigenvalues within rel_tol of each reference rung."""
        out = {}
        for k, mu in reference.items():
            out[k] = int(np.sum(np.abs(self.eigenvalues - mu) <= rel_tol * mu))
        return out


def numeric_eigensolve(n_phi=40, n_t=80, count=6, grading=1.0, shift=0.65,
                       tol=1e-9, max_residual=1e-6):
    """Smallest eigenpairs of the slit-sphere pencil by shift-invert Lanczos.

    Eigenvalues come back sorted ascending and the discrete modes
    mass-orthonormalized.  The relative pencil residual of every pair is
    checked against ``max_residual``.
    """
    mesh = SlitSphereMesh(n_phi=n_phi, n_t=n_t, grading=grading)
    K, M = surface_p1_matrices(mesh.vertices, mesh.triangles)
    free = ~mesh.slit_nodes
    Kf = K[free][:, free].tocsc()
    Mf = M[free][:, free].tocsc()
    vals, vecs = spla.eigsh(Kf, k=count, M=Mf, sigma=shift, which="LM",
                            tol=tol, maxiter=2000)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # symmetric re-orthonormalization in the mass inner product
    G = vecs.T @ (Mf @ vecs)
    w, U = np.linalg.eigh(G)
    if np.any(w <= 0.0):
        raise NumericalError("numeric eigenmodes have a degenerate Gram matrix")
    vecs = vecs @ (U / np.sqrt(w)) @ U.T
    resid = []
    for i in range(count):
        r = Kf @ vecs[:, i] - vals[i] * (Mf @ vecs[:, i])
        resid.append(np.linalg.norm(r) / max(np.linalg.norm(Kf @ vecs[:, i]), 1e-300))
    resid = np.asarray(resid)
    if np.any(resid > max_residual):
        raise NumericalError(
            f"eigensolver residuals too large: {resid}"
        )
    modes = np.zeros((len(mesh.vertices), count))
    modes[free] = vecs
    result = SphereEigenResult(mesh, vals, modes, free)
    result.residuals = resid
    return result


def eigenvalue_refinement_study(n_list=(10, 20, 40, 80), count=1, grading=1.0):
    """mu_1 on a refinement sequence with the observed convergence rate.

    Returns (h values, eigenvalue estimates, fitted rate) where the rate
    is the least-squares slope of log-error against log-h using the
    finest value Richardson-extrapolated as reference.
    """
    hs, mus = [], []
    for n in n_list:
        res = numeric_eigensolve(n_phi=n, n_t=2 * n, count=count, grading=grading)
        hs.append(res.mesh.h_max)
        mus.append(res.eigenvalues[0])
    hs = np.asarray(hs)
    mus = np.asarray(mus)
    # Richardson with the observed ratio of the last three values
    d1, d2 = mus[-2] - mus[-1], mus[-3] - mus[-2]
    if d1 != 0.0 and d2 / d1 > 1.0:
        rho = d2 / d1
        mu_star = mus[-1] - d1 / (rho - 1.0)
    else:
        mu_star = mus[-1]
    err = np.abs(mus[:-1] - mu_star)
    mask = err > 0
    rate = np.polyfit(np.log(hs[:-1][mask]), np.log(err[mask]), 1)[0]
    return hs, mus, float(rate), float(mu_star)
