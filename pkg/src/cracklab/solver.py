"""Discretization and solution of the straightened crack problem.

Assembles P1 stiffness/mass operators for

    -div(A(x) grad v) = ftilde(x) v   in  B_rbar minus the straight crack,
    v = 0 on the crack,  v = trace on the outer sphere,

with A and the potential weight coming from the straightening map (both
collapse to the identity for a flat crack).  The linear solver is
conjugate gradients with diagonal preconditioning on the SPD eliminated
system.  Also houses the potential families, their hypothesis bookkeeping
(xi_f, omega, Hardy-based eta bound) and the smooth approximating-domain
solves in d = 2.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, ConstructionError, NumericalError
from .geometry import CrackGeometry, SmoothedDomain, StraighteningMap
from .meshing import BallMesh, build_smoothed_disk_mesh


# -- potentials ----------------------------------------------------------------


class PotentialSpec:
    """Closed-form potential family with exact hypothesis bookkeeping.

    Families: ``zero``, ``inverse_square_sub`` (c |x|^(delta-2), delta>0),
    ``constant`` (c), ``smooth_radial`` (polynomial in |x|).  xi_f(r) is
    the exact sup of |x|^2 |f| over the closed ball of radius r, available
    in closed form for each family.
    """

    FAMILIES = ("zero", "inverse_square_sub", "constant", "smooth_radial")

    def __init__(self, family="zero", c=0.0, delta=0.5, coefficients=(),
                 hypothesis="H1"):
        if family not in self.FAMILIES:
            raise ConfigError(f"unsupported potential family '{family}'")
        if family == "inverse_square_sub" and delta <= 0.0:
            raise ConfigError("inverse-square-subordinate family needs delta > 0")
        if hypothesis not in ("H1", "H2"):
            raise ConfigError("hypothesis class must be 'H1' or 'H2'")
        if family == "inverse_square_sub" and hypothesis == "H2":
            raise ConfigError("the inverse-square family is handled under (H1)")
        self.family = family
        self.c = float(c)
        self.delta = float(delta)
        self.coefficients = tuple(float(a) for a in coefficients)
        self.hypothesis = hypothesis

    def is_zero(self):
        return self.family == "zero" or (
            self.family in ("inverse_square_sub", "constant") and self.c == 0.0
        ) or (self.family == "smooth_radial" and not any(self.coefficients))

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if self.family == "zero":
            out = np.zeros_like(r)
        elif self.family == "constant":
            out = np.full_like(r, self.c)
        elif self.family == "inverse_square_sub":
            out = self.c * np.maximum(r, 1e-300) ** (self.delta - 2.0)
        else:
            out = sum(a * r**i for i, a in enumerate(self.coefficients))
            out = np.asarray(out, dtype=float) * np.ones_like(r)
        return out if np.ndim(points) > 1 else float(out[0])

    def radial_derivative_times_r(self, points):
        """grad f . x = r p'(r) for the radial families (H2 machinery)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if self.family in ("zero", "constant"):
            out = np.zeros_like(r)
        elif self.family == "inverse_square_sub":
            out = self.c * (self.delta - 2.0) * np.maximum(r, 1e-300) ** (self.delta - 2.0)
        else:
            out = sum(i * a * r**i for i, a in enumerate(self.coefficients))
            out = np.asarray(out, dtype=float) * np.ones_like(r)
        return out if np.ndim(points) > 1 else float(out[0])

    def xi(self, r):
        """xi_f(r) = sup over the closed r-ball of |x|^2 |f(x)|, exact."""
        r = np.asarray(r, dtype=float)
        if self.family == "zero":
            out = np.zeros_like(r)
        elif self.family == "constant":
            out = np.abs(self.c) * r**2
        elif self.family == "inverse_square_sub":
            out = np.abs(self.c) * r**self.delta
        else:
            out = np.zeros_like(r)
            flat = np.atleast_1d(r)
            res = np.zeros_like(flat)
            for i, rv in enumerate(flat):
                s = np.linspace(0.0, rv, 512)
                p = sum(a * s**k for k, a in enumerate(self.coefficients))
                res[i] = np.max(s**2 * np.abs(p)) if rv > 0 else 0.0
            out = res.reshape(np.shape(r))
        return out if np.ndim(r) else float(out)

    def xi_integral(self, R):
        """Closed-form int_0^R xi_f(s)/s ds (the (H1-2) integral)."""
        if self.family == "zero":
            return 0.0
        if self.family == "constant":
            return abs(self.c) * R**2 / 2.0
        if self.family == "inverse_square_sub":
            return abs(self.c) * R**self.delta / self.delta
        s = np.linspace(1e-9 * R, R, 4096)
        return float(np.trapezoid(self.xi(s) / s, s))

    def smallness(self, r, N):
        """The dimensionless coercivity quantity controlling int |f| u^2.

        For N >= 2 this is the Hardy-based 4 xi_f(r)/(N-1)^2; for N = 1
        the boundary-term Hardy inequality degenerates and the slit
        Poincare inequality (first slit eigenvalue 1/4) gives 4 xi_f(r)
        for fields vanishing on the crack.
        """
        x = self.xi(r)
        if N >= 2:
            return 4.0 * x / (N - 1) ** 2
        return 4.0 * x

    def omega(self, r, N):
        """Boundary weight of the coercivity inequality."""
        r = np.asarray(r, dtype=float)
        if N == 1:
            return np.zeros_like(r) if np.ndim(r) else 0.0
        if self.hypothesis == "H1":
            out = (2.0 / (N - 1)) * self.xi(r) / r
        else:
            out = ((N - 1) / 2.0) * self.eta_bound(r, N) / r
        return out if np.ndim(r) else float(out)

    def eta_bound(self, r, N):
        """Hardy-based upper bound for the variational sup eta(r, f).

        The true eta is a sup over H^1(B_r) with no computable closed
        form; every consumer of eta in this package uses this bound and
        says so.
        """
        if N >= 2:
            return 4.0 * self.xi(r) / (N - 1) ** 2
        return 4.0 * self.xi(r)

    def coercivity_radius(self, N, r_max):
        """Largest r <= r_max with smallness(r) < 1/2."""
        if self.is_zero():
            return r_max
        rs = np.geomspace(1e-8 * r_max, r_max, 400)
        ok = self.smallness(rs, N) < 0.5
        if not ok[0]:
            return 0.0
        if ok[-1]:
            return r_max
        idx = np.argmin(ok)
        return float(rs[idx - 1])


def hypothesis_report(pot: PotentialSpec, N, r_grid, r_hat):
    """Closed-form hypothesis audit: xi_f, omega, r omega, eta bound, flags."""
    r = np.asarray(r_grid, dtype=float)
    xi = pot.xi(r)
    om = pot.omega(r, N)
    eta_b = pot.eta_bound(r, N)
    flags = {
        "H1_1_xi_vanishes": bool(pot.xi(1e-12 * r_hat) < 1e-6 * max(pot.xi(r_hat), 1e-300)
                                 or pot.is_zero()),
        "H1_2_xi_over_r_integrable": np.isfinite(pot.xi_integral(r_hat)),
        "H1_smallness_at_grid": bool(np.all(pot.smallness(r, N) < 0.5)),
    }
    if N >= 2:
        flags["omega_bound"] = bool(np.all(r * om < (N - 1) / 4.0))
    if pot.hypothesis == "H2":
        flags["H2_gradient_available"] = pot.family in ("constant", "smooth_radial", "zero")
    return {
        "family": pot.family,
        "hypothesis": pot.hypothesis,
        "eta_is_hardy_upper_bound": True,
        "r": [float(v) for v in r],
        "xi": [float(v) for v in np.atleast_1d(xi)],
        "omega": [float(v) for v in np.atleast_1d(om)],
        "r_omega": [float(v) for v in np.atleast_1d(r * om)],
        "eta_bound": [float(v) for v in np.atleast_1d(eta_b)],
        "xi_integral_0_to_Rhat": float(pot.xi_integral(r_hat)),
        "coercivity_radius": float(pot.coercivity_radius(N, r_hat)),
        "flags": flags,
        "passed": bool(all(flags.values())),
    }


# -- fields on meshes ------------------------------------------------------------


class P1Field:
    """A solved field: piecewise-linear on the mesh, zero outside.

    Evaluation at mesh vertices reproduces the coefficient vector; the
    gradient is the element-wise constant P1 gradient.
    """

    def __init__(self, mesh: BallMesh, coefficients):
        self.mesh = mesh
        self.dim = mesh.dim
        self.coefficients = np.asarray(coefficients, dtype=float)
        if self.coefficients.shape != (len(mesh.nodes),):
            raise ValueError("coefficient vector does not match the mesh")
        self._el_coeff = self.coefficients[mesh.elements]

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        el, lam = self.mesh.locate(pts)
        vals = np.zeros(len(pts))
        ok = el >= 0
        vals[ok] = np.sum(self._el_coeff[el[ok]] * lam[ok], axis=1)
        return vals if np.ndim(points) > 1 else float(vals[0])

    def gradient(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        el, _ = self.mesh.locate(pts)
        out = np.zeros_like(pts)
        ok = el >= 0
        out[ok] = np.einsum(
            "ni,nid->nd", self._el_coeff[el[ok]], self.mesh.basis_gradients[el[ok]]
        )
        return out if np.ndim(points) > 1 else out[0]


# -- assembly --------------------------------------------------------------------


def _lambda_at_quadrature(dim):
    if dim == 2:
        return np.array([
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ])
    a, b = 0.5854101966249685, 0.1381966011250105
    return np.array([
        [a, b, b, b],
        [b, a, b, b],
        [b, b, a, b],
        [b, b, b, a],
    ])


def assemble_stiffness(mesh: BallMesh, matrix_eval=None, matrix_values=None):
    """A-weighted stiffness matrix; identity coefficients when eval is None.

    ``matrix_values`` takes precomputed per-quadrature-point matrices of
    shape (m, q, d, d) and skips the evaluation.
    """
    B = mesh.basis_gradients
    if matrix_eval is None and matrix_values is None:
        Abar = mesh.volumes[:, None, None] * np.eye(mesh.dim)
    else:
        pts, w = mesh.quadrature_points()
        m, q, d = pts.shape
        if matrix_values is None:
            matrix_values = matrix_eval(pts.reshape(-1, d)).reshape(m, q, d, d)
        Abar = np.einsum("mq,mqde->mde", w, matrix_values)
    Ke = np.einsum("mia,mab,mjb->mij", B, Abar, B)
    return _scatter(mesh, Ke)


def assemble_weighted_mass(mesh: BallMesh, weight_eval=None, weight_values=None):
    """Mass matrix with a scalar weight evaluated at interior quadrature."""
    pts, w = mesh.quadrature_points()
    m, q, d = pts.shape
    if weight_values is None:
        weight_values = weight_eval(pts.reshape(-1, d)).reshape(m, q)
    lam = _lambda_at_quadrature(mesh.dim)
    Me = np.einsum("mq,qi,qj->mij", w * weight_values, lam, lam)
    return _scatter(mesh, Me)


def _scatter(mesh, local):
    elems = mesh.elements
    m, nl, _ = local.shape
    rows = np.repeat(elems, nl, axis=1).ravel()
    cols = np.tile(elems, (1, nl)).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(len(mesh.nodes),) * 2
    )
    return mat.tocsr()


def outer_boundary_facets(mesh: BallMesh):
    """Facets of the outer sphere as arrays of node indices."""
    elems = mesh.elements
    d = mesh.dim
    outer = mesh.outer_nodes
    facets = set()
    import itertools
    for el in elems:
        for sub in itertools.combinations(el, d):
            if all(outer[v] for v in sub):
                facets.add(tuple(sorted(sub)))
    return np.asarray(sorted(facets), dtype=np.int64)


def assemble_boundary_mass(mesh: BallMesh):
    """P1 surface mass matrix on the outer sphere facets."""
    facets = outer_boundary_facets(mesh)
    n = len(mesh.nodes)
    if len(facets) == 0:
        return sp.csr_matrix((n, n))
    pts = mesh.nodes[facets]
    if mesh.dim == 2:
        length = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
        loc = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        Me = length[:, None, None] * loc
    else:
        cr = np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
        area = 0.5 * np.linalg.norm(cr, axis=1)
        loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
        Me = area[:, None, None] * loc
    nl = facets.shape[1]
    rows = np.repeat(facets, nl, axis=1).ravel()
    cols = np.tile(facets, (1, nl)).ravel()
    return sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()


class DiscreteProblem:
    """Assembled operators for one mesh/potential/coefficient configuration.

    For curved cracks the straightening map supplies A(x) and the
    potential weight; the potential is then evaluated at the pulled-back
    points (ftilde = |det Jac Phi| f o Phi).
    """

    def __init__(self, mesh: BallMesh, potential: PotentialSpec,
                 straightening: StraighteningMap | None = None):
        self.mesh = mesh
        self.potential = potential
        self.straightening = straightening
        N = mesh.dim - 1
        self.N = N
        n = len(mesh.nodes)
        if straightening is None or straightening.geom.family_name == "flat":
            self.stiffness = assemble_stiffness(mesh)
            if potential.is_zero():
                self.potential_mass = sp.csr_matrix((n, n))
                self.abs_potential_mass = sp.csr_matrix((n, n))
            else:
                self.potential_mass = assemble_weighted_mass(mesh, potential)
                self.abs_potential_mass = assemble_weighted_mass(
                    mesh, lambda p: np.abs(potential(p)))
        else:
            # one pass of the straightening inversion serves A and ftilde
            pts, _ = mesh.quadrature_points()
            m, q, d = pts.shape
            flat_pts = pts.reshape(-1, d)
            A, jw, y = straightening.full_fields(flat_pts)
            self.stiffness = assemble_stiffness(
                mesh, matrix_values=A.reshape(m, q, d, d))
            if potential.is_zero():
                self.potential_mass = sp.csr_matrix((n, n))
                self.abs_potential_mass = sp.csr_matrix((n, n))
            else:
                ftilde = (jw * np.atleast_1d(potential(y))).reshape(m, q)
                self.potential_mass = assemble_weighted_mass(
                    mesh, weight_values=ftilde)
                self.abs_potential_mass = assemble_weighted_mass(
                    mesh, weight_values=np.abs(ftilde))
        self.system = (self.stiffness - self.potential_mass).tocsr()
        self.fixed = mesh.crack_nodes | mesh.outer_nodes
        self.free = ~self.fixed

    def coercivity_check(self, n_probes=20, seed=42):
        """Discrete Rayleigh probe of the coercivity inequality.

        Random interior fields u must satisfy
        u'(K - M_|f|)u >= (1/4) u'Ku   (the boundary term drops since the
        probes vanish on the outer sphere).
        """
        rng = np.random.default_rng(seed)
        K, M = self.stiffness, self.abs_potential_mass
        worst = np.inf
        for _ in range(n_probes):
            u = rng.standard_normal(len(self.mesh.nodes))
            u[self.fixed] = 0.0
            p = float(u @ (K @ u))
            q = float(u @ (M @ u))
            if p > 0:
                worst = min(worst, (p - q) / p)
        return worst

    def solve(self, trace_fn, rtol=1e-10, max_iter=20000, coercivity_probes=20):
        """Dirichlet solve: zero on the crack, trace_fn on the outer sphere."""
        mesh = self.mesh
        margin = self.coercivity_check(coercivity_probes)
        if margin < 0.25:
            r0 = self.potential.coercivity_radius(self.N, mesh.radius * 4)
            raise ConstructionError(
                f"discrete coercivity margin {margin:.3f} < 1/4; "
                f"solve radius must not exceed r0 ~ {r0:.4g}"
            )
        values = np.zeros(len(mesh.nodes))
        if trace_fn is not None:
            outer_pts = mesh.nodes[mesh.outer_nodes]
            values[mesh.outer_nodes] = trace_fn(outer_pts)
        values[mesh.crack_nodes] = 0.0

        S = self.system
        free = self.free
        rhs = -S[free][:, ~free] @ values[~free]
        A = S[free][:, free]
        diag = A.diagonal()
        if np.any(diag <= 0.0):
            raise NumericalError("nonpositive diagonal in the eliminated system; "
                                 "coercivity lost")
        M = sp.diags(1.0 / diag)
        iters = [0]

        def cb(_):
            iters[0] += 1

        x, info = spla.cg(A, rhs, rtol=rtol, atol=0.0, maxiter=max_iter,
                          M=M, callback=cb)
        if info != 0:
            res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
            cond_est = float(np.max(diag) / np.min(diag))
            raise NumericalError(
                f"CG stagnated after {iters[0]} iterations "
                f"(relative residual {res:.2e}, diagonal ratio {cond_est:.2e})"
            )
        values[free] = x
        field = P1Field(mesh, values)
        field.solve_info = {
            "iterations": iters[0],
            "rtol": rtol,
            "coercivity_margin": margin,
        }
        return field

    def interior_residual(self, field: P1Field):
        """Residual of the full system on the free rows (Galerkin check)."""
        r = self.system @ field.coefficients
        return r[self.free]


def solve_dirichlet(mesh, potential, trace_fn, straightening=None, rtol=1e-10):
    """One-call assembly + solve returning the field handle."""
    problem = DiscreteProblem(mesh, potential, straightening)
    return problem.solve(trace_fn, rtol=rtol)


# -- approximating problems on smoothed domains (d = 2) ---------------------------


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def boundary_lift(trace_fn, n, r0, crack_margin_const=None):
    """g_n: the outer trace multiplied by a ramp vanishing on the crack strip.

    The lift is zero where the crack-adjacent condition holds
    (|x_{N+1}| <= C~/n with C~ > sqrt(2(r0^2 + M^2))) and matches the
    trace outside twice that strip.
    """
    C = crack_margin_const if crack_margin_const is not None else 1.01 * np.sqrt(2.0) * r0

    def lift(points):
        pts = np.atleast_2d(points)
        t = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
        seam_dist = np.minimum(t, 2.0 * np.pi - t)
        t_c = np.arcsin(min(C / (n * r0), 1.0))
        ramp = smoothstep((seam_dist - t_c) / np.maximum(t_c, 1e-12))
        base = np.atleast_1d(trace_fn(pts))
        return base * ramp

    return lift


def solve_approximating(geom: CrackGeometry, n, r0, trace_fn,
                        potential: PotentialSpec | None = None,
                        n_r=64, n_t=128, rtol=1e-10):
    """Solve the smooth approximating problem on the n-th smoothed domain.

    d = 2 only.  The returned field is the trivial extension by zero
    outside the smoothed domain.  The smoothed-domain star-shape
    certificate is attached to the field.
    """
    if geom.dim != 2:
        raise ConstructionError("approximating solves are a d = 2 facility")
    potential = potential or PotentialSpec("zero")
    domain = SmoothedDomain(geom, n, r0)
    cert = domain.star_shape_certificate()
    if not cert["passed"]:
        raise ConstructionError(f"star-shape certificate failed: {cert}")
    mesh = build_smoothed_disk_mesh(domain, n_r=n_r, n_t=n_t)
    problem = DiscreteProblem(mesh, potential)
    lift = boundary_lift(trace_fn, n, r0)
    field = problem.solve(lift, rtol=rtol)
    field.star_certificate = cert
    field.smoothed_domain = domain
    return field
