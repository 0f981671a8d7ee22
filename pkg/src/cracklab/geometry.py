"""Crack geometry, straightening diffeomorphism and smoothed domains.

The crack is the supergraph {x_N >= g(x')} inside the hyperplane
{x_{N+1} = 0} of R^(N+1).  The graph function g comes from a small family
of closed forms (flat, concave paraboloid, concave quartic) so that exact
derivatives are available everywhere.  The star-shape condition
g(x') - x' . grad g(x') >= 0 is enforced at construction.

The straightening map

    Xi(y) = (y', y_N - g(y'), y_{N+1}) / sqrt(1 + (g^2 - 2 g y_N)/|y|^2)

preserves every sphere |y| = r and sends the curved crack onto the
straight one; its inverse is computed by Newton iteration and the
coefficient matrix A(x) = |det Jac Phi| (Jac Phi)^-1 (Jac Phi)^-T carries
the geometry into the straightened variational problem.
"""

from __future__ import annotations

import numpy as np

from .errors import ConstructionError, DomainError, NumericalError

EPS_GEOM = 1e-10  # certificate tolerance: the continuum inequalities are exact


def _as_points(x, dim):
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[1] != dim:
        raise ValueError(f"expected points in R^{dim}, got shape {pts.shape}")
    return pts


class CrackFamily:
    """Closed-form graph function g with exact derivatives."""

    name = "base"

    def value(self, xp):
        raise NotImplementedError

    def gradient(self, xp):
        raise NotImplementedError

    def hessian(self, xp):
        raise NotImplementedError

    def quadratic_bound_constant(self, radius):
        """A constant C with |g(x')| <= C |x'|^2 for |x'| < radius."""
        raise NotImplementedError


class FlatCrack(CrackFamily):
    name = "flat"

    def value(self, xp):
        return np.zeros(xp.shape[0])

    def gradient(self, xp):
        return np.zeros_like(xp)

    def hessian(self, xp):
        n, m = xp.shape
        return np.zeros((n, m, m))

    def quadratic_bound_constant(self, radius):
        return 0.0


class ParaboloidCrack(CrackFamily):
    """g(x') = -a |x'|^2 with a >= 0 (concave)."""

    name = "paraboloid"

    def __init__(self, a):
        self.a = float(a)

    def value(self, xp):
        return -self.a * np.sum(xp * xp, axis=1)

    def gradient(self, xp):
        return -2.0 * self.a * xp

    def hessian(self, xp):
        n, m = xp.shape
        return np.broadcast_to(-2.0 * self.a * np.eye(m), (n, m, m)).copy()

    def quadratic_bound_constant(self, radius):
        return self.a


class QuarticCrack(CrackFamily):
    """g(x') = -a |x'|^4 with a >= 0 (concave near the origin)."""

    name = "quartic"

    def __init__(self, a):
        self.a = float(a)

    def value(self, xp):
        return -self.a * np.sum(xp * xp, axis=1) ** 2

    def gradient(self, xp):
        r2 = np.sum(xp * xp, axis=1)
        return -4.0 * self.a * r2[:, None] * xp

    def hessian(self, xp):
        n, m = xp.shape
        r2 = np.sum(xp * xp, axis=1)
        eye = np.eye(m)
        outer = xp[:, :, None] * xp[:, None, :]
        return -4.0 * self.a * (r2[:, None, None] * eye + 2.0 * outer)

    def quadratic_bound_constant(self, radius):
        return self.a * radius**2


CRACK_FAMILIES = {
    "flat": lambda params: FlatCrack(),
    "paraboloid": lambda params: ParaboloidCrack(params.get("a", 0.5)),
    "quartic": lambda params: QuarticCrack(params.get("a", 0.5)),
}


class CrackGeometry:
    """The crack graph g, its derivatives and the validity radius.

    Immutable after construction; construction rejects families violating
    g(0) = 0, grad g(0) = 0 or the star-shape margin g - x'. grad g >= 0
    on a sample of the validity ball.
    """

    def __init__(self, ambient_dim, family="flat", params=None, validity_radius=1.0,
                 n_margin_samples=2048):
        if ambient_dim < 2:
            raise ConstructionError(f"ambient dimension must be >= 2, got {ambient_dim}")
        if family not in CRACK_FAMILIES:
            raise ConstructionError(f"unknown crack family '{family}'")
        self.dim = int(ambient_dim)
        self.N = self.dim - 1
        self.family_name = family
        self.params = dict(params or {})
        self.family = CRACK_FAMILIES[family](self.params)
        self.validity_radius = float(validity_radius)
        if self.validity_radius <= 0.0:
            raise ConstructionError("validity radius must be positive")
        self._validate(n_margin_samples)
        self._rbar = None

    # -- graph evaluation ---------------------------------------------------

    @property
    def xp_dim(self):
        return self.dim - 2

    def _check_xp(self, xp):
        pts = np.atleast_2d(np.asarray(xp, dtype=float))
        if self.xp_dim == 0:
            pts = pts.reshape(len(pts), 0) if pts.size else np.zeros((1, 0))
        if pts.shape[1] != self.xp_dim:
            raise ValueError(f"expected x' in R^{self.xp_dim}")
        r = np.linalg.norm(pts, axis=1) if self.xp_dim else np.zeros(len(pts))
        if np.any(r >= self.validity_radius):
            raise DomainError("point outside the crack validity radius")
        return pts

    def g(self, xp):
        return self.family.value(self._check_xp(xp))

    def grad_g(self, xp):
        return self.family.gradient(self._check_xp(xp))

    def hess_g(self, xp):
        return self.family.hessian(self._check_xp(xp))

    def eval_crack(self, xp):
        """Return (g, grad g, star margin) at a single x'.

        The star margin is g(x') - x'. grad g(x'); it is nonnegative for
        every admissible geometry.
        """
        pts = self._check_xp(xp)
        g = self.family.value(pts)
        gr = self.family.gradient(pts)
        margin = g - np.sum(pts * gr, axis=1)
        if np.ndim(xp) <= 1:
            return float(g[0]), gr[0], float(margin[0])
        return g, gr, margin

    def star_margin(self, xp):
        pts = self._check_xp(xp)
        g = self.family.value(pts)
        gr = self.family.gradient(pts)
        return g - np.sum(pts * gr, axis=1)

    def quadratic_bound_constant(self):
        return self.family.quadratic_bound_constant(self.validity_radius)

    def _validate(self, n_samples):
        if self.xp_dim == 0:
            return
        rng = np.random.default_rng(12345)
        u = rng.standard_normal((n_samples, self.xp_dim))
        u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
        radii = self.validity_radius * rng.random(n_samples) ** (1.0 / self.xp_dim)
        pts = 0.9999 * radii[:, None] * u
        g0 = self.family.value(np.zeros((1, self.xp_dim)))
        gr0 = self.family.gradient(np.zeros((1, self.xp_dim)))
        if abs(g0[0]) > EPS_GEOM or np.linalg.norm(gr0[0]) > EPS_GEOM:
            raise ConstructionError("crack graph must satisfy g(0)=0, grad g(0)=0")
        margin = self.family.value(pts) - np.sum(pts * self.family.gradient(pts), axis=1)
        if np.min(margin) < -EPS_GEOM:
            raise ConstructionError(
                "star-shape margin g - x'.grad g is negative "
                f"(min {np.min(margin):.3e}); geometry rejected"
            )

    # -- straightening ------------------------------------------------------

    def straightening(self):
        return StraighteningMap(self)


class StraighteningMap:
    """Radius-preserving diffeomorphism flattening the crack.

    ``xi`` maps the curved-crack picture to the straight one, ``phi`` is
    its inverse (Newton iteration on the explicit forward map), and
    ``coefficient_fields`` produces the matrix A(x) and the Jacobian
    weight entering the straightened equation.
    """

    def __init__(self, geom: CrackGeometry, rbar=None, scan_points=1000):
        self.geom = geom
        self.dim = geom.dim
        if rbar is None:
            rbar = self._scan_rbar(scan_points)
        self.rbar = float(rbar)

    # forward map -----------------------------------------------------------

    def _split(self, pts):
        return pts[:, : self.dim - 2], pts[:, self.dim - 2], pts[:, self.dim - 1]

    def _s_factor(self, pts):
        yp, yN, _ = self._split(pts)
        G = self.geom.family.value(yp)
        rho2 = np.sum(pts * pts, axis=1)
        rho2 = np.where(rho2 == 0.0, 1.0, rho2)
        return 1.0 + (G * G - 2.0 * G * yN) / rho2, G

    def xi(self, y):
        """Forward straightening; |xi(y)| = |y| and xi(0) = 0."""
        pts = _as_points(y, self.dim)
        self._check_radius(pts)
        s, G = self._s_factor(pts)
        if np.any(s <= 0.0):
            raise ConstructionError("denominator under the square root is <= 0; "
                                    "the straightening radius is too large")
        num = pts.copy()
        num[:, self.dim - 2] = num[:, self.dim - 2] - G
        out = num / np.sqrt(s)[:, None]
        zero = np.all(pts == 0.0, axis=1)
        out[zero] = 0.0
        return out if np.ndim(y) > 1 else out[0]

    def jac_xi(self, y):
        """Analytic Jacobian of the forward map at interior points y != 0."""
        pts = _as_points(y, self.dim)
        n, d = pts.shape
        yp, yN, _ = self._split(pts)
        G = self.geom.family.value(yp)
        dG = self.geom.family.gradient(yp)
        rho2 = np.sum(pts * pts, axis=1)
        if np.any(rho2 == 0.0):
            raise DomainError("Jacobian of the straightening is evaluated at y != 0")
        s = 1.0 + (G * G - 2.0 * G * yN) / rho2
        if np.any(s <= 0.0):
            raise ConstructionError("denominator under the square root is <= 0")
        num = pts.copy()
        num[:, d - 2] -= G
        # gradient of s
        h = G * G - 2.0 * G * yN
        grad_s = -2.0 * h[:, None] * pts / (rho2 * rho2)[:, None]
        grad_s[:, : d - 2] += 2.0 * dG * ((G - yN) / rho2)[:, None]
        grad_s[:, d - 2] += -2.0 * G / rho2
        # Jacobian of the numerator
        Jnum = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        Jnum[:, d - 2, : d - 2] = -dG
        s_m12 = s ** (-0.5)
        s_m32 = s ** (-1.5)
        J = s_m12[:, None, None] * Jnum - 0.5 * s_m32[:, None, None] * (
            num[:, :, None] * grad_s[:, None, :]
        )
        return J if np.ndim(y) > 1 else J[0]

    # inverse map -----------------------------------------------------------

    def phi(self, x, tol=1e-14, max_iter=50):
        """Inverse straightening by Newton iteration started at x."""
        pts = _as_points(x, self.dim)
        self._check_radius(pts)
        zero = np.all(pts == 0.0, axis=1)
        y = pts.copy()
        work = ~zero
        scale = np.maximum(np.linalg.norm(pts, axis=1), 1e-300)
        for _ in range(max_iter):
            if not np.any(work):
                break
            res = self._xi_unchecked(y[work]) - pts[work]
            err = np.linalg.norm(res, axis=1) / scale[work]
            if np.max(err) < tol:
                break
            J = self.jac_xi(y[work])
            try:
                step = np.linalg.solve(J, res[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError as exc:
                raise NumericalError("singular Jacobian while inverting the "
                                     "straightening map") from exc
            y[work] -= step
        else:
            res = self._xi_unchecked(y[work]) - pts[work]
            worst = np.argmax(np.linalg.norm(res, axis=1))
            raise NumericalError(
                f"straightening inversion did not converge at point "
                f"{pts[work][worst]}"
            )
        y[zero] = 0.0
        return y if np.ndim(x) > 1 else y[0]

    def _xi_unchecked(self, pts):
        s, G = self._s_factor(pts)
        if np.any(s <= 0.0):
            raise ConstructionError("denominator under the square root is <= 0")
        num = pts.copy()
        num[:, self.dim - 2] -= G
        out = num / np.sqrt(s)[:, None]
        zero = np.all(pts == 0.0, axis=1)
        out[zero] = 0.0
        return out

    def jac_phi(self, x):
        """Jacobian of the inverse map: inverse of jac_xi at phi(x)."""
        pts = _as_points(x, self.dim)
        y = self.phi(pts)
        J = self.jac_xi(y)
        return np.linalg.inv(J) if np.ndim(x) > 1 else np.linalg.inv(J[None])[0]

    def jac_phi_fd(self, x, step=None):
        """Central finite-difference Jacobian of phi (cross-check fallback)."""
        pts = _as_points(x, self.dim)
        n, d = pts.shape
        out = np.empty((n, d, d))
        for i in range(d):
            h = step if step is not None else 1e-6 * np.maximum(
                np.linalg.norm(pts, axis=1), 1e-3
            )
            e = np.zeros(d)
            e[i] = 1.0
            fp = self.phi(pts + h[:, None] * e)
            fm = self.phi(pts - h[:, None] * e)
            out[:, :, i] = (fp - fm) / (2.0 * h)[:, None]
        return out if np.ndim(x) > 1 else out[0]

    # coefficient fields ----------------------------------------------------

    def coefficient_fields(self, x):
        """A(x) and the Jacobian weight w(x) = |det Jac Phi(x)|.

        A = w * (Jac Phi)^-1 (Jac Phi)^-T is symmetric positive definite
        near the origin and tends to the identity as |x| -> 0.
        """
        A, w, _ = self.full_fields(x)
        return A, w

    def full_fields(self, x):
        """(A(x), w(x), Phi(x)) with a single inversion pass."""
        pts = _as_points(x, self.dim)
        self._check_radius(pts)
        y = self.phi(pts)
        Jxi = self.jac_xi(y)          # = (Jac Phi)^(-1) at x
        det_xi = np.linalg.det(Jxi)
        if np.any(np.abs(det_xi) < 1e-14):
            bad = pts[np.argmin(np.abs(det_xi))]
            raise NumericalError(f"singular Jacobian at point {bad}")
        w = 1.0 / np.abs(det_xi)
        A = w[:, None, None] * np.einsum("nij,nkj->nik", Jxi, Jxi)
        A = 0.5 * (A + np.transpose(A, (0, 2, 1)))
        if np.ndim(x) > 1:
            return A, w, y
        return A[0], float(w[0]), y[0]

    def potential_transform(self, x):
        """Weight |det Jac Phi(x)| multiplying the pulled-back potential."""
        return self.coefficient_fields(x)[1]

    # admin -----------------------------------------------------------------

    def _check_radius(self, pts):
        r = np.linalg.norm(pts, axis=1)
        if np.any(r > self.rbar * (1.0 + 1e-12)):
            raise DomainError(
                f"point outside the straightening radius rbar={self.rbar:.6g}"
            )

    def _scan_rbar(self, scan_points):
        """Largest dyadic radius <= R^/4 passing the invertibility scan."""
        base = self.geom.validity_radius / 4.0
        rng = np.random.default_rng(777)
        u = rng.standard_normal((scan_points, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        radii = rng.random(scan_points) ** (1.0 / self.dim)
        r = base
        for _ in range(40):
            pts = (r * radii)[:, None] * u
            keep = np.linalg.norm(pts, axis=1) > 1e-12
            pts = pts[keep]
            try:
                s, _ = self._s_factor(pts)
                if np.min(s) <= 0.05:
                    raise ConstructionError("denominator")
                J = self.jac_xi(pts)
                sv = np.linalg.svd(J, compute_uv=False)
                if np.min(sv) < 0.1 or np.max(sv) > 10.0:
                    raise ConstructionError("conditioning")
            except ConstructionError:
                r *= 0.5
                continue
            return r
        raise ConstructionError("no dyadic radius passes the invertibility scan")


# -- smoothed approximating domains ------------------------------------------


def f_smoothing(n, t):
    """The C^2 smoothing profile: n|t| plus an exponential bump near 0.

    f_n(t) = n|t| + (1/n) exp(2 n^2 |t| / (n^2 |t| - 2)) for |t| < 2/n^2
    and n|t| outside; f_n(0) = 1/n and f_n(t) >= n|t| everywhere.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    cutoff = 2.0 / n**2
    inner = a < cutoff
    out = n * a
    if np.any(inner):
        ai = a[inner]
        expo = 2.0 * n**2 * ai / (n**2 * ai - 2.0)
        out = out.copy()
        out[inner] += np.exp(expo) / n
    return out if out.ndim else float(out)


def f_smoothing_derivative(n, t):
    """Derivative of the smoothing profile (odd, vanishes at t = 0)."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    sgn = np.sign(t)
    cutoff = 2.0 / n**2
    inner = a < cutoff
    out = n * sgn
    if np.any(inner):
        ai = a[inner]
        den = n**2 * ai - 2.0
        expo = 2.0 * n**2 * ai / den
        dexpo = -4.0 * n**2 / (den * den)
        out = out.copy()
        out[inner] = sgn[inner] * (n + np.exp(expo) * dexpo / n)
    return out if out.ndim else float(out)


class SmoothedDomain:
    """The smooth star-shaped set approximating the cracked ball.

    Membership: |x| < r and x_N < g(x') + f_n(x_{N+1}).  The boundary
    splits into the graph cap (equality in the second condition) and the
    spherical remainder.
    """

    def __init__(self, geom: CrackGeometry, n, radius):
        if n < 1:
            raise ConstructionError("smoothing index n must be >= 1")
        if radius > geom.validity_radius:
            raise ConstructionError("smoothed-domain radius exceeds the validity radius")
        self.geom = geom
        self.n = int(n)
        self.radius = float(radius)

    def f(self, t):
        return f_smoothing(self.n, t)

    def f_prime(self, t):
        return f_smoothing_derivative(self.n, t)

    def membership(self, x):
        pts = _as_points(x, self.geom.dim)
        d = self.geom.dim
        r = np.linalg.norm(pts, axis=1)
        g = self.geom.family.value(pts[:, : d - 2])
        cap = pts[:, d - 2] < g + self.f(pts[:, d - 1])
        inside = (r < self.radius) & cap
        return inside if np.ndim(x) > 1 else bool(inside[0])

    def cap_point(self, xp, xN1):
        """Point on the graph cap over (x', x_{N+1})."""
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        xN1 = np.atleast_1d(np.asarray(xN1, dtype=float))
        g = self.geom.family.value(xp)
        xN = g + self.f(xN1)
        return np.column_stack([xp, xN, xN1])

    def cap_normal(self, xp, xN1):
        """Outward unit normal on the graph cap."""
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        xN1 = np.atleast_1d(np.asarray(xN1, dtype=float))
        dg = self.geom.family.gradient(xp)
        fp = self.f_prime(xN1)
        nor = np.column_stack([-dg, np.ones_like(xN1), -fp])
        nor /= np.linalg.norm(nor, axis=1, keepdims=True)
        return nor

    def star_shape_certificate(self, samples=2000, rng=None):
        """Sample x . nu on the graph cap and report the minimum.

        The explicit normal gives
        x . nu = (margin(x') + f_n - x_{N+1} f_n') / norm, which is
        nonnegative in exact arithmetic; the certificate requires the
        sampled minimum to stay above -EPS_GEOM.
        """
        rng = rng or np.random.default_rng(42)
        d = self.geom.dim
        m = d - 2
        tmax = self.radius
        xN1 = rng.uniform(-tmax, tmax, samples)
        if m > 0:
            xp = rng.uniform(-tmax, tmax, (samples, m))
            keep = np.linalg.norm(xp, axis=1) < 0.999 * self.geom.validity_radius
            xp, xN1 = xp[keep], xN1[keep]
        else:
            xp = np.zeros((samples, 0))
        pts = self.cap_point(xp, xN1)
        keep = np.linalg.norm(pts, axis=1) < self.radius
        pts, xp, xN1 = pts[keep], xp[keep], xN1[keep]
        if len(pts) == 0:
            return {"min_x_dot_nu": 0.0, "samples": 0, "passed": True}
        nor = self.cap_normal(xp, xN1)
        xdotnu = np.sum(pts * nor, axis=1)
        mn = float(np.min(xdotnu))
        return {
            "min_x_dot_nu": mn,
            "samples": int(len(pts)),
            "passed": bool(mn >= -EPS_GEOM),
        }
