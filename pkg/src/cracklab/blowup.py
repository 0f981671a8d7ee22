"""Blow-up scaling, Fourier coefficients and the two routes to beta.

The straightened solution v is expanded on the slit-sphere eigenbasis,
phi_{k,m}(lambda) = int_{S^N} v(lambda theta) Y_{k,m} dS.  The correction
integrals Upsilon_{k,m} collect the deviation of the coefficient matrix
from the identity and the potential term; the Cauchy-type integral
formula then produces the blow-up coefficients beta_m for any sampling
radius R, cross-checked against the direct limit of
lambda^(-k0/2) phi_{k0,m}(lambda).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import AccuracyError
from .fields import HomogeneousModeField, LinearCombinationField, ScaledField
from .frequency import compute_H, cumulative_power_integral
from .quadrature import default_sphere_quadrature
from .spectral import SlitSphereBasis


def homogeneous_profile(basis: SlitSphereBasis, k, coefficients):
    """The homogeneous field |x|^(k/2) sum_m beta_m Y_{k,m}."""
    fields, weights = [], []
    for m, beta in enumerate(coefficients, start=1):
        pos = basis.mode_position(k, m)
        cols = np.nonzero(basis._coeff[:, pos])[0]
        for c in cols:
            fields.append(HomogeneousModeField(basis.N, k, mode=basis.modes[c]))
            weights.append(beta * basis._coeff[c, pos])
    return LinearCombinationField(fields, weights)


def scaled_field(u, lam, quad=None, check_tol=1e-6):
    """w^lambda(x) = u(lambda x)/sqrt(H(lambda)), boundary-normalized.

    The unit normalization on the boundary sphere is verified with an
    independently refined quadrature.
    """
    quad = quad or default_sphere_quadrature(u.dim - 1)
    H = compute_H(u, lam, quad)
    if H <= 0.0:
        raise AccuracyError(f"H({lam}) <= 0; cannot normalize the scaled field")
    w = ScaledField(u, lam, norm=np.sqrt(H))
    H_check = compute_H(w, 1.0, quad.refine())
    w.normalization_defect = abs(H_check - 1.0)
    w.under_resolved = w.normalization_defect > check_tol
    return w


def fourier_coefficient(v, basis: SlitSphereBasis, k, m, lam):
    """phi_{k,m}(lambda) = int_{S^N} v(lambda theta) Y_{k,m}(theta) dS."""
    quad = basis.quadrature
    vals = np.atleast_1d(v(lam * quad.nodes))
    Y = basis.values_at_quadrature(k, m)
    return float(quad.weights @ (vals * Y))


def fourier_table(v, basis: SlitSphereBasis, lambdas):
    """phi_{k,m}(lambda) for every basis mode and every lambda."""
    quad = basis.quadrature
    out = {}
    for lam in lambdas:
        vals = np.atleast_1d(v(lam * quad.nodes))
        row = {}
        for idx in basis.indices:
            Y = basis.values_at_quadrature(idx.k, idx.m)
            row[(idx.k, idx.m)] = float(quad.weights @ (vals * Y))
        out[lam] = row
    return out


class UpsilonSampler:
    """Upsilon_{k,m}(lambda) on a radial grid, volume terms accumulated once.

    For a flat crack the coefficient matrix is the identity and only the
    potential term survives; the two (A - Id) integrals are skipped
    exactly rather than quadratured to zero.
    """

    def __init__(self, v, basis: SlitSphereBasis, k, m, s_grid,
                 potential=None, straightening=None):
        self.basis = basis
        self.k, self.m = k, m
        self.s = np.asarray(s_grid, dtype=float)
        quad = basis.quadrature
        N = basis.N
        theta = quad.nodes
        w = quad.weights
        Y = basis.values_at_quadrature(k, m)
        gradY = basis.surface_gradient(k, m, theta)
        ns, Q = len(self.s), len(w)
        pts = (self.s[:, None, None] * theta[None, :, :]).reshape(-1, N + 1)
        curved = straightening is not None and \
            straightening.geom.family_name != "flat"
        d2 = np.zeros(ns)
        if potential is not None and not potential.is_zero():
            vals = np.atleast_1d(v(pts)).reshape(ns, Q)
            if curved:
                y = straightening.phi(pts)
                _, jw = straightening.coefficient_fields(pts)
                ftilde = (jw * np.atleast_1d(potential(y))).reshape(ns, Q)
            else:
                ftilde = np.atleast_1d(potential(pts)).reshape(ns, Q)
            d2 = (ftilde * vals * Y[None, :]) @ w
        d1 = np.zeros(ns)
        surf = np.zeros(ns)
        if curved:
            grads = v.gradient(pts).reshape(ns, Q, N + 1)
            A, _ = straightening.coefficient_fields(pts)
            A = A.reshape(ns, Q, N + 1, N + 1)
            dev = A - np.eye(N + 1)
            flux = np.einsum("sqab,sqb->sqa", dev, grads)
            d1 = np.einsum("sqa,qa,q->s", flux, gradY, w) / self.s
            surf_dens = np.einsum("sqa,qa,q->s", flux, theta * Y[:, None], w)
            surf = self.s**N * surf_dens
        self._cum_d1 = cumulative_power_integral(self.s, d1, N)[0]
        self._cum_d2 = cumulative_power_integral(self.s, d2, N)[0]
        self._surf = surf
        self.values = -self._cum_d1 + self._cum_d2 + self._surf

    def __call__(self, lam):
        return float(np.interp(lam, self.s, self.values))


def upsilon(v, potential, basis: SlitSphereBasis, k, m, lam,
            straightening=None, s_grid=None):
    """Single-value Upsilon_{k,m}(lambda)."""
    if s_grid is None:
        s_grid = np.geomspace(lam * 1e-3, lam, 64)
    sampler = UpsilonSampler(v, basis, k, m, s_grid, potential, straightening)
    return sampler(lam)


def _power_envelope(s, y):
    """Fit |y| ~ C s^p on the lowest resolved decade (None if y ~ 0)."""
    scale = np.max(np.abs(y))
    if scale == 0.0:
        return None
    mask = np.abs(y) > 1e-13 * scale
    if np.sum(mask) < 3:
        return None
    s_m, y_m = s[mask], np.abs(y[mask])
    lo = s_m <= s_m[0] * 10.0
    if np.sum(lo) < 2:
        lo = slice(0, 3)
    p, logC = np.polyfit(np.log(s_m[lo]), np.log(y_m[lo]), 1)
    return float(np.exp(logC)), float(p)


def beta_integral(v, potential, basis: SlitSphereBasis, k0, m, R,
                  straightening=None, lambda_cut=None, points_per_decade=16,
                  tail_fraction_limit=0.10):
    """Cauchy-type integral formula for beta_m at sampling radius R.

    beta_m = int_{S^N} R^(-k0/2) v(R theta) Y_{k0,m} dS
             + (1/(1-N-k0)) int_0^R [ (1-N-k0/2) s^(-N-k0/2)
                                      - k0 s^(k0/2-1) / (2 R^(N-1+k0)) ]
                                    Upsilon_{k0,m}(s) ds.

    Upsilon is quadratured above lambda_cut; below, its contribution is
    bounded by the fitted power envelope and must stay under
    ``tail_fraction_limit`` of the leading term.
    """
    N = basis.N
    if lambda_cut is None:
        lambda_cut = 1e-3 * R
    leading = R ** (-0.5 * k0) * fourier_coefficient(v, basis, k0, m, R)
    s = np.geomspace(lambda_cut, R,
                     max(int(np.ceil(np.log10(R / lambda_cut)
                                     * points_per_decade)) + 1, 8))
    sampler = UpsilonSampler(v, basis, k0, m, s, potential, straightening)
    ups = sampler.values
    c_front = 1.0 / (1.0 - N - k0)
    w_a = -N - 0.5 * k0
    w_b = 0.5 * k0 - 1.0
    I_a = cumulative_power_integral(s, ups, w_a, tail=False)[0][-1]
    I_b = cumulative_power_integral(s, ups, w_b, tail=False)[0][-1]
    correction = c_front * ((1.0 - N - 0.5 * k0) * I_a
                            - 0.5 * k0 * I_b / R ** (N - 1 + k0))
    env = _power_envelope(s, ups)
    tail_bound = 0.0
    if env is not None:
        C, p = env
        p_a = p + w_a
        if p_a <= -1.0:
            raise AccuracyError(
                f"Upsilon tail exponent {p:.2f} makes s^(-N-k0/2) Upsilon "
                "non-integrable near 0; refine the solve"
            )
        tail_bound = abs(c_front) * (
            abs(1.0 - N - 0.5 * k0) * C * lambda_cut ** (p_a + 1.0) / (p_a + 1.0)
            + 0.5 * k0 * C * lambda_cut ** (p + w_b + 1.0)
            / ((p + w_b + 1.0) * R ** (N - 1 + k0))
        )
    scale = max(abs(leading), 1e-300)
    if tail_bound > tail_fraction_limit * scale:
        raise AccuracyError(
            f"Upsilon tail bound {tail_bound:.3e} exceeds "
            f"{tail_fraction_limit:.0%} of the leading term {leading:.3e}"
        )
    return float(leading + correction)


def beta_direct(v, basis: SlitSphereBasis, k0, lambdas):
    """Richardson-extrapolated limit of lambda^(-k0/2) phi_{k0,m}(lambda).

    Order-1 extrapolation (the leading correction of the boundary-mass
    normalization is O(lambda)).  A non-monotone tail disables the
    extrapolation and the raw sequence is reported instead.
    """
    lam = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    M = basis.multiplicities().get(k0, 0)
    betas = np.zeros(M)
    raw = {}
    extrapolated = {}
    for m in range(1, M + 1):
        a = np.array([
            l ** (-0.5 * k0) * fourier_coefficient(v, basis, k0, m, l)
            for l in lam
        ])
        raw[m] = a
        rho = lam[:-1] / lam[1:]
        rich = (rho * a[1:] - a[:-1]) / (rho - 1.0)
        gaps = np.abs(np.diff(a))
        monotone = len(gaps) < 2 or bool(np.all(np.diff(gaps) <= 1e-12 + 0.5 * gaps[:-1]))
        if monotone and len(rich) > 0:
            betas[m - 1] = rich[-1]
            extrapolated[m] = True
        else:
            betas[m - 1] = a[-1]
            extrapolated[m] = False
    return betas, {"lambdas": lam, "raw": raw, "extrapolated": extrapolated}


def angular_profile_error(v, basis: SlitSphereBasis, k0, betas, lam):
    """L2(S^N) distance between lambda^(-k0/2) v(lambda .) and the profile."""
    quad = basis.quadrature
    vals = np.atleast_1d(v(lam * quad.nodes)) * lam ** (-0.5 * k0)
    prof = np.zeros_like(vals)
    for m, b in enumerate(betas, start=1):
        prof += b * basis.values_at_quadrature(k0, m)
    return float(np.sqrt(quad.weights @ (vals - prof) ** 2))


@dataclass
class BlowupReport:
    k0: int
    basis_id: str
    lambdas: np.ndarray
    phi_table: dict
    beta_direct: np.ndarray
    beta_integral: np.ndarray
    profile_error: float
    sampling_radius: float
    extras: dict = dataclass_field(default_factory=dict)

    def cross_route_discrepancy(self):
        num = np.linalg.norm(self.beta_direct - self.beta_integral)
        den = max(np.linalg.norm(self.beta_direct), 1e-300)
        return float(num / den)

    def to_dict(self):
        return {
            "k0": int(self.k0),
            "basis": self.basis_id,
            "lambda_grid": [float(v) for v in self.lambdas],
            "beta_direct": [float(b) for b in self.beta_direct],
            "beta_integral": [float(b) for b in self.beta_integral],
            "beta_norm": float(np.linalg.norm(self.beta_direct)),
            "cross_route_discrepancy": self.cross_route_discrepancy(),
            "angular_profile_error": float(self.profile_error),
            "sampling_radius": float(self.sampling_radius),
            "phi": {
                f"{k},{m}": [float(self.phi_table[lam][(k, m)])
                             for lam in self.lambdas]
                for (k, m) in self.phi_table[self.lambdas[0]]
            },
            **self.extras,
        }


def blowup_report(v, potential, basis: SlitSphereBasis, k0, lambdas, R,
                  straightening=None, lambda_cut=None):
    """Run both beta routes and package the comparison."""
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    phi_tab = fourier_table(v, basis, lambdas)
    bd, direct_info = beta_direct(v, basis, k0, lambdas)
    M = basis.multiplicities()[k0]
    bi = np.array([
        beta_integral(v, potential, basis, k0, m, R,
                      straightening=straightening, lambda_cut=lambda_cut)
        for m in range(1, M + 1)
    ])
    err = angular_profile_error(v, basis, k0, bd, lambdas[-1])
    return BlowupReport(
        k0=k0, basis_id=basis.identifier, lambdas=lambdas, phi_table=phi_tab,
        beta_direct=bd, beta_integral=bi, profile_error=err,
        sampling_radius=R,
        extras={"direct_extrapolated": {str(k): bool(v)
                                        for k, v in direct_info["extrapolated"].items()}},
    )
