"""Command-line orchestration: spectrum / solve / frequency / blowup / approx / audit.

Every artifact embeds the config hash; identical config and seed produce
byte-identical outputs.  Exit status: 0 success, 2 audit failure, 1 error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from .blowup import blowup_report
from .config import ExperimentConfig
from .errors import CracklabError, ConfigError
from .fields import HomogeneousModeField, LinearCombinationField, PullbackField
from .frequency import RadialSweep, frequency_trace, h1_norm, pohozaev_residual, \
    pohozaev_tolerance
from .geometry import CrackGeometry
from .meshing import build_mesh
from .solver import DiscreteProblem, PotentialSpec, hypothesis_report, \
    solve_approximating
from .spectral import SlitSphereBasis, ladder


def _geometry(cfg: ExperimentConfig):
    d = cfg.get("dimension")
    crack = cfg.section("crack")
    return CrackGeometry(
        d, family=crack.get("family", "flat"),
        params={"a": crack.get("a", 0.5)},
        validity_radius=crack.get("validity_radius", 1.0),
    )


def _potential(cfg: ExperimentConfig):
    pot = cfg.section("potential")
    return PotentialSpec(
        family=pot.get("family", "zero"), c=pot.get("c", 0.0),
        delta=pot.get("delta", 0.5),
        coefficients=pot.get("coefficients", ()),
        hypothesis=pot.get("hypothesis", "H1"),
    )


def _solve_radius(cfg, geom, pot):
    mesh_cfg = cfg.section("mesh")
    if "radius" in mesh_cfg:
        return float(mesh_cfg["radius"])
    smap = geom.straightening()
    r0 = pot.coercivity_radius(geom.N, geom.validity_radius)
    return min(smap.rbar, 0.95 * r0)


def _build_mesh(cfg, radius):
    mesh_cfg = cfg.section("mesh")
    kwargs = {k: mesh_cfg[k] for k in ("n_r", "n_t", "n_R", "n_phi")
              if k in mesh_cfg}
    return build_mesh(cfg.get("dimension"), radius,
                      beta_g=mesh_cfg.get("beta_g", 2.0),
                      h=mesh_cfg.get("h", radius / 24.0), **kwargs)


def _manufactured_field(cfg, geom):
    fld = cfg.section("field")
    return HomogeneousModeField(geom.N, fld.get("k", 1), fld.get("m", 1),
                                coefficient=fld.get("coefficient", 1.0))


def _solved_field(cfg, geom, pot, seed):
    """Solve the (possibly straightened) problem; return (u, v, mesh, smap)."""
    radius = _solve_radius(cfg, geom, pot)
    mesh = _build_mesh(cfg, radius)
    fld = cfg.section("field")
    mode = HomogeneousModeField(geom.N, fld.get("k", 1), fld.get("m", 1))
    curved = geom.family_name != "flat"
    smap = geom.straightening() if curved else None
    problem = DiscreteProblem(mesh, pot, smap)
    v = problem.solve(mode, coercivity_probes=20)
    u = PullbackField(v, smap) if curved else v
    return u, v, mesh, smap, problem


def _trace_radii(cfg, mesh, radius):
    radii = cfg.section("radii")
    r_min = radii.get("r_min", max(3.5 * mesh.local_width(0.1 * radius)
                                   if mesh is not None else 0.01 * radius,
                                   0.02 * radius))
    r_max = radii.get("r_max", 0.9 * radius)
    return r_min, r_max, radii.get("ratio", 1.15)


def cmd_spectrum(cfg, out, seed):
    d = cfg.get("dimension")
    N = d - 1
    basis = SlitSphereBasis(N, cfg.get("modes", "k_max", default=4))
    payload = basis.export_dict(sample_limit=256)
    spec_cfg = cfg.section("spectrum")
    if N == 2 and spec_cfg.get("eigensolve", False):
        from .sphere_fem import numeric_eigensolve

        res = numeric_eigensolve(
            n_phi=spec_cfg.get("n_phi", 60), n_t=spec_cfg.get("n_t", 120),
            count=spec_cfg.get("count", 8),
            grading=spec_cfg.get("grading", 2.0),
        )
        reference = {k: float(ladder(N, k)) for k in
                     range(1, cfg.get("modes", "k_max", default=4) + 1)}
        payload["numeric_eigenvalues"] = [float(v) for v in res.eigenvalues]
        payload["numeric_multiplicities"] = res.multiplicity_table(reference)
    cio.write_json(out / "spectrum.json", payload, cfg.hash())
    print(f"spectrum written to {out / 'spectrum.json'}")
    return 0


def cmd_solve(cfg, out, seed):
    geom = _geometry(cfg)
    pot = _potential(cfg)
    u, v, mesh, smap, problem = _solved_field(cfg, geom, pot, seed)
    cio.write_mesh(out / "mesh.txt", mesh, cfg.hash())
    cio.write_field(out / "field.txt", v, "mesh.txt", cfg.hash())
    cio.write_json(out / "solve.json", {
        "dofs": int(len(mesh.nodes)),
        "elements": int(len(mesh.elements)),
        "iterations": v.solve_info["iterations"],
        "coercivity_margin": v.solve_info["coercivity_margin"],
        "straightened": geom.family_name != "flat",
    }, cfg.hash())
    print(f"solved {len(mesh.nodes)} dofs in {v.solve_info['iterations']} iterations")
    return 0


def cmd_frequency(cfg, out, seed):
    geom = _geometry(cfg)
    pot = _potential(cfg)
    source = cfg.get("field", "source")
    if source == "manufactured":
        u = _manufactured_field(cfg, geom)
        mesh = None
        radius = _solve_radius(cfg, geom, pot)
    else:
        u, _, mesh, _, _ = _solved_field(cfg, geom, pot, seed)
        radius = mesh.radius
    r_min, r_max, ratio = _trace_radii(cfg, mesh, radius)
    trace, _ = frequency_trace(u, pot, r_min, r_max, ratio=ratio, mesh=mesh,
                               hypothesis=pot.hypothesis)
    cio.write_trace_csv(out / "trace.csv", trace, cfg.hash())
    cio.write_json(out / "fit.json", trace.fit_summary(), cfg.hash())
    print(f"gamma = {trace.gamma:.6f}, snapped k0 = {trace.k0} "
          f"(distance {trace.snap_distance:.2e})")
    return 0


def cmd_blowup(cfg, out, seed):
    geom = _geometry(cfg)
    pot = _potential(cfg)
    source = cfg.get("field", "source")
    smap = None
    if source == "manufactured":
        v = _manufactured_field(cfg, geom)
        u = v
        mesh = None
        radius = _solve_radius(cfg, geom, pot)
    else:
        u, v, mesh, smap, _ = _solved_field(cfg, geom, pot, seed)
        radius = mesh.radius
    r_min, r_max, ratio = _trace_radii(cfg, mesh, radius)
    trace, _ = frequency_trace(u, pot, r_min, r_max, ratio=ratio, mesh=mesh,
                               hypothesis=pot.hypothesis)
    basis = SlitSphereBasis(geom.N, max(cfg.get("modes", "k_max", default=4),
                                        trace.k0))
    blow = cfg.section("blowup")
    lam_grid = np.geomspace(blow.get("lambda_min", 1.5 * r_min),
                            blow.get("lambda_max", 0.5 * r_max),
                            blow.get("points", 6))
    R = blow.get("R", 0.8 * r_max)
    lam_cut = blow.get("lambda_cut", None)
    report = blowup_report(v, pot, basis, trace.k0, lam_grid, R,
                           straightening=smap, lambda_cut=lam_cut)
    cio.write_json(out / "blowup.json", report.to_dict(), cfg.hash())
    cio.write_profile_csv(out / "profile.csv", basis, trace.k0,
                          report.beta_direct, config_hash=cfg.hash())
    print(f"k0 = {trace.k0}, |beta| = {np.linalg.norm(report.beta_direct):.6f}, "
          f"cross-route discrepancy = {report.cross_route_discrepancy():.3%}")
    return 0


def cmd_approx(cfg, out, seed):
    if cfg.get("dimension") != 2:
        raise ConfigError("the approximating-domain experiment runs in d = 2")
    geom = _geometry(cfg)
    pot = _potential(cfg)
    approx = cfg.section("approx")
    n_list = approx.get("n_list", [8, 16, 32])
    r0 = _solve_radius(cfg, geom, pot)
    fld = cfg.section("field")
    mode = HomogeneousModeField(geom.N, fld.get("k", 1))
    mesh = _build_mesh(cfg, r0)
    problem = DiscreteProblem(mesh, pot)
    u_ref = problem.solve(mode)
    rows = []
    for n in n_list:
        un = solve_approximating(geom, n, r0, mode, potential=pot,
                                 n_r=approx.get("n_r", 64),
                                 n_t=approx.get("n_t", 128))
        diff = LinearCombinationField([un, u_ref], [1.0, -1.0])
        err = h1_norm(diff, r0)
        rows.append({
            "n": int(n),
            "h1_distance": float(err),
            "star_certificate_min": un.star_certificate["min_x_dot_nu"],
            "star_certificate_passed": bool(un.star_certificate["passed"]),
        })
        print(f"n = {n:4d}: |u_n - u|_H1 = {err:.6f}, "
              f"min x.nu = {un.star_certificate['min_x_dot_nu']:.2e}")
    cio.write_json(out / "approx.json", {"sequence": rows}, cfg.hash())
    return 0


def cmd_audit(cfg, out, seed):
    geom = _geometry(cfg)
    pot = _potential(cfg)
    radius = _solve_radius(cfg, geom, pot)
    r_grid = np.geomspace(0.01 * radius, radius, 20)
    report = hypothesis_report(pot, geom.N, r_grid, geom.validity_radius)
    failures = [] if report["passed"] else ["hypothesis flags"]

    source = cfg.get("field", "source")
    if source == "manufactured":
        u = _manufactured_field(cfg, geom)
        mesh = None
    else:
        u, _, mesh, _, _ = _solved_field(cfg, geom, pot, seed)
        radius = mesh.radius
    r_min, r_max, _ = _trace_radii(cfg, mesh, radius)
    radii = np.geomspace(r_min, r_max, 10)
    sweep = RadialSweep(u, pot, s_min=r_min / 10.0, s_max=r_max,
                        extra_nodes=radii)
    h_edge = mesh.local_width(r_min) if mesh is not None else 0.0
    tol = pohozaev_tolerance(u, sweep, h_edge)
    residuals = [pohozaev_residual(u, pot, r, sweep, hypothesis=pot.hypothesis)
                 for r in radii]
    poh_failures = [float(r) for r, v in zip(radii, residuals) if v < -tol]
    if poh_failures:
        failures.append(f"pohozaev residual negative at radii {poh_failures}")
    report["pohozaev"] = {
        "radii": [float(r) for r in radii],
        "residuals": [float(v) for v in residuals],
        "tolerance": float(tol),
        "failures": poh_failures,
    }
    report["audit_failures"] = failures
    cio.write_json(out / "audit.json", report, cfg.hash())
    if failures:
        print(f"AUDIT FAILED: {failures}")
        return 2
    print("audit passed")
    return 0


_COMMANDS = {
    "spectrum": cmd_spectrum,
    "solve": cmd_solve,
    "frequency": cmd_frequency,
    "blowup": cmd_blowup,
    "approx": cmd_approx,
    "audit": cmd_audit,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cracklab",
        description="Numerical laboratory for elliptic problems with a crack",
    )
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="TOML config path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="probe-field seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="advisory thread count, recorded in artifacts")
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1
    try:
        cfg = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            cfg.tree["seed"] = args.seed
        out = Path(args.out or cfg.get("output", "dir", default="out"))
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.subcommand](cfg, out, cfg.get("seed"))
    except CracklabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
