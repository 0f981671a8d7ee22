"""Plain-text artifact formats: meshes, fields, traces, reports.

Mesh and field dumps are line-oriented with magic headers
``cracklab-mesh v1`` / ``cracklab-field v1``; trace exports are CSV with
the documented column header; JSON reports carry the config hash.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConstructionError
from .meshing import BallMesh, kdtree_locator

FLOAT_FMT = "%.17g"


def write_mesh(path, mesh: BallMesh, config_hash=None):
    lines = ["cracklab-mesh v1"]
    if config_hash:
        lines.append(f"# config_hash: {config_hash}")
    lines.append(f"dim {mesh.dim}")
    lines.append(f"radius {FLOAT_FMT % mesh.radius}")
    lines.append(f"nodes {len(mesh.nodes)}")
    for p in mesh.nodes:
        lines.append(" ".join(FLOAT_FMT % c for c in p))
    lines.append(f"elements {len(mesh.elements)}")
    for e in mesh.elements:
        lines.append(" ".join(str(v) for v in e))
    lines.append("crack_nodes " + " ".join(
        str(i) for i in np.nonzero(mesh.crack_nodes)[0]))
    lines.append("boundary_nodes " + " ".join(
        str(i) for i in np.nonzero(mesh.outer_nodes)[0]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    """Read a mesh dump back as a BallMesh with a generic locator."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "cracklab-mesh v1":
        raise ConstructionError(f"{path}: not a cracklab-mesh v1 file")
    i = 1
    while text[i].startswith("#"):
        i += 1
    dim = int(text[i].split()[1]); i += 1
    radius = float(text[i].split()[1]); i += 1
    n = int(text[i].split()[1]); i += 1
    nodes = np.array([[float(c) for c in text[i + j].split()] for j in range(n)])
    i += n
    m = int(text[i].split()[1]); i += 1
    elements = np.array([[int(c) for c in text[i + j].split()] for j in range(m)],
                        dtype=np.int64)
    i += m
    crack = np.zeros(n, dtype=bool)
    parts = text[i].split()
    crack[[int(v) for v in parts[1:]]] = True
    i += 1
    outer = np.zeros(n, dtype=bool)
    parts = text[i].split()
    outer[[int(v) for v in parts[1:]]] = True
    return BallMesh(dim, radius, nodes, elements, crack, outer,
                    crack_facets=np.zeros((0, dim), dtype=np.int64),
                    locator=kdtree_locator(nodes, elements),
                    h_target=np.nan, grading=np.nan,
                    edge_width=lambda r: 0.0)


def write_field(path, field, mesh_path=None, config_hash=None):
    lines = ["cracklab-field v1"]
    if config_hash:
        lines.append(f"# config_hash: {config_hash}")
    lines.append(f"mesh {mesh_path or '-'}")
    coeff = field.coefficients
    lines.append(f"coefficients {len(coeff)}")
    for c in coeff:
        lines.append(FLOAT_FMT % c)
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path, mesh: BallMesh):
    from .solver import P1Field

    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "cracklab-field v1":
        raise ConstructionError(f"{path}: not a cracklab-field v1 file")
    i = 1
    while text[i].startswith("#"):
        i += 1
    i += 1  # mesh reference line
    n = int(text[i].split()[1]); i += 1
    coeff = np.array([float(text[i + j]) for j in range(n)])
    return P1Field(mesh, coeff)


def write_trace_csv(path, trace, config_hash=None):
    lines = []
    if config_hash:
        lines.append(f"# config_hash: {config_hash}")
    lines.append("r,H,D,N,pohozaev_residual")
    for row in trace.to_rows():
        lines.append(",".join(FLOAT_FMT % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, obj, config_hash=None):
    payload = dict(obj)
    if config_hash:
        payload["config_hash"] = config_hash
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_profile_csv(path, basis, k0, betas, angles_deg=None, config_hash=None):
    """Angular profile samples sum_m beta_m Y_{k0,m} along the slit angle."""
    import numpy as np

    t = np.linspace(0.0, 2.0 * np.pi, 181)
    if basis.N == 1:
        pts = np.column_stack([np.cos(t), np.sin(t)])
    else:
        pts = np.column_stack([np.zeros_like(t), np.cos(t), np.sin(t)])
    prof = np.zeros_like(t)
    for m, b in enumerate(betas, start=1):
        prof += b * np.atleast_1d(basis.evaluate(k0, m, pts))
    lines = []
    if config_hash:
        lines.append(f"# config_hash: {config_hash}")
    lines.append("t,profile")
    for ti, pi in zip(t, prof):
        lines.append(f"{FLOAT_FMT % ti},{FLOAT_FMT % pi}")
    Path(path).write_text("\n".join(lines) + "\n")
