"""Crack-conforming simplicial meshes of the ball.

d = 2: polar mesh of the disk with rings graded toward the origin (the
crack edge) and the crack along the positive x_N axis as a union of
element edges.

d = 3: a meridian half-disk mesh in (axis, cylinder-radius) coordinates,
graded in the polar angle toward the crack edge (the x' axis), revolved
around the edge into prisms/pyramids and split into tetrahedra with the
smallest-vertex rules so that faces match across elements.  The crack
{x_{N+1} = 0, x_N >= 0} is the meridian plane at revolve angle t = 0 and
is exactly a union of element facets.

Both constructions keep the structured (ring, angle[, sector]) indexing,
which gives O(1) point location for field evaluation.
"""

from __future__ import annotations

import numpy as np

from .errors import ConstructionError

TWO_PI = 2.0 * np.pi


def _power_grading(eta, beta):
    """Symmetric power grading of [0,1] clustering both ends for beta > 1."""
    eta = np.asarray(eta, dtype=float)
    lo = 0.5 * (2.0 * eta) ** beta
    hi = 1.0 - 0.5 * (2.0 * (1.0 - eta)) ** beta
    return np.where(eta <= 0.5, lo, hi)


def _power_grading_inverse(w, beta):
    w = np.asarray(w, dtype=float)
    lo = 0.5 * (2.0 * w) ** (1.0 / beta)
    hi = 1.0 - 0.5 * (2.0 * (1.0 - w)) ** (1.0 / beta)
    return np.where(w <= 0.5, lo, hi)


class BallMesh:
    """Simplicial mesh of the ball with crack-conforming facets.

    Attributes
    ----------
    dim : ambient dimension (2 or 3)
    nodes : (n, dim) vertex coordinates
    elements : (m, dim+1) vertex indices
    crack_nodes : boolean mask of nodes lying on the closed crack
    outer_nodes : boolean mask of nodes on the sphere |x| = radius
    crack_facets : (f, dim) indices of facets triangulating the crack
    """

    def __init__(self, dim, radius, nodes, elements, crack_nodes, outer_nodes,
                 crack_facets, locator, h_target, grading, edge_width):
        self.dim = dim
        self.radius = radius
        self.nodes = nodes
        self.elements = elements
        self.crack_nodes = crack_nodes
        self.outer_nodes = outer_nodes
        self.crack_facets = crack_facets
        self._locator = locator
        self.h_target = h_target
        self.grading = grading
        self._edge_width = edge_width
        self._setup_element_geometry()

    # -- geometry tables ------------------------------------------------------

    def _setup_element_geometry(self):
        nodes, elems = self.nodes, self.elements
        d = self.dim
        v0 = nodes[elems[:, 0]]
        edges = np.stack([nodes[elems[:, i + 1]] - v0 for i in range(d)], axis=2)
        det = np.linalg.det(edges)
        neg = det < 0.0
        if np.any(neg):
            elems[neg, d], elems[neg, d - 1] = (
                elems[neg, d - 1].copy(), elems[neg, d].copy())
            v0 = nodes[elems[:, 0]]
            edges = np.stack([nodes[elems[:, i + 1]] - v0 for i in range(d)], axis=2)
            det = np.linalg.det(edges)
        if np.any(det <= 0.0):
            worst = int(np.argmin(det))
            raise ConstructionError(
                f"degenerate element {worst} with signed measure {det[worst]:.3e}"
            )
        fact = 2.0 if d == 2 else 6.0
        self.volumes = det / fact
        self._v0 = v0
        self._inv_edges = np.linalg.inv(edges)
        # lambda_i = (E^-1 (x - v0))_i, so row i of E^-1 is grad lambda_{i+1}
        grads = self._inv_edges
        self.basis_gradients = np.concatenate(
            [-np.sum(grads, axis=1, keepdims=True), grads], axis=1
        )

    def barycentric(self, element_ids, points):
        """Barycentric coordinates of points w.r.t. given elements."""
        rel = points - self._v0[element_ids]
        lam = np.einsum("nij,nj->ni", self._inv_edges[element_ids], rel)
        lam0 = 1.0 - np.sum(lam, axis=1)
        return np.column_stack([lam0, lam])

    def locate(self, points, tol=1e-9):
        """Containing element and barycentric coordinates per point.

        Points outside the mesh get element -1 (callers decide whether
        that is an error or a zero-extension).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        found = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, self.dim + 1))
        candidates = self._locator(pts)
        pending = np.arange(n)
        for round_cands in candidates:
            if len(pending) == 0:
                break
            cand = round_cands[pending]
            ok_cand = cand >= 0
            idx = pending[ok_cand]
            if len(idx) == 0:
                continue
            lam = self.barycentric(cand[ok_cand], pts[idx])
            inside = np.min(lam, axis=1) >= -tol
            hit = idx[inside]
            found[hit] = cand[ok_cand][inside]
            bary[hit] = lam[inside]
            pending = np.setdiff1d(pending, hit, assume_unique=False)
        return found, bary

    # -- statistics -----------------------------------------------------------

    def quality(self):
        """Shape quality per element: normalized measure / longest edge.

        1 for the regular simplex, -> 0 for degenerate elements.
        """
        nodes, elems = self.nodes, self.elements
        d = self.dim
        L = np.zeros(len(elems))
        for i in range(d + 1):
            for j in range(i + 1, d + 1):
                e = np.linalg.norm(nodes[elems[:, i]] - nodes[elems[:, j]], axis=1)
                L = np.maximum(L, e)
        if d == 2:
            return self.volumes / (np.sqrt(3.0) / 4.0 * L**2)
        return self.volumes / (np.sqrt(2.0) / 12.0 * L**3)

    def local_width(self, r):
        """Local mesh width near the crack edge at distance r from 0."""
        return float(self._edge_width(r))

    def total_volume(self):
        return float(np.sum(self.volumes))

    def quadrature_points(self):
        """Interior quadrature rule of degree 2 on every element.

        Returns (points (m, q, d), weights (m, q)); nodes avoid element
        vertices so unbounded-at-a-point potentials stay finite.
        """
        elems, nodes = self.elements, self.nodes
        if self.dim == 2:
            bary = np.array([
                [0.5, 0.5, 0.0],
                [0.0, 0.5, 0.5],
                [0.5, 0.0, 0.5],
            ])
        else:
            a, b = 0.5854101966249685, 0.1381966011250105
            bary = np.array([
                [a, b, b, b],
                [b, a, b, b],
                [b, b, a, b],
                [b, b, b, a],
            ])
        pts = np.einsum("qi,mid->mqd", bary, nodes[elems])
        w = np.repeat(self.volumes[:, None] / bary.shape[0], bary.shape[0], axis=1)
        return pts, w


# -- d = 2 disk ----------------------------------------------------------------


def build_disk_mesh(radius, n_r=48, n_t=96, beta_g=2.0):
    """Graded polar mesh of the cracked disk.

    Rings r_i = radius * (i/n_r)^beta_g resolve the r^(1/2) singularity at
    the crack edge (the origin); the crack is the t = 0 ray, a union of
    element edges, carried by single nodes flagged for Dirichlet rows.
    """
    if beta_g < 1.0:
        raise ConstructionError("grading exponent must be >= 1")
    radii = radius * (np.arange(n_r + 1) / n_r) ** beta_g
    t = TWO_PI * np.arange(n_t) / n_t
    nodes = [np.zeros((1, 2))]
    for i in range(1, n_r + 1):
        ring = radii[i]
        nodes.append(np.column_stack([ring * np.cos(t), ring * np.sin(t)]))
    nodes = np.vstack(nodes)

    def nid(i, j):
        return 1 + (i - 1) * n_t + (j % n_t)

    elements = []
    cell_of = []
    for j in range(n_t):
        elements.append((0, nid(1, j), nid(1, j + 1)))
        cell_of.append((0, j, 0))
    for i in range(1, n_r):
        for j in range(n_t):
            a, b = nid(i, j), nid(i + 1, j)
            c, e = nid(i + 1, j + 1), nid(i, j + 1)
            elements.append((a, b, c))
            cell_of.append((i, j, 0))
            elements.append((a, c, e))
            cell_of.append((i, j, 1))
    elements = np.asarray(elements, dtype=np.int64)

    crack = np.zeros(len(nodes), dtype=bool)
    crack[0] = True
    for i in range(1, n_r + 1):
        crack[nid(i, 0)] = True
    outer = np.zeros(len(nodes), dtype=bool)
    for j in range(n_t):
        outer[nid(n_r, j)] = True

    crack_facets = np.array(
        [[0, nid(1, 0)]] + [[nid(i, 0), nid(i + 1, 0)] for i in range(1, n_r)],
        dtype=np.int64,
    )

    cell_index = {}
    for eid, key in enumerate(cell_of):
        cell_index.setdefault(key[:2], []).append(eid)
    cell_table = np.full((n_r, n_t, 2), -1, dtype=np.int64)
    for (i, j), eids in cell_index.items():
        for s, e in enumerate(eids):
            cell_table[i, j, s] = e

    def locator(pts):
        r = np.linalg.norm(pts, axis=1)
        rr = np.clip(r / radius, 0.0, 1.0 - 1e-12)
        i = np.clip((n_r * rr ** (1.0 / beta_g)).astype(np.int64), 0, n_r - 1)
        ang = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
        j = np.clip((ang / TWO_PI * n_t).astype(np.int64), 0, n_t - 1)
        rounds = []
        for di in (0, -1, 1):
            for dj in (0, -1, 1):
                ii = np.clip(i + di, 0, n_r - 1)
                jj = (j + dj) % n_t
                rounds.append(cell_table[ii, jj, 0])
                rounds.append(cell_table[ii, jj, 1])
        return rounds

    dr = np.diff(radii)

    def edge_width(r):
        i = np.clip(np.searchsorted(radii, r) - 1, 0, n_r - 1)
        return dr[i]

    mesh = BallMesh(2, radius, nodes, elements, crack, outer, crack_facets,
                    locator, h_target=beta_g * radius / n_r, grading=beta_g,
                    edge_width=edge_width)
    mesh.radial_knots = radii[1:]
    return mesh


# -- d = 3 ball ----------------------------------------------------------------


_PRISM_ROT = {
    0: (0, 1, 2, 3, 4, 5),
    1: (1, 2, 0, 4, 5, 3),
    2: (2, 0, 1, 5, 3, 4),
    3: (3, 5, 4, 0, 2, 1),
    4: (4, 3, 5, 1, 0, 2),
    5: (5, 4, 3, 2, 1, 0),
}


def _split_prism(v):
    """Split prism (bottom v0 v1 v2, top v3 v4 v5) into 3 tets.

    Smallest-vertex rule: every quad face is cut along the diagonal
    through its smallest global index, so neighbouring elements conform.
    """
    lo = int(np.argmin(v))
    I = [v[p] for p in _PRISM_ROT[lo]]
    if min(I[1], I[5]) < min(I[2], I[4]):
        return [(I[0], I[1], I[2], I[5]), (I[0], I[1], I[5], I[4]),
                (I[0], I[4], I[5], I[3])]
    return [(I[0], I[1], I[2], I[4]), (I[0], I[4], I[2], I[5]),
            (I[0], I[4], I[5], I[3])]


def _split_pyramid(apex, quad):
    """Split a pyramid over a cyclic quad, diagonal through the min vertex."""
    q = list(quad)
    lo = int(np.argmin(q))
    if lo in (0, 2):
        return [(apex, q[0], q[1], q[2]), (apex, q[0], q[2], q[3])]
    return [(apex, q[1], q[2], q[3]), (apex, q[1], q[3], q[0])]


def build_ball_mesh_3d(radius, n_R=24, n_phi=24, n_t=32, beta_g=2.0):
    """Graded tetrahedral mesh of the cracked ball in R^3.

    The meridian half-disk {(a, rho): a^2 + rho^2 < radius^2, rho >= 0}
    is gridded in polar coordinates (R, phi) with phi graded toward the
    crack edge (phi = 0 and pi), triangulated, and revolved in n_t
    sectors around the edge axis.  The crack is the t = 0 meridian copy.
    """
    if n_t % 2 != 0:
        n_t += 1
    if beta_g < 1.0:
        raise ConstructionError("grading exponent must be >= 1")
    R = radius * np.arange(n_R + 1) / n_R
    phi = np.pi * _power_grading(np.arange(n_phi + 1) / n_phi, beta_g)

    # meridian vertices with collapsed origin/axis
    ORIGIN = ("o",)
    mer_ids = {}
    mer_coord = []
    mer_axis = []

    def mer(i, j):
        if i == 0:
            key = ORIGIN
        elif j == 0:
            key = ("a+", i)
        elif j == n_phi:
            key = ("a-", i)
        else:
            key = (i, j)
        if key not in mer_ids:
            mer_ids[key] = len(mer_coord)
            if key == ORIGIN:
                mer_coord.append((0.0, 0.0))
                mer_axis.append(True)
            elif key[0] == "a+":
                mer_coord.append((R[key[1]], 0.0))
                mer_axis.append(True)
            elif key[0] == "a-":
                mer_coord.append((-R[key[1]], 0.0))
                mer_axis.append(True)
            else:
                mer_coord.append((R[i] * np.cos(phi[j]), R[i] * np.sin(phi[j])))
                mer_axis.append(False)
        return mer_ids[key]

    mer_tris = []
    mer_tri_cell = []
    for i in range(n_R):
        for j in range(n_phi):
            c00, c10 = mer(i, j), mer(i + 1, j)
            c11, c01 = mer(i + 1, j + 1), mer(i, j + 1)
            if i == 0:
                mer_tris.append((c00, c10, c11))
                mer_tri_cell.append((i, j))
            else:
                mer_tris.append((c00, c10, c11))
                mer_tri_cell.append((i, j))
                mer_tris.append((c00, c11, c01))
                mer_tri_cell.append((i, j))
    mer_coord = np.asarray(mer_coord)
    mer_axis = np.asarray(mer_axis)
    n_mer = len(mer_coord)

    # 3D vertices: axis meridian vertices are single, others revolve
    t_angles = TWO_PI * np.arange(n_t) / n_t
    node_id = np.full((n_mer, n_t), -1, dtype=np.int64)
    coords = []
    for m in range(n_mer):
        a, rho = mer_coord[m]
        if mer_axis[m]:
            nid = len(coords)
            coords.append((a, 0.0, 0.0))
            node_id[m, :] = nid
        else:
            for k in range(n_t):
                node_id[m, k] = len(coords)
                coords.append((a, rho * np.cos(t_angles[k]),
                               rho * np.sin(t_angles[k])))
    nodes = np.asarray(coords)

    elements = []
    cell_of = []
    for tri, cell in zip(mer_tris, mer_tri_cell):
        axis_flags = mer_axis[list(tri)]
        n_axis = int(np.sum(axis_flags))
        for k in range(n_t):
            k1 = (k + 1) % n_t
            if n_axis == 0:
                b = [node_id[m, k] for m in tri]
                tp = [node_id[m, k1] for m in tri]
                tets = _split_prism(b + tp)
            elif n_axis == 1:
                apex = tri[int(np.argmax(axis_flags))]
                others = [m for m in tri if not mer_axis[m]]
                bq, cq = others
                quad = (node_id[bq, k], node_id[cq, k],
                        node_id[cq, k1], node_id[bq, k1])
                tets = _split_pyramid(node_id[apex, 0], quad)
            elif n_axis == 2:
                ax = [m for m in tri if mer_axis[m]]
                off = [m for m in tri if not mer_axis[m]][0]
                tets = [(node_id[ax[0], 0], node_id[ax[1], 0],
                         node_id[off, k], node_id[off, k1])]
            else:
                continue
            for t_ in tets:
                if len(set(t_)) == 4:
                    elements.append(t_)
                    cell_of.append((cell[0], cell[1], k))
    elements = np.asarray(elements, dtype=np.int64)

    # crack facets: meridian triangles at t = 0
    crack_facets = np.asarray(
        [[node_id[m, 0] for m in tri] for tri in mer_tris], dtype=np.int64
    )
    crack = np.zeros(len(nodes), dtype=bool)
    crack[node_id[:, 0]] = True
    crack[node_id[mer_axis, 0]] = True
    outer = np.zeros(len(nodes), dtype=bool)
    for key, m in mer_ids.items():
        on_outer = (key != ORIGIN) and (
            (key[0] in ("a+", "a-") and key[1] == n_R)
            or (key[0] not in ("a+", "a-", "o") and key[0] == n_R)
        )
        if on_outer:
            outer[node_id[m]] = True

    cell_lists = {}
    for eid, cell in enumerate(cell_of):
        cell_lists.setdefault(cell, []).append(eid)
    max_per = max(len(v) for v in cell_lists.values())
    cell_table = np.full((n_R, n_phi, n_t, max_per), -1, dtype=np.int64)
    for (i, j, k), eids in cell_lists.items():
        cell_table[i, j, k, : len(eids)] = eids

    dphi = np.diff(phi)

    def locator(pts):
        r = np.linalg.norm(pts, axis=1)
        rr = np.clip(r / radius, 0.0, 1.0 - 1e-12)
        i = np.clip((n_R * rr).astype(np.int64), 0, n_R - 1)
        rho = np.hypot(pts[:, 1], pts[:, 2])
        ph = np.arctan2(rho, pts[:, 0])
        w = np.clip(ph / np.pi, 0.0, 1.0 - 1e-15)
        j = np.clip((n_phi * _power_grading_inverse(w, beta_g)).astype(np.int64),
                    0, n_phi - 1)
        ang = np.mod(np.arctan2(pts[:, 2], pts[:, 1]), TWO_PI)
        k = np.clip((ang / TWO_PI * n_t).astype(np.int64), 0, n_t - 1)
        rounds = []
        for di in (0, -1, 1):
            for dj in (0, -1, 1):
                for dk in (0, -1, 1):
                    ii = np.clip(i + di, 0, n_R - 1)
                    jj = np.clip(j + dj, 0, n_phi - 1)
                    kk = (k + dk) % n_t
                    for s in range(max_per):
                        rounds.append(cell_table[ii, jj, kk, s])
        return rounds

    def edge_width(r):
        return radius / n_R

    mesh = BallMesh(3, radius, nodes, elements, crack, outer, crack_facets,
                    locator, h_target=radius / n_R, grading=beta_g,
                    edge_width=edge_width)
    mesh.radial_knots = R[1:]
    return mesh


def build_mesh(dim, radius, beta_g=2.0, h=None, **counts):
    """Build the cracked-ball mesh from a target element size.

    Explicit counts (n_r/n_t for d=2, n_R/n_phi/n_t for d=3) override the
    size heuristic.
    """
    if dim == 2:
        n_r = counts.get("n_r") or max(8, int(np.ceil(beta_g * radius / h)))
        n_t = counts.get("n_t") or max(16, int(np.ceil(TWO_PI * radius / h)))
        mesh = build_disk_mesh(radius, n_r=n_r, n_t=n_t, beta_g=beta_g)
    elif dim == 3:
        n_R = counts.get("n_R") or max(6, int(np.ceil(radius / h)))
        n_phi = counts.get("n_phi") or max(8, int(np.ceil(np.pi * radius / h)))
        n_t = counts.get("n_t") or max(8, int(np.ceil(TWO_PI * radius / h)))
        mesh = build_ball_mesh_3d(radius, n_R=n_R, n_phi=n_phi, n_t=n_t,
                                  beta_g=beta_g)
    else:
        raise ConstructionError(f"solver meshes exist for d in {{2, 3}}, got {dim}")
    q = mesh.quality()
    if np.min(q) < 1e-4:
        worst = int(np.argmin(q))
        raise ConstructionError(
            f"element {worst} has quality {q[worst]:.2e} "
            f"(vertices {mesh.elements[worst]})"
        )
    return mesh


# -- smoothed approximating domain (d = 2) --------------------------------------


def _stitch_chains(lower_ids, lower_ang, upper_ids, upper_ang):
    """Triangulate the band between two angle-ordered node chains."""
    tris = []
    i = j = 0
    ni, nj = len(lower_ids) - 1, len(upper_ids) - 1
    while i < ni or j < nj:
        adv_lower = j == nj or (
            i < ni and lower_ang[i + 1] <= upper_ang[j + 1]
        )
        if adv_lower:
            tris.append((lower_ids[i], lower_ids[i + 1], upper_ids[j]))
            i += 1
        else:
            tris.append((lower_ids[i], upper_ids[j + 1], upper_ids[j]))
            j += 1
    return tris


def _cluster_map(tau):
    """Smoothstep clustering of [0,1] toward both ends."""
    return tau * tau * (3.0 - 2.0 * tau)


def kdtree_locator(nodes, elements, k_nearest=24):
    """Generic locator for unstructured meshes: nearest element centroids."""
    from scipy.spatial import cKDTree

    centroids = np.mean(nodes[elements], axis=1)
    tree = cKDTree(centroids)

    def locator(pts):
        k = min(k_nearest, len(elements))
        _, idx = tree.query(pts, k=k)
        if k == 1:
            idx = idx[:, None]
        return [idx[:, s] for s in range(k)]

    return locator


def build_smoothed_disk_mesh(domain, n_r=48, n_t=96):
    """Mesh of the smoothed domain (d = 2): disk minus the wedge x_N >= f_n.

    Rings below the cap apex f_n(0) = 1/n are full circles; above, arcs
    with endpoints on the cap curve x_N = f_n(x_{N+1}).  One ring passes
    exactly through the apex.  The cap nodes play the role of the
    Dirichlet-zero set and are reported in ``crack_nodes``.
    """
    from scipy.optimize import brentq

    n = domain.n
    r0 = domain.radius
    apex = domain.f(0.0)
    if apex >= r0:
        raise ConstructionError(
            f"smoothing index n={n} too small: the cap apex {apex:.3g} "
            f"swallows the domain of radius {r0}"
        )
    radii = list(r0 * np.arange(1, n_r + 1) / n_r)
    if not any(abs(r - apex) < 1e-12 for r in radii):
        radii.append(apex)
    radii = sorted(r for r in radii if r <= r0 + 1e-15)

    def crossing_angle(r):
        # smallest t > 0 with r cos t = f_n(r sin t)
        fun = lambda t: r * np.cos(t) - domain.f(r * np.sin(t))
        if fun(0.0) <= 0.0:
            return 0.0
        return brentq(fun, 0.0, 0.5 * np.pi, xtol=1e-14)

    nodes = [(0.0, 0.0)]
    chains = []
    for r in radii:
        at_apex = abs(r - apex) < 1e-12
        if r < apex - 1e-12 or at_apex:
            # full circle; at the apex ring the t = 0 node is the cap apex
            t = TWO_PI * np.arange(n_t) / n_t
            ids = []
            for tk in t:
                ids.append(len(nodes))
                nodes.append((r * np.cos(tk), r * np.sin(tk)))
            ids_closed = ids + [ids[0]]
            ang = np.concatenate([t, [TWO_PI]])
            chains.append({"ids": ids_closed, "ang": ang,
                           "cap": at_apex, "r": r})
        else:
            t0 = crossing_angle(r)
            tau = np.arange(n_t + 1) / n_t
            t = t0 + (TWO_PI - 2.0 * t0) * _cluster_map(tau)
            ids = []
            for tk in t:
                ids.append(len(nodes))
                nodes.append((r * np.cos(tk), r * np.sin(tk)))
            chains.append({"ids": ids, "ang": t, "cap": True, "r": r})

    elements = []
    first = chains[0]
    for m in range(len(first["ids"]) - 1):
        elements.append((0, first["ids"][m], first["ids"][m + 1]))
    for lo, hi in zip(chains[:-1], chains[1:]):
        elements.extend(
            _stitch_chains(lo["ids"], lo["ang"], hi["ids"], hi["ang"])
        )

    nodes = np.asarray(nodes)
    elements = np.asarray(
        [e for e in elements if len(set(e)) == 3], dtype=np.int64
    )

    cap_mask = np.zeros(len(nodes), dtype=bool)
    for ch in chains:
        if ch["cap"]:
            cap_mask[ch["ids"][0]] = True
            cap_mask[ch["ids"][-1]] = True
    outer_mask = np.zeros(len(nodes), dtype=bool)
    outer_angles = np.zeros(len(nodes))
    last = chains[-1]
    for nid, ang in zip(last["ids"], last["ang"]):
        outer_mask[nid] = True
        outer_angles[nid] = ang

    mesh = BallMesh(
        2, r0, nodes, elements, cap_mask, outer_mask,
        crack_facets=np.zeros((0, 2), dtype=np.int64),
        locator=kdtree_locator(nodes, elements),
        h_target=r0 / n_r, grading=1.0,
        edge_width=lambda r: r0 / n_r,
    )
    mesh.outer_angles = outer_angles
    return mesh
