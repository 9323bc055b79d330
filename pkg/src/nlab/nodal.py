"""Zero sets, sign components and the per-component transport statistics.

Flat fields use marching squares on the node lattice (periodic on the
torus) with saddle cells resolved by the sign of the cell-center average.
Sphere fields are resampled onto an icosphere and cut with marching
triangles.  Every nodal segment remembers the two mesh edges it crosses,
which is how its length is shared out to the adjacent sign components.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .domain import SPHERE, TORUS, Domain, ScalarField, great_circle, xyz_to_lonlat
from .errors import DegenerateComponentError, DegenerateFieldError
from .mesh import TriMesh, UnionFind, consecutive_labels, icosphere, level_for_spacing

ZERO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class NodalSet:
    """Piecewise-linear approximation of ``{f = 0}``.

    ``segments`` has shape ``(k, 2, 2)``: endpoint pairs in domain
    coordinates (``lon, lat`` on the sphere).  ``crossed`` holds, for each
    segment, the node ids of the two mesh edges it cuts, shape ``(k, 2, 2)``.
    """

    domain: Domain
    segments: np.ndarray
    lengths: np.ndarray
    crossed: np.ndarray

    @property
    def total_length(self) -> float:
        return float(np.sum(self.lengths))

    def __len__(self):
        return len(self.lengths)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "y1", "x2", "y2"])
            for (a, b) in self.segments:
                w.writerow([repr(float(a[0])), repr(float(a[1])), repr(float(b[0])), repr(float(b[1]))])

    def to_svg(self, field: ScalarField, path) -> None:
        from .report import render_nodal_svg

        render_nodal_svg(field, self, path)


@dataclass(frozen=True)
class ComponentStats:
    id: int
    sign: int
    area: float
    boundary_length: float
    excess_mass: float
    l1_mass: float


def signed_parts(f: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Positive and negative parts ``g = max(f, 0)``, ``h = -min(f, 0)``."""
    v = f.values
    return f.with_values(np.maximum(v, 0.0)), f.with_values(np.maximum(-v, 0.0))


def _hash_sign(idx: np.ndarray) -> np.ndarray:
    h = (idx.astype(np.uint64) * np.uint64(2654435761)) & np.uint64(0xFFFFFFFF)
    return np.where((h >> np.uint64(16)) & np.uint64(1), 1.0, -1.0)


def tiebreak(values: np.ndarray, tol: float = ZERO_TOL) -> np.ndarray:
    """Push near-zero samples off zero with a deterministic per-node sign."""
    flat = np.asarray(values, dtype=float).ravel().copy()
    vmax = float(np.max(np.abs(flat))) if flat.size else 0.0
    if vmax == 0.0:
        raise DegenerateFieldError("field vanishes identically; its zero set is two-dimensional")
    small = np.abs(flat) < tol * vmax
    if np.any(small):
        idx = np.flatnonzero(small)
        flat[idx] = _hash_sign(idx) * tol * vmax
    return flat.reshape(np.shape(values))


# --------------------------------------------------------------------------
# flat lattices


def _lattice_cells(shape, periodic):
    ny, nx = shape
    if periodic:
        jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
        ip, jp = (ii + 1) % nx, (jj + 1) % ny
    else:
        jj, ii = np.meshgrid(np.arange(ny - 1), np.arange(nx - 1), indexing="ij")
        ip, jp = ii + 1, jj + 1
    jj, ii, ip, jp = (a.ravel() for a in (jj, ii, ip, jp))
    corners = np.stack([jj * nx + ii, jj * nx + ip, jp * nx + ip, jp * nx + ii], axis=1)
    return jj, ii, corners


# corner offsets (dx, dy) in units of h, counter-clockwise from the origin corner
_OFFSETS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
_EDGE_CORNERS = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])


def _pair_edges(vals, s):
    """Edge pairs for every cell with a sign change: arrays (cell, edge_a, edge_b)."""
    crossed = s[:, _EDGE_CORNERS[:, 0]] != s[:, _EDGE_CORNERS[:, 1]]
    count = crossed.sum(axis=1)
    two = np.flatnonzero(count == 2)
    order = np.argsort(~crossed[two], axis=1, kind="stable")
    cells = [two]
    ea = [order[:, 0]]
    eb = [order[:, 1]]
    four = np.flatnonzero(count == 4)
    if len(four):
        center_pos = vals[four].sum(axis=1) > 0
        diag02 = s[four, 0]
        # cut off the corners whose sign differs from the center
        cut_13 = diag02 == center_pos
        for sel, pairs in ((cut_13, ((0, 1), (2, 3))), (~cut_13, ((3, 0), (1, 2)))):
            c = four[sel]
            for a, b in pairs:
                cells.append(c)
                ea.append(np.full(len(c), a))
                eb.append(np.full(len(c), b))
    return np.concatenate(cells), np.concatenate(ea), np.concatenate(eb)


def _nodal_lattice(f: ScalarField, tol: float) -> NodalSet:
    grid = f.grid
    dom = grid.domain
    periodic = dom.kind == TORUS
    h = grid.spacing
    vals_flat = tiebreak(f.values, tol).ravel()
    jj, ii, corners = _lattice_cells(grid.shape, periodic)
    cv = vals_flat[corners]
    s = cv > 0
    cell, ea, eb = _pair_edges(cv, s)
    if len(cell) == 0:
        empty = np.zeros((0, 2, 2))
        return NodalSet(dom, empty, np.zeros(0), np.zeros((0, 2, 2), dtype=np.int64))
    origin = np.stack([ii[cell] * h, jj[cell] * h], axis=1)

    def crossing(edge):
        a_loc = _EDGE_CORNERS[edge, 0]
        b_loc = _EDGE_CORNERS[edge, 1]
        va = cv[cell, a_loc]
        vb = cv[cell, b_loc]
        t = va / (va - vb)
        pa = _OFFSETS[a_loc]
        pb = _OFFSETS[b_loc]
        pt = origin + h * (pa + t[:, None] * (pb - pa))
        ids = np.stack([corners[cell, a_loc], corners[cell, b_loc]], axis=1)
        return pt, ids

    p1, id1 = crossing(ea)
    p2, id2 = crossing(eb)
    lengths = np.hypot(*(p2 - p1).T)
    segs = np.stack([p1, p2], axis=1)
    if periodic:
        segs = np.mod(segs, dom.side)
    order = np.lexsort((eb, ea, cell))
    return NodalSet(dom, segs[order], lengths[order], np.stack([id1, id2], axis=1)[order])


def contour_lattice(values: np.ndarray, h: float, tol: float = ZERO_TOL):
    """Zero contour of a non-periodic node array with spacing ``h``.

    Returns ``(p1, p2)``, segment endpoints in index units times ``h``
    (column coordinate first).
    """
    vals = tiebreak(values, tol).ravel()
    jj, ii, corners = _lattice_cells(values.shape, False)
    cv = vals[corners]
    cell, ea, eb = _pair_edges(cv, cv > 0)
    origin = np.stack([ii[cell] * h, jj[cell] * h], axis=1)
    out = []
    for edge in (ea, eb):
        a_loc = _EDGE_CORNERS[edge, 0]
        b_loc = _EDGE_CORNERS[edge, 1]
        va = cv[cell, a_loc]
        vb = cv[cell, b_loc]
        t = va / (va - vb)
        pa = _OFFSETS[a_loc]
        pb = _OFFSETS[b_loc]
        out.append(origin + h * (pa + t[:, None] * (pb - pa)))
    return out[0], out[1]


# --------------------------------------------------------------------------
# sphere


def _latlong_sampler(f: ScalarField):
    g = f.grid
    lat = g.y[:, 0]
    lon = g.x[0, :]
    v = f.values
    lat_ext = np.concatenate([[-np.pi / 2], lat, [np.pi / 2]])
    rows = np.vstack([np.full(v.shape[1], v[0].mean()), v, np.full(v.shape[1], v[-1].mean())])
    lon_ext = np.concatenate([lon, [2 * np.pi]])
    table = np.hstack([rows, rows[:, :1]])
    interp = RegularGridInterpolator((lat_ext, lon_ext), table, method="linear")

    def sample(lonlat):
        lonlat = np.asarray(lonlat, dtype=float)
        q = np.stack([lonlat[:, 1], np.mod(lonlat[:, 0], 2 * np.pi)], axis=1)
        return interp(q)

    return sample


def sphere_mesh_for(f: ScalarField, level: int | None = None) -> TriMesh:
    if level is None:
        level = level_for_spacing(0.5 * f.grid.spacing)
    return icosphere(level)


def resample_to_mesh(f: ScalarField, mesh: TriMesh) -> np.ndarray:
    """Interpolate a lat-long field onto the mesh vertices."""
    return _latlong_sampler(f)(xyz_to_lonlat(mesh.vertices))


def marching_triangles(mesh: TriMesh, values: np.ndarray, tol: float = ZERO_TOL):
    """Zero set of a piecewise-linear function on a spherical triangle mesh.

    Returns ``(p1, p2, lengths, crossed)`` with endpoints as unit vectors and
    great-circle segment lengths.
    """
    vals = tiebreak(values, tol)
    f = mesh.faces
    fv = vals[f]
    s = fv > 0
    edges_local = np.array([[0, 1], [1, 2], [2, 0]])
    crossed = s[:, edges_local[:, 0]] != s[:, edges_local[:, 1]]
    cut = np.flatnonzero(crossed.sum(axis=1) == 2)
    order = np.argsort(~crossed[cut], axis=1, kind="stable")
    pts, ids = [], []
    for k in (0, 1):
        e = order[:, k]
        a = edges_local[e, 0]
        b = edges_local[e, 1]
        va = fv[cut, a]
        vb = fv[cut, b]
        t = va / (va - vb)
        ia = f[cut, a]
        ib = f[cut, b]
        p = mesh.vertices[ia] + t[:, None] * (mesh.vertices[ib] - mesh.vertices[ia])
        pts.append(p / np.linalg.norm(p, axis=1)[:, None])
        ids.append(np.stack([ia, ib], axis=1))
    lengths = great_circle(pts[0], pts[1])
    return pts[0], pts[1], lengths, np.stack(ids, axis=1)


def _nodal_sphere(f: ScalarField, tol: float, mesh: TriMesh | None = None) -> NodalSet:
    mesh = mesh or sphere_mesh_for(f)
    vals = resample_to_mesh(f, mesh)
    if np.max(np.abs(f.values)) == 0.0:
        raise DegenerateFieldError("field vanishes identically; its zero set is two-dimensional")
    p1, p2, lengths, crossed = marching_triangles(mesh, vals, tol)
    segs = np.stack([xyz_to_lonlat(p1), xyz_to_lonlat(p2)], axis=1)
    return NodalSet(f.domain, segs, lengths, crossed)


def nodal_length(f: ScalarField, tol: float = ZERO_TOL) -> NodalSet:
    """Extract the zero set of ``f`` and measure its length.

    Parameters
    ----------
    f : ScalarField
        Field on a torus, square or sphere grid.
    tol : float
        Samples with ``|f| < tol * max|f|`` get a deterministic pseudo-random
        sign before contouring.
    """
    if f.domain.kind == SPHERE:
        return _nodal_sphere(f, tol)
    return _nodal_lattice(f, tol)


# --------------------------------------------------------------------------
# sign components


def _lattice_edges(shape, periodic):
    ny, nx = shape
    idx = np.arange(ny * nx).reshape(ny, nx)
    if periodic:
        pairs = [(idx, np.roll(idx, -1, axis=1)), (idx, np.roll(idx, -1, axis=0))]
    else:
        pairs = [(idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])]
    a = np.concatenate([p[0].ravel() for p in pairs])
    b = np.concatenate([p[1].ravel() for p in pairs])
    return a, b


def label_components(signs: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Connected components of equal sign along the edge list ``(a, b)``."""
    same = signs[a] == signs[b]
    uf = UnionFind(len(signs))
    uf.union_many(a[same], b[same])
    return consecutive_labels(uf.roots())


def _component_table(vals, weights, labels, nodal: NodalSet):
    k = int(labels.max()) + 1
    sign = np.zeros(k, dtype=int)
    sign[labels] = np.where(vals > 0, 1, -1)
    area = np.bincount(labels, weights=weights, minlength=k)
    mass = np.bincount(labels, weights=np.abs(vals) * weights, minlength=k)
    boundary = np.zeros(k)
    if len(nodal):
        half = np.repeat(nodal.lengths / 2, 2)
        ids = nodal.crossed.reshape(-1, 2)
        # each crossed edge has exactly one positive endpoint
        pos_first = vals[ids[:, 0]] > 0
        pos = np.where(pos_first, ids[:, 0], ids[:, 1])
        neg = np.where(pos_first, ids[:, 1], ids[:, 0])
        np.add.at(boundary, labels[pos], half)
        np.add.at(boundary, labels[neg], half)
    return [
        ComponentStats(int(i), int(sign[i]), float(area[i]), float(boundary[i]), float(mass[i]), float(mass[i]))
        for i in range(k)
    ]


def components(f: ScalarField, tol: float = ZERO_TOL) -> list[ComponentStats]:
    """Sign components of ``f`` with area, mass and nodal boundary length."""
    if np.max(np.abs(f.values)) == 0.0:
        return []
    if f.domain.kind == SPHERE:
        mesh = sphere_mesh_for(f)
        raw = resample_to_mesh(f, mesh)
        vals = tiebreak(raw, tol)
        p1, p2, lengths, crossed = marching_triangles(mesh, raw, tol)
        segs = np.stack([xyz_to_lonlat(p1), xyz_to_lonlat(p2)], axis=1)
        nodal = NodalSet(f.domain, segs, lengths, crossed)
        a, b = mesh.edges[:, 0], mesh.edges[:, 1]
        weights = mesh.vertex_areas
        raw_abs = raw
    else:
        vals = tiebreak(f.values, tol).ravel()
        nodal = _nodal_lattice(f, tol)
        a, b = _lattice_edges(f.grid.shape, f.domain.kind == TORUS)
        weights = f.grid.weights.ravel()
        raw_abs = f.values.ravel()
    labels = label_components(vals > 0, a, b)
    stats = _component_table(vals, weights, labels, nodal)
    # masses use the untouched samples, not the tie-broken ones
    mass = np.bincount(labels, weights=np.abs(raw_abs) * weights, minlength=len(stats))
    return [
        ComponentStats(s.id, s.sign, s.area, s.boundary_length, float(mass[s.id]), float(mass[s.id]))
        for s in stats
    ]


def proof_sum(stats, p: float) -> float:
    """``sum over positive components of delta^(p+1) / |boundary|^p``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    total = 0.0
    for s in stats:
        if s.sign <= 0:
            continue
        if not s.boundary_length > 0:
            raise DegenerateComponentError(f"component {s.id} has no measured nodal boundary")
        total += s.excess_mass ** (p + 1) / s.boundary_length**p
    return total


def component_labels(f: ScalarField, tol: float = ZERO_TOL) -> np.ndarray:
    """Component label per grid node (flat lattices only), shape of the grid."""
    vals = tiebreak(f.values, tol).ravel()
    a, b = _lattice_edges(f.grid.shape, f.domain.kind == TORUS)
    return label_components(vals > 0, a, b).reshape(f.grid.shape)
