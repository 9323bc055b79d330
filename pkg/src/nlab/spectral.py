"""Eigenbases of ``H = -div(a grad)``, projections and spectral heat flow.

Closed-form bases are available on every domain (Fourier products on the
torus, sine/cosine products on the square, real spherical harmonics on the
sphere).  Variable coefficients go through :func:`assemble_operator` and the
sparse eigensolver in :func:`lowest_eigenpairs`.

Mode numbers in the public API are 1-based, as in "f is orthogonal to the
first n eigenfunctions": a field built from modes ``n, n+1, ...`` has zero
inner product with modes ``1 .. n-1``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh
from scipy.special import sph_harm_y

from .domain import (
    DIRICHLET,
    NEUMANN,
    PERIODIC,
    SPHERE,
    SQUARE,
    TORUS,
    Domain,
    Grid,
    ScalarField,
    field_to_csv,
)
from .errors import (
    BandlimitWarning,
    ConvergenceError,
    EllipticityError,
    InsufficientBasisError,
    ResolutionTooCoarseError,
)

TAIL_ENERGY_LIMIT = 0.01


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Ordered eigenpairs sampled on a grid.

    ``functions[k]`` is the k-th eigenfunction (0-based storage) with
    eigenvalue ``eigenvalues[k]``; each has unit L2 norm under the grid
    quadrature.  ``labels`` name the modes (wave vectors, ``(l, m)`` pairs or
    solver indices).  Closed-form bases also carry ``evaluator``, which
    samples the same normalized functions at arbitrary points.
    """

    grid: Grid
    eigenvalues: np.ndarray
    functions: np.ndarray
    labels: tuple
    orthonormality_residual: float
    evaluator: Callable | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def domain(self) -> Domain:
        return self.grid.domain

    def eigenvalue(self, mode: int) -> float:
        """Eigenvalue of 1-based ``mode``."""
        return float(self.eigenvalues[mode - 1])

    def eigenfunction(self, mode: int) -> ScalarField:
        dirichlet = self.domain.kind == SQUARE and self.domain.bc == DIRICHLET
        return ScalarField(self.grid, self.functions[mode - 1], dirichlet=dirichlet)

    @property
    def eigenpairs(self):
        return [(float(lam), self.eigenfunction(k + 1)) for k, lam in enumerate(self.eigenvalues)]

    def coefficients(self, f: ScalarField, count: int | None = None) -> np.ndarray:
        """Inner products ``<f, phi_k>`` for the first ``count`` modes."""
        count = len(self) if count is None else count
        phi = self.functions[:count].reshape(count, -1)
        return phi @ (f.values * self.grid.weights).ravel()

    def synthesize(self, coeffs, start: int = 1) -> np.ndarray:
        """Values of ``sum_k coeffs[k] phi_{start+k}`` on the grid."""
        coeffs = np.asarray(coeffs, dtype=float)
        lo = start - 1
        phi = self.functions[lo : lo + len(coeffs)]
        return np.tensordot(coeffs, phi, axes=1)

    def evaluate(self, points, count: int | None = None) -> np.ndarray:
        """Mode values at arbitrary points, shape ``(count, len(points))``."""
        if self.evaluator is None:
            raise InsufficientBasisError("numerical bases can only be sampled on their grid")
        count = len(self) if count is None else count
        return self.evaluator(np.asarray(points, dtype=float).reshape(-1, 2), count)

    def export(self, directory) -> Path:
        """Write ``manifest.json`` plus one CSV per eigenfunction."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "domain": self.domain.to_dict(),
            "count": len(self),
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        width = len(str(len(self)))
        for k in range(len(self)):
            field_to_csv(self.eigenfunction(k + 1), directory / f"phi_{k + 1:0{width}d}.csv")
        return path


def _orthonormality_residual(functions: np.ndarray, weights: np.ndarray) -> float:
    phi = functions.reshape(len(functions), -1)
    gram = (phi * weights.ravel()) @ phi.T
    return float(np.max(np.abs(gram - np.eye(len(phi))))) if len(phi) else 0.0


# --------------------------------------------------------------------------
# closed-form bases


def _torus_modes(count: int, side: float):
    """First ``count`` real Fourier products, ordered by eigenvalue then label."""
    scale = (2 * math.pi / side) ** 2
    radius = max(2, int(math.ceil(math.sqrt(count / math.pi))) + 2)
    while True:
        modes = []
        for k1 in range(radius + 1):
            for k2 in range(radius + 1):
                if k1 * k1 + k2 * k2 > radius * radius:
                    continue
                for tx in ("1",) if k1 == 0 else ("c", "s"):
                    for ty in ("1",) if k2 == 0 else ("c", "s"):
                        modes.append((k1 * k1 + k2 * k2, k1, k2, tx, ty))
        modes.sort()
        if len(modes) >= count and modes[count - 1][0] < radius * radius:
            return [(m[0] * scale, m[1:]) for m in modes[:count]]
        radius *= 2


def _torus_eval(side: float, labels):
    w = 2 * math.pi / side
    table = {"1": lambda t: np.ones_like(t), "c": np.cos, "s": np.sin}

    def ev(x, y, k):
        k1, k2, tx, ty = labels[k]
        return table[tx](w * k1 * x) * table[ty](w * k2 * y)

    return ev


def _square_modes(count: int, bc: str):
    first = 1 if bc == DIRICHLET else 0
    radius = int(math.ceil(math.sqrt(4 * count / math.pi))) + 2
    while True:
        modes = sorted(
            (k1 * k1 + k2 * k2, k1, k2)
            for k1 in range(first, radius + 1)
            for k2 in range(first, radius + 1)
            if k1 * k1 + k2 * k2 <= radius * radius
        )
        if len(modes) >= count and modes[count - 1][0] < radius * radius:
            return [(m[0] * math.pi**2, m[1:]) for m in modes[:count]]
        radius *= 2


def _square_eval(bc: str, labels):
    fn = np.sin if bc == DIRICHLET else np.cos

    def ev(x, y, k):
        k1, k2 = labels[k]
        return fn(math.pi * k1 * x) * fn(math.pi * k2 * y)

    return ev


def _sphere_modes(count: int):
    out = []
    l = 0
    while len(out) < count:
        for m in range(-l, l + 1):
            out.append((float(l * (l + 1)), (l, m)))
        l += 1
    return out[:count]


def real_spherical_harmonic(l: int, m: int, lon, lat) -> np.ndarray:
    """Orthonormal real spherical harmonic ``Y_lm`` at ``(lon, lat)``."""
    theta = np.pi / 2 - np.asarray(lat, dtype=float)
    phi = np.asarray(lon, dtype=float)
    y = sph_harm_y(l, abs(m), theta, phi)
    if m == 0:
        return y.real
    sign = (-1) ** (m % 2)
    if m > 0:
        return math.sqrt(2) * sign * y.real
    return math.sqrt(2) * sign * y.imag


def _sphere_eval(labels):
    def ev(x, y, k):
        l, m = labels[k]
        return real_spherical_harmonic(l, m, x, y)

    return ev


def closed_form_eigenvalues(domain: Domain, count: int) -> np.ndarray:
    """First ``count`` Laplace eigenvalues of a closed-form domain, with multiplicity."""
    if domain.kind == TORUS:
        modes = _torus_modes(count, domain.side)
    elif domain.kind == SQUARE:
        modes = _square_modes(count, domain.bc)
    else:
        modes = _sphere_modes(count)
    return np.array([m[0] for m in modes])


def explicit_basis(grid: Grid, count: int) -> SpectralBasis:
    """Closed-form eigenbasis of the Laplacian on ``grid.domain``.

    Raises
    ------
    ResolutionTooCoarseError
        if a requested mode exceeds ``N/4`` oscillations per axis.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    dom = grid.domain
    n = grid.n
    if dom.kind == TORUS:
        modes = _torus_modes(count, dom.side)
        labels = tuple(m[1] for m in modes)
        top = max(max(k1, k2) for k1, k2, _, _ in labels)
        ev = _torus_eval(dom.side, labels)
    elif dom.kind == SQUARE:
        modes = _square_modes(count, dom.bc)
        labels = tuple(m[1] for m in modes)
        # sin(pi k x) on [0, 1] is k/2 full periods
        top = max(max(k1, k2) for k1, k2 in labels) / 2
        ev = _square_eval(dom.bc, labels)
    else:
        modes = _sphere_modes(count)
        labels = tuple(m[1] for m in modes)
        # latitude nodes cover half a great circle: N of them resolve degree N/2
        top = max(l for l, _ in labels) / 2
        ev = _sphere_eval(labels)
    if top > n / 4:
        raise ResolutionTooCoarseError(
            f"{count} modes need resolution N >= {int(math.ceil(4 * top))}, got N = {n}"
        )
    eigenvalues = np.array([m[0] for m in modes])
    funcs = np.empty((count, *grid.shape))
    for k in range(count):
        funcs[k] = ev(grid.x, grid.y, k)
    if dom.kind == SQUARE and dom.bc == DIRICHLET:
        funcs[:, grid.boundary_mask] = 0.0
    norms = np.sqrt(np.sum(funcs**2 * grid.weights, axis=(1, 2)))
    funcs /= norms[:, None, None]
    funcs.setflags(write=False)
    eigenvalues.setflags(write=False)

    def evaluator(points, cnt):
        out = np.empty((cnt, len(points)))
        for k in range(cnt):
            out[k] = ev(points[:, 0], points[:, 1], k) / norms[k]
        return out

    return SpectralBasis(
        grid, eigenvalues, funcs, labels, _orthonormality_residual(funcs, grid.weights), evaluator
    )


# --------------------------------------------------------------------------
# variable-coefficient operators


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """Finite-volume discretization of ``-div(a grad)``.

    The generalized eigenproblem is ``stiffness @ u = lam * mass * u`` on the
    free nodes (all nodes except Dirichlet boundary nodes).  ``stiffness`` is
    symmetric and ``mass`` holds the quadrature weights of the free nodes, so
    ``H = diag(mass)^-1 stiffness``.
    """

    coefficient: ScalarField
    bc: str
    stiffness: sp.csr_matrix
    mass: np.ndarray
    free: np.ndarray

    @property
    def a_min(self) -> float:
        return float(self.coefficient.values.min())

    @property
    def grid(self) -> Grid:
        return self.coefficient.grid

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``H u`` for a vector on the free nodes."""
        return (self.stiffness @ u) / self.mass


def _harmonic(a, b):
    return 2 * a * b / (a + b)


def assemble_operator(a: ScalarField, bc: str | None = None) -> EllipticOperator:
    """5-point stencil with harmonic-mean edge coefficients."""
    grid = a.grid
    dom = grid.domain
    if dom.kind == SPHERE:
        raise ValueError("variable-coefficient operators are only assembled on flat grids")
    bc = dom.bc if bc is None else bc
    if dom.kind == TORUS and bc != PERIODIC:
        raise ValueError("torus operators are periodic")
    if dom.kind == SQUARE and bc not in (DIRICHLET, NEUMANN):
        raise ValueError(f"unsupported boundary condition {bc!r}")
    av = a.values
    if not np.all(av > 0):
        raise EllipticityError(f"coefficient must be positive everywhere (min {av.min():.3g})")
    ny, nx = grid.shape
    idx = np.arange(ny * nx).reshape(ny, nx)
    rows, cols, cond = [], [], []
    if dom.kind == TORUS:
        for axis in (0, 1):
            nb = np.roll(idx, -1, axis=axis)
            anb = np.roll(av, -1, axis=axis)
            rows.append(idx.ravel())
            cols.append(nb.ravel())
            # conductance a * (dual edge length) / h with dual length = h
            cond.append(_harmonic(av, anb).ravel())
    else:
        for axis in (0, 1):
            sl_a = (slice(None), slice(None, -1)) if axis == 1 else (slice(None, -1), slice(None))
            sl_b = (slice(None), slice(1, None)) if axis == 1 else (slice(1, None), slice(None))
            c = _harmonic(av[sl_a], av[sl_b])
            # edges lying on the outer boundary own half a dual cell
            half = np.zeros_like(c, dtype=bool)
            if axis == 1:
                half[0, :] = half[-1, :] = True
            else:
                half[:, 0] = half[:, -1] = True
            c = np.where(half, c / 2, c)
            rows.append(idx[sl_a].ravel())
            cols.append(idx[sl_b].ravel())
            cond.append(c.ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(cond)
    n_all = ny * nx
    off = sp.coo_matrix((-w, (r, c)), shape=(n_all, n_all))
    off = off + off.T
    diag = -np.asarray(off.sum(axis=1)).ravel()
    K = (off + sp.diags(diag)).tocsr()
    mass = grid.weights.ravel().copy()
    if dom.kind == SQUARE and bc == DIRICHLET:
        free = np.flatnonzero(~grid.boundary_mask.ravel())
    else:
        free = np.arange(n_all)
    K = K[free][:, free].tocsr()
    mass = mass[free]
    mass.setflags(write=False)
    return EllipticOperator(a, bc, K, mass, free)


def _orthonormalize_clusters(lam, vecs, mass, rtol=1e-8):
    """M-orthonormalize eigenvectors inside clusters of equal eigenvalues."""
    scale = max(1.0, float(np.max(np.abs(lam))))
    start = 0
    k = len(lam)
    while start < k:
        stop = start + 1
        while stop < k and abs(lam[stop] - lam[start]) <= rtol * scale:
            stop += 1
        block = vecs[:, start:stop]
        q, _ = np.linalg.qr(np.sqrt(mass)[:, None] * block)
        vecs[:, start:stop] = q / np.sqrt(mass)[:, None]
        start = stop
    return vecs


def lowest_eigenpairs(op: EllipticOperator, count: int, tol: float = 1e-8, seed: int = 0) -> SpectralBasis:
    """Smallest eigenpairs by shift-invert Lanczos (ARPACK).

    ``tol`` bounds the residual ``||H phi - lam phi||_2`` relative to
    ``max(1, lam)``; pairs that miss it raise :class:`ConvergenceError`.
    """
    grid = op.grid
    if count < 1:
        raise ValueError("count must be at least 1")
    if count > 0.05 * grid.size:
        raise ValueError(f"count {count} exceeds 5% of the {grid.size} grid nodes")
    n_free = len(op.mass)
    M = sp.diags(op.mass)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n_free)
    # sigma below the spectrum keeps K - sigma M definite (Neumann/periodic K is singular)
    sigma = -1.0
    try:
        lam, vecs = eigsh(op.stiffness, k=count, M=M, sigma=sigma, which="LM", v0=v0, tol=0)
    except Exception as exc:  # ARPACK raises its own error types
        raise ConvergenceError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    vecs = vecs[:, order]
    vecs = _orthonormalize_clusters(lam, vecs, op.mass)
    # deterministic sign: largest-magnitude entry positive
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivots, np.arange(count)])
    vecs *= np.where(signs == 0, 1.0, signs)
    lam = np.maximum(lam, 0.0) if np.all(lam > -1e-9 * max(1.0, lam.max())) else lam

    resid = op.stiffness @ vecs - (op.mass[:, None] * vecs) * lam
    res_norm = np.sqrt(np.sum(resid**2 / op.mass[:, None], axis=0))
    limit = tol * np.maximum(1.0, np.abs(lam))
    if np.any(res_norm > limit):
        worst = float(np.max(res_norm / limit))
        raise ConvergenceError(f"eigenpair residual {worst:.3g}x above tolerance", residual=res_norm)

    funcs = np.zeros((count, grid.size))
    funcs[:, op.free] = vecs.T
    funcs = funcs.reshape(count, *grid.shape)
    funcs.setflags(write=False)
    lam = np.array(lam)
    lam.setflags(write=False)
    labels = tuple(range(1, count + 1))
    return SpectralBasis(grid, lam, funcs, labels, _orthonormality_residual(funcs, grid.weights))


# --------------------------------------------------------------------------
# operations on fields


def _check_grid(f: ScalarField, basis: SpectralBasis):
    if f.grid is not basis.grid and f.grid.shape != basis.grid.shape:
        raise ValueError("field and basis live on different grids")


def project_high(f: ScalarField, basis: SpectralBasis, n: int) -> ScalarField:
    """Remove the components of ``f`` along modes ``1 .. n-1``."""
    _check_grid(f, basis)
    if n < 1 or len(basis) < n:
        raise InsufficientBasisError(f"basis has {len(basis)} modes, need {n}")
    k = n - 1
    v = f.values
    if k == 0:
        return f
    # second sweep cleans up rounding left by the first
    for _ in range(2):
        c = basis.functions[:k].reshape(k, -1) @ (v * basis.grid.weights).ravel()
        v = v - basis.synthesize(c)
    return f.with_values(v)


def tail_energy(f: ScalarField, basis: SpectralBasis) -> float:
    """Squared L2 norm of the part of ``f`` outside the span of ``basis``."""
    c = basis.coefficients(f)
    total = float(np.sum(f.values**2 * f.grid.weights))
    return max(0.0, total - float(c @ c))


def heat_flow(f: ScalarField, basis: SpectralBasis, t: float) -> ScalarField:
    """``sum_k exp(-lam_k t) <f, phi_k> phi_k``.

    A :class:`BandlimitWarning` is emitted (and recorded in ``notes``) when
    more than 1% of the energy of ``f`` lies outside the basis.
    """
    if t < 0:
        raise ValueError("heat flow time must be nonnegative")
    _check_grid(f, basis)
    c = basis.coefficients(f)
    total = float(np.sum(f.values**2 * f.grid.weights))
    tail = max(0.0, total - float(c @ c))
    notes = ()
    if total > 0 and tail > TAIL_ENERGY_LIMIT * total:
        msg = f"bandlimit-exceeded: tail energy {tail / total:.2%} of ||f||^2"
        warnings.warn(msg, BandlimitWarning, stacklevel=2)
        notes = (msg,)
    vals = basis.synthesize(np.exp(-basis.eigenvalues * t) * c)
    return f.with_values(vals, notes=notes)


def random_high_frequency(basis: SpectralBasis, n: int, bandwidth: int, seed: int) -> ScalarField:
    """Unit-norm Gaussian combination of modes ``n .. n + bandwidth``."""
    if n < 1 or bandwidth < 0 or n + bandwidth > len(basis):
        raise InsufficientBasisError(
            f"modes {n}..{n + bandwidth} requested from a basis of {len(basis)}"
        )
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(bandwidth + 1)
    vals = basis.synthesize(coeffs, start=n)
    f = project_high(ScalarField(basis.grid, vals), basis, n)
    norm = math.sqrt(float(np.sum(f.values**2 * f.grid.weights)))
    dirichlet = basis.domain.kind == SQUARE and basis.domain.bc == DIRICHLET
    return ScalarField(basis.grid, f.values / norm, dirichlet=dirichlet)
