"""Wasserstein distances between discrete measures on a domain.

Three routes are provided and they are kept independent of each other:

* ``solve_exact`` solves the transportation linear program by network
  simplex (POT's ``emd``);
* ``solve_regularized`` runs log-domain Sinkhorn scaling with annealed
  regularization and reports the debiased Sinkhorn divergence;
* ``w1_dual_bound`` evaluates Kantorovich potentials and therefore only ever
  certifies a lower bound for ``W_1``.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .domain import SPHERE, Domain, ScalarField, pairwise_distance, xyz_to_lonlat
from .errors import (
    ConvergenceError,
    NotADensityError,
    UnbalancedMeasuresError,
    UseRegularizedSolverError,
)

for _backend in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

DEFAULT_CAP = 4096
DEFAULT_MAX_SUPPORT = 2048
BALANCE_TOL = 1e-6
PRUNE_REL = 1e-14


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite nonnegative combination of point masses on a domain."""

    domain: Domain
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = self.domain.check_points(np.asarray(self.support, dtype=float).reshape(-1, 2))
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(w) != len(pts):
            raise ValueError("support and weights have different lengths")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise NotADensityError("measure weights must be finite and nonnegative")
        object.__setattr__(self, "support", pts)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.weights)

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.domain, self.support, self.weights * c)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "weight"])
            for (a, b), m in zip(self.support, self.weights):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(m))])


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Optimal coupling in sparse form.

    ``pairs`` rows are ``(source index, target index)``; ``masses`` the moved
    mass along each pair.  ``potentials`` holds the Kantorovich dual vectors
    ``(u, v)`` for the cost ``dist**p`` in the units of the original masses.
    """

    p: float
    pairs: np.ndarray
    masses: np.ndarray
    dists: np.ndarray
    cost: float
    potentials: tuple | None = field(default=None)

    def marginals(self, n_src: int, n_dst: int):
        a = np.bincount(self.pairs[:, 0], weights=self.masses, minlength=n_src)
        b = np.bincount(self.pairs[:, 1], weights=self.masses, minlength=n_dst)
        return a, b

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["src_idx", "dst_idx", "mass", "dist"])
            for (i, j), m, d in zip(self.pairs, self.masses, self.dists):
                w.writerow([int(i), int(j), repr(float(m)), repr(float(d))])


# --------------------------------------------------------------------------
# fields to measures


def _block_reduce(arr, by, bx):
    ny, nx = arr.shape
    py, px = (-ny) % by, (-nx) % bx
    arr = np.pad(arr, ((0, py), (0, px)))
    return arr.reshape((ny + py) // by, by, (nx + px) // bx, bx).sum(axis=(1, 3))


def _aggregate(f: ScalarField, mass: np.ndarray, by: int, bx: int):
    g = f.grid
    m = _block_reduce(mass, by, bx)
    keep = m > 0
    if f.domain.kind == SPHERE:
        xyz = g.xyz
        c = np.stack([_block_reduce(mass * xyz[..., k], by, bx) for k in range(3)], axis=-1)[keep]
        c /= np.linalg.norm(c, axis=1)[:, None]
        pts = xyz_to_lonlat(c)
    else:
        # blocks start at index 0, so torus blocks never straddle the seam
        cx = _block_reduce(mass * g.x, by, bx)[keep] / m[keep]
        cy = _block_reduce(mass * g.y, by, bx)[keep] / m[keep]
        pts = np.stack([cx, cy], axis=1)
    return pts, m[keep]


def _spread(values, weights, by, bx):
    """Weighted within-block variance of the field values, summed over blocks."""
    w = _block_reduce(weights, by, bx)
    s1 = _block_reduce(weights * values, by, bx)
    s2 = _block_reduce(weights * values**2, by, bx)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(w > 0, s2 - s1**2 / w, 0.0)
    return float(np.sum(np.maximum(var, 0.0)))


def block_shape(f: ScalarField, max_support: int, max_side: int = 64) -> tuple[int, int]:
    """Block shape ``(by, bx)`` for aggregating ``f`` to at most ``max_support`` atoms.

    For every width ``bx`` the smallest feasible height ``by`` is found; among
    those shapes the one whose blocks hold the most nearly constant density
    wins (ties go to the smaller block).  Blocks therefore stretch along
    directions in which the density does not change, where merging nodes
    moves no mass relative to the other measure.
    """
    v = f.values
    w = f.grid.weights * (v > 0)

    def count(by, bx):
        return int(np.count_nonzero(_block_reduce(w, by, bx)))

    best = None
    for bx in range(1, max_side + 1):
        by = 1
        while by <= max_side and count(by, bx) > max_support:
            by += 1
        if by > max_side:
            continue
        key = (_spread(v, w, by, bx), by * bx, max(by, bx), by)
        if best is None or key < best[0]:
            best = (key, (by, bx))
    if best is None:
        raise UseRegularizedSolverError(f"cannot aggregate to {max_support} atoms with blocks up to {max_side}")
    return best[1]


def field_to_measure(f: ScalarField, max_support: int = DEFAULT_MAX_SUPPORT) -> DiscreteMeasure:
    """Turn a nonnegative field into node masses ``value * quadrature weight``.

    Node values below ``1e-14 * max`` are treated as zero.  When more than
    ``max_support`` nodes carry mass, rectangular blocks of nodes (see
    ``block_shape``) are merged into single atoms at their mass barycenter;
    total mass and block first moments are preserved.
    """
    v = f.values
    if np.any(v < 0):
        raise NotADensityError("field has negative values; split it with signed_parts first")
    vmax = float(v.max()) if v.size else 0.0
    v = np.where(v > PRUNE_REL * vmax, v, 0.0)
    mass = v * f.grid.weights
    if np.count_nonzero(mass) <= max_support:
        idx = np.flatnonzero(mass.ravel())
        return DiscreteMeasure(f.domain, f.grid.points[idx], mass.ravel()[idx])
    by, bx = block_shape(f.with_values(v), max_support)
    pts, w = _aggregate(f, mass, by, bx)
    return DiscreteMeasure(f.domain, pts, w)


# --------------------------------------------------------------------------
# exact solver


def _check_balance(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.domain != nu.domain:
        raise ValueError("measures live on different domains")
    a, b = mu.total_mass, nu.total_mass
    if a <= 0 or b <= 0:
        raise UnbalancedMeasuresError("measures must have positive mass")
    if abs(a - b) > BALANCE_TOL * a:
        raise UnbalancedMeasuresError(f"total masses differ: {a!r} vs {b!r}")
    return 0.5 * (a + b)


def _ot():
    import ot

    return ot


def solve_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 1.0, cap: int = DEFAULT_CAP) -> TransportPlan:
    """Exact ``W_p`` by network simplex on the bipartite transportation graph.

    Both measures are rescaled to probability vectors before solving and the
    result is scaled back by the mean total mass.  The ground cost is the
    geodesic distance of the domain raised to ``p``.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    mass = _check_balance(mu, nu)
    if len(mu) + len(nu) > cap:
        raise UseRegularizedSolverError(f"combined support {len(mu) + len(nu)} exceeds the exact-solver cap {cap}")
    d = pairwise_distance(mu.domain, mu.support, nu.support)
    cost = d**p
    scale = float(cost.max()) or 1.0
    a = mu.weights / mu.total_mass
    b = nu.weights / nu.total_mass
    b = b * (a.sum() / b.sum())
    # lattice-ordered inputs make the simplex pivot through long runs of ties;
    # a fixed shuffle avoids that and is undone afterwards
    rng = np.random.default_rng(0)
    pa, pb = rng.permutation(len(a)), rng.permutation(len(b))
    ot = _ot()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        gamma_s, log = ot.emd(a[pa], b[pb], cost[np.ix_(pa, pb)] / scale, numItermax=10_000_000, log=True)
    gamma = np.empty_like(gamma_s)
    gamma[np.ix_(pa, pb)] = gamma_s
    u_s, v_s = np.asarray(log["u"]), np.asarray(log["v"])
    log["u"] = np.empty_like(u_s)
    log["u"][pa] = u_s
    log["v"] = np.empty_like(v_s)
    log["v"][pb] = v_s
    msgs = [str(w.message) for w in caught if "numItermax" in str(w.message) or "infeasible" in str(w.message).lower()]
    if msgs or log.get("warning"):
        raise ConvergenceError("network simplex did not reach optimality: " + "; ".join(msgs or [str(log["warning"])]))
    i, j = np.nonzero(gamma > 0)
    moved = gamma[i, j] * mass
    total = float(np.sum(moved * cost[i, j]))
    u = np.asarray(log["u"]) * scale
    v = np.asarray(log["v"]) * scale
    return TransportPlan(
        p=float(p),
        pairs=np.stack([i, j], axis=1),
        masses=moved,
        dists=d[i, j],
        cost=max(total, 0.0) ** (1.0 / p),
        potentials=(u, v),
    )


# --------------------------------------------------------------------------
# entropic solver


def _sinkhorn(loga, logb, cost, eps_final, max_iter, tol, symmetric=False):
    """Log-domain Sinkhorn with eps annealing.  Returns (value, residual, iters)."""
    f = np.zeros(len(loga))
    g = np.zeros(len(logb))
    eps = max(float(cost.max()), eps_final)
    it = 0
    a = np.exp(loga)
    while True:
        last = eps <= eps_final
        inner = max_iter - it if last else 10
        for _ in range(inner):
            it += 1
            f_new = -eps * logsumexp((g[None, :] - cost) / eps + logb[None, :], axis=1)
            if symmetric:
                f = 0.5 * (f + f_new)
                g = f
            else:
                f = f_new
                g = -eps * logsumexp((f[:, None] - cost) / eps + loga[:, None], axis=0)
            if last and it % 10 == 0:
                row = np.exp(logsumexp((f[:, None] + g[None, :] - cost) / eps + logb[None, :], axis=1) + loga)
                res = float(np.sum(np.abs(row - a)))
                if res < tol:
                    return float(np.dot(a, f) + np.dot(np.exp(logb), g)), res, it
        if last:
            row = np.exp(logsumexp((f[:, None] + g[None, :] - cost) / eps + logb[None, :], axis=1) + loga)
            res = float(np.sum(np.abs(row - a)))
            raise ConvergenceError(f"Sinkhorn stopped after {it} iterations with marginal residual {res:.3e}", residual=res)
        eps = max(eps / 2, eps_final)


def solve_regularized(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    p: float = 1.0,
    reg: float = 1e-2,
    max_iter: int = 5000,
    tol: float = 1e-6,
) -> tuple[float, float]:
    """Debiased entropic estimate of ``W_p``.

    Regularization starts at the largest cost entry and is halved down to
    ``reg`` (in units of ``dist**p``).  Returns ``(cost, residual)`` where the
    residual is the worst L1 marginal violation of the three Sinkhorn runs
    relative to unit mass.
    """
    if reg <= 0:
        raise ValueError("reg must be positive")
    if p < 1:
        raise ValueError("p must be at least 1")
    mass = _check_balance(mu, nu)
    loga = np.log(mu.weights / mu.total_mass)
    logb = np.log(nu.weights / nu.total_mass)
    dom = mu.domain
    cxy = pairwise_distance(dom, mu.support, nu.support) ** p
    cxx = pairwise_distance(dom, mu.support, mu.support) ** p
    cyy = pairwise_distance(dom, nu.support, nu.support) ** p
    ab, r1, _ = _sinkhorn(loga, logb, cxy, reg, max_iter, tol)
    aa, r2, _ = _sinkhorn(loga, loga, cxx, reg, max_iter, tol, symmetric=True)
    bb, r3, _ = _sinkhorn(logb, logb, cyy, reg, max_iter, tol, symmetric=True)
    div = max(ab - 0.5 * (aa + bb), 0.0)
    return (mass * div) ** (1.0 / p), max(r1, r2, r3)


# --------------------------------------------------------------------------
# dual certificate


def _anchor_indices(k: int, count: int) -> np.ndarray:
    if k <= count:
        return np.arange(k)
    return np.unique(np.linspace(0, k - 1, count).round().astype(int))


def w1_dual_bound(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    plan: TransportPlan | None = None,
    anchors: int = 64,
    cap: int = DEFAULT_CAP,
) -> float:
    """Lower bound for ``W_1`` from explicit 1-Lipschitz test functions.

    Candidates are ``+-dist(., z)`` for anchor points ``z`` taken from both
    supports, and, when a ``p = 1`` plan is available (or can be computed
    under ``cap``), the c-transform ``phi(z) = min_j dist(z, y_j) - v_j`` of
    the solver's dual vector.  The c-transform is 1-Lipschitz for any ``v``,
    so every candidate yields a valid bound whatever the solver returned.
    """
    mass = _check_balance(mu, nu)
    a = mu.weights / mu.total_mass * mass
    b = nu.weights / nu.total_mass * mass
    dom = mu.domain
    pts = np.concatenate([mu.support, nu.support])
    best = 0.0
    idx = _anchor_indices(len(pts), anchors)
    dmu = pairwise_distance(dom, mu.support, pts[idx])
    dnu = pairwise_distance(dom, nu.support, pts[idx])
    vals = a @ dmu - b @ dnu
    best = max(best, float(np.max(np.abs(vals))))
    if plan is None and len(mu) + len(nu) <= cap:
        plan = solve_exact(mu, nu, 1.0, cap=cap)
    if plan is not None and plan.p == 1.0 and plan.potentials is not None:
        v = plan.potentials[1]
        phi_mu = np.min(pairwise_distance(dom, mu.support, nu.support) - v[None, :], axis=1)
        phi_nu = np.min(pairwise_distance(dom, nu.support, nu.support) - v[None, :], axis=1)
        best = max(best, float(a @ phi_mu - b @ phi_nu))
    return best

