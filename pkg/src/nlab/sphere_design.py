"""Heat-smoothed signed point measures on the sphere.

For points ``x_1 .. x_n`` the signed measure ``sum_k delta_{x_k} - n / (4 pi)``
is run through the heat flow for time ``t``.  Degree by degree this is

    f_t(x) = sum_{l >= 1} exp(-l (l + 1) t) (2 l + 1) / (4 pi) sum_k P_l(x . x_k),

the addition theorem applied to ``sum_m Y_lm(x) Y_lm(x_k)``.  For small ``t``
each point carries a narrow bump of height about ``1 / (4 pi t)`` over the
constant background ``-n / (4 pi)``, and the zero set is one small closed
curve per point.  Those curves are measured on a fine local chart around
every point; larger times fall back to a global icosphere.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .domain import ScalarField, great_circle, lonlat_to_xyz, xyz_to_lonlat
from .errors import InsufficientDataError, InvalidCountError, ResolutionTooCoarseError
from .mesh import icosphere, level_for_spacing
from .nodal import contour_lattice, marching_triangles
from .spectral import SpectralBasis, real_spherical_harmonic

GOLDEN_ANGLE = math.pi * (3 - math.sqrt(5))
BANDLIMIT_TOL = 1e-6
DESIGN_DEGREE = 60
# exp(-gamma^2 / 4t) at gamma^2 = 147 t is below 1e-15
CUTOFF_FACTOR = 147.0


@dataclass(frozen=True, eq=False)
class DesignPointSet:
    """Point set with its separation and per-degree design residuals.

    ``residuals[l]`` is ``max_m |mean_k Y_lm(x_k)|`` over the orthonormal
    real harmonics of degree ``l``; the sphere average of ``Y_lm`` is zero for
    ``l >= 1``, and the ``l = 0`` entry is zero by construction.
    """

    n: int
    points: np.ndarray
    min_separation: float
    residuals: np.ndarray

    @property
    def lonlat(self) -> np.ndarray:
        return xyz_to_lonlat(self.points)

    def residual(self, l: int) -> float:
        return float(self.residuals[l])


def min_separation(points: np.ndarray) -> float:
    """Smallest great-circle distance between distinct points (exact)."""
    tree = cKDTree(points)
    d, idx = tree.query(points, k=2)
    i = np.argmin(d[:, 1])
    return float(great_circle(points[i], points[idx[i, 1]]))


def nearest_neighbor_angles(points: np.ndarray) -> np.ndarray:
    tree = cKDTree(points)
    _, idx = tree.query(points, k=2)
    return great_circle(points, points[idx[:, 1]])


def design_residuals(points: np.ndarray, degree: int = DESIGN_DEGREE) -> np.ndarray:
    """``max_m |mean_k Y_lm(x_k)|`` for ``l = 0 .. degree``."""
    ll = xyz_to_lonlat(points)
    out = np.zeros(degree + 1)
    for l in range(1, degree + 1):
        out[l] = max(
            abs(float(np.mean(real_spherical_harmonic(l, m, ll[:, 0], ll[:, 1])))) for m in range(-l, l + 1)
        )
    return out


def fibonacci_points(n: int, degree: int = DESIGN_DEGREE) -> DesignPointSet:
    """Golden-angle spiral with ``z_i = 1 - 2 i / (n - 1)``, endpoints at the poles."""
    if n < 2:
        raise InvalidCountError("need at least two points")
    i = np.arange(n)
    z = 1 - 2 * i / (n - 1)
    r = np.sqrt(np.clip(1 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts.setflags(write=False)
    return DesignPointSet(n, pts, min_separation(pts), design_residuals(pts, degree))


# --------------------------------------------------------------------------
# zonal heat kernel


def heat_degree(t: float, tol: float = BANDLIMIT_TOL) -> int:
    """Smallest ``L`` with ``exp(-L (L + 1) t) <= tol``."""
    if not t > 0:
        raise ValueError("t must be positive")
    need = math.log(1 / tol) / t
    L = int(math.ceil((-1 + math.sqrt(1 + 4 * need)) / 2))
    while L * (L + 1) < need:
        L += 1
    return L


def legendre_series(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``sum_l coeffs[l] P_l(x)`` by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    out = coeffs[0] * p_prev
    if len(coeffs) == 1:
        return out
    p = x.copy()
    out = out + coeffs[1] * p
    for l in range(1, len(coeffs) - 1):
        p_next = ((2 * l + 1) * x * p - l * p_prev) / (l + 1)
        out += coeffs[l + 1] * p_next
        p_prev, p = p, p_next
    return out


def heat_coefficients(t: float, L: int, with_constant: bool = True) -> np.ndarray:
    l = np.arange(L + 1)
    c = (2 * l + 1) / (4 * math.pi) * np.exp(-l * (l + 1) * t)
    if not with_constant:
        c[0] = 0.0
    return c


@dataclass(frozen=True, eq=False)
class ZonalHeatKernel:
    """Degree-truncated heat kernel ``K_t(gamma)`` on the unit sphere.

    Values on ``[0, cutoff]`` come from a cubic spline through a fine table
    of the Legendre series; beyond ``cutoff`` the kernel is below
    ``1e-15 K_t(0)`` and is returned as zero.
    """

    t: float
    degree: int
    cutoff: float
    spline: CubicSpline = field(repr=False)

    @classmethod
    def build(cls, t: float, degree: int | None = None, samples: int = 4001) -> "ZonalHeatKernel":
        L = heat_degree(t) if degree is None else int(degree)
        cutoff = min(math.pi, math.sqrt(CUTOFF_FACTOR * t))
        gam = np.linspace(0.0, cutoff, samples)
        vals = legendre_series(heat_coefficients(t, L), np.cos(gam))
        return cls(t, L, cutoff, CubicSpline(gam, vals))

    def __call__(self, gamma) -> np.ndarray:
        g = np.asarray(gamma, dtype=float)
        out = np.zeros_like(g)
        inside = g <= self.cutoff
        out[inside] = self.spline(g[inside])
        return out

    @property
    def peak(self) -> float:
        return float(self.spline(0.0))

    def total_mass(self) -> float:
        """``2 pi int_{-1}^{1} K(mu) d mu`` by Gauss-Legendre, exact for the series."""
        mu, w = np.polynomial.legendre.leggauss(self.degree // 2 + 2)
        vals = legendre_series(heat_coefficients(self.t, self.degree), mu)
        return float(2 * math.pi * np.dot(w, vals))


# --------------------------------------------------------------------------
# the smoothed measure as a grid field


def design_measure_field(pts: DesignPointSet, t: float, basis: SpectralBasis) -> ScalarField:
    """``f_t = sum_{l >= 1} exp(-l (l+1) t) sum_m (sum_k Y_lm(x_k)) Y_lm`` on the basis grid.

    Raises
    ------
    ResolutionTooCoarseError
        if the top complete degree ``L`` of the basis has
        ``exp(-L (L+1) t) > 1e-6``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if basis.domain.kind != "sphere":
        raise ValueError("design measures live on the sphere")
    L = int(math.isqrt(len(basis))) - 1
    if math.exp(-L * (L + 1) * t) > BANDLIMIT_TOL:
        raise ResolutionTooCoarseError(
            f"basis stops at degree {L}; t = {t:g} needs degree {heat_degree(t)}"
        )
    count = (L + 1) ** 2
    sums = basis.evaluate(pts.lonlat, count).sum(axis=1)
    decay = np.exp(-basis.eigenvalues[:count] * t)
    coeffs = sums * decay
    coeffs[0] = 0.0
    return ScalarField(basis.grid, basis.synthesize(coeffs))


def zonal_field_values(pts: DesignPointSet, t: float, lonlat: np.ndarray, degree: int) -> np.ndarray:
    """Direct Legendre-series evaluation of ``f_t`` at arbitrary points."""
    x = lonlat_to_xyz(lonlat)
    c = heat_coefficients(t, degree, with_constant=False)
    return legendre_series(c, np.clip(x @ pts.points.T, -1.0, 1.0)).sum(axis=1)


# --------------------------------------------------------------------------
# measurements


def _tangent_frame(c):
    a = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - np.dot(a, c) * c
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    return e1, e2


def _exp_map(c, e1, e2, u, v):
    r = np.hypot(u, v)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(r > 0, np.sin(r) / r, 1.0)
    return np.cos(r)[..., None] * c + (s * u)[..., None] * e1 + (s * v)[..., None] * e2


def _bump_radius(n: int, t: float) -> float:
    """Radius where an isolated Gaussian bump meets the background ``-n/(4 pi)``."""
    arg = 1.0 / (n * t)
    return math.sqrt(4 * t * math.log(arg)) if arg > math.e else math.sqrt(4 * t)


@dataclass(frozen=True)
class BumpMeasurement:
    n: int
    t: float
    h1_length: float
    l1: float
    linf: float
    integral: float
    kernel_mass: float
    method: str
    segments: np.ndarray | None = field(default=None, repr=False)


def _field_at(x, kernel, pts, background):
    """``f_t`` at many unit vectors ``x`` of shape ``(m, 3)``."""
    out = np.full(len(x), background)
    tree = cKDTree(x)
    chord = 2 * math.sin(min(kernel.cutoff, math.pi) / 2) + 1e-12
    for j, idx in enumerate(tree.query_ball_point(pts, chord)):
        if idx:
            idx = np.asarray(idx)
            out[idx] += kernel(great_circle(x[idx], pts[j]))
    return out


def _field_near(x, kernel, pts, idx, background):
    """``f_t`` at chart points using only the point set ``idx``."""
    out = np.full(x.shape[:-1], background)
    for j in idx:
        out += kernel(great_circle(x, pts[j]))
    return out


def measure_bumps(
    pts: DesignPointSet,
    t: float,
    cells: int = 40,
    kernel: ZonalHeatKernel | None = None,
    keep_segments: bool = False,
) -> BumpMeasurement:
    """Nodal length and norms of ``f_t`` from per-point local charts.

    Around each point a square exponential-map chart of half-width
    ``min(0.45 * nearest-neighbor angle, kernel cutoff)`` is sampled with
    spacing ``rho / cells``, where ``rho`` is the predicted zero-level radius
    of an isolated bump.  The chart ring must be negative, which certifies
    that the closed nodal curve around the point lies inside the chart.

    Raises
    ------
    ResolutionTooCoarseError
        if some chart ring is not strictly negative (bumps merge).
    """
    kernel = kernel or ZonalHeatKernel.build(t)
    P = pts.points
    n = pts.n
    background = -n / (4 * math.pi)
    nn = nearest_neighbor_angles(P)
    tree = cKDTree(P)
    h = _bump_radius(n, t) / cells
    total_len = 0.0
    pos_mass = 0.0
    chart_integral = 0.0
    chart_area = 0.0
    peak = 0.0
    kept = []
    for k in range(n):
        c = P[k]
        R = min(0.45 * float(nn[k]), kernel.cutoff)
        m = int(math.ceil(R / h))
        ax = np.arange(-m, m + 1) * h
        U, V = np.meshgrid(ax, ax)
        X = _exp_map(c, *_tangent_frame(c), U, V)
        chord = 2 * math.sin(min(math.pi, R * 1.5 + kernel.cutoff) / 2)
        near = tree.query_ball_point(c, chord)
        vals = _field_near(X, kernel, P, near, background)
        ring = np.concatenate([vals[0], vals[-1], vals[:, 0], vals[:, -1]])
        if not np.all(ring < 0):
            raise ResolutionTooCoarseError(f"zero set around point {k} leaves its chart at t = {t:g}")
        p1, p2 = contour_lattice(vals, h)
        e1, e2 = _tangent_frame(c)
        a = _exp_map(c, e1, e2, p1[:, 0] - m * h, p1[:, 1] - m * h)
        b = _exp_map(c, e1, e2, p2[:, 0] - m * h, p2[:, 1] - m * h)
        total_len += float(np.sum(great_circle(a, b)))
        if keep_segments:
            kept.append(np.stack([xyz_to_lonlat(a), xyz_to_lonlat(b)], axis=1))
        r = np.hypot(U, V)
        jac = np.where(r > 0, np.sin(r) / np.where(r > 0, r, 1.0), 1.0)
        pos_mass += float(np.sum(np.maximum(vals, 0.0) * jac)) * h * h
        chart_integral += float(np.sum(vals * jac)) * h * h
        chart_area += float(np.sum(jac)) * h * h
        peak = max(peak, float(_field_near(c[None, :], kernel, P, near, background)[0]))
    # the positive part lives inside the charts and int f_t = 0, so ||f||_1 = 2 int f^+
    l1 = 2 * pos_mass
    # outside the charts f_t equals the background to within 1e-15 of the peak
    integral = chart_integral + background * (4 * math.pi - chart_area)
    mass = kernel.total_mass()
    linf = max(peak, abs(background))
    segs = np.concatenate(kept) if kept else None
    return BumpMeasurement(n, t, total_len, l1, linf, integral, mass, "charts", segs)


def measure_global(pts: DesignPointSet, t: float, level: int | None = None, kernel: ZonalHeatKernel | None = None) -> BumpMeasurement:
    """Same quantities from one icosphere evaluation, for times where charts overlap."""
    kernel = kernel or ZonalHeatKernel.build(t)
    if level is None:
        level = min(8, level_for_spacing(_bump_radius(pts.n, t) / 8))
    mesh = icosphere(level)
    P = pts.points
    background = -pts.n / (4 * math.pi)
    vals = _field_at(mesh.vertices, kernel, P, background)
    p1, p2, lengths, _ = marching_triangles(mesh, vals)
    segs = np.stack([xyz_to_lonlat(p1), xyz_to_lonlat(p2)], axis=1)
    peak = max(float(_field_at(P, kernel, P, background).max()), abs(background))
    l1 = float(np.sum(np.abs(vals) * mesh.vertex_areas))
    integral = float(np.sum(vals * mesh.vertex_areas))
    return BumpMeasurement(pts.n, t, float(np.sum(lengths)), l1, peak, integral, kernel.total_mass(), f"icosphere{level}", segs)


def measure(pts: DesignPointSet, t: float, cells: int = 40, keep_segments: bool = False) -> BumpMeasurement:
    """Chart measurement when the bumps are isolated, icosphere otherwise."""
    kernel = ZonalHeatKernel.build(t)
    try:
        return measure_bumps(pts, t, cells=cells, kernel=kernel, keep_segments=keep_segments)
    except ResolutionTooCoarseError:
        return measure_global(pts, t, kernel=kernel)


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    n: int
    t: float
    h1_length: float
    l1: float
    linf: float
    in_regime: bool
    integral: float = 0.0


@dataclass(frozen=True)
class PropositionReport:
    rows: tuple
    h1_slope: float
    l1_slope: float
    linf_slope: float
    regime_edge: float
    regime_c: float
    design_residual: float

    def to_dict(self) -> dict:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "h1_slope": self.h1_slope,
            "l1_slope": self.l1_slope,
            "linf_slope": self.linf_slope,
            "regime_edge": self.regime_edge,
            "regime_c": self.regime_c,
            "design_residual": self.design_residual,
        }


def loglog_slope(x, y) -> float:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def proposition_sweep(
    n: int,
    t_values,
    basis: SpectralBasis | None = None,
    c: float = 4.0,
    cells: int = 40,
    design_degree: int = DESIGN_DEGREE,
    pts: DesignPointSet | None = None,
) -> PropositionReport:
    """Measure ``H1(f_t = 0)``, ``||f_t||_1`` and ``||f_t||_inf`` over ``t``.

    Rows with ``t > 1 / (c n)`` are flagged out of regime and left out of the
    log-log fits.  ``regime_edge`` is the largest ``t`` up to which every
    consecutive-pair slope of ``H1`` stays within ``0.5 +- 0.1``.  When a
    spherical-harmonic ``basis`` is given, times whose heat degree it covers
    are also synthesized on its grid and their mean is folded into
    ``integral``.
    """
    t_values = sorted(float(t) for t in t_values)
    if len(t_values) < 2 or t_values[-1] / t_values[0] < 10 * (1 - 1e-9):
        raise InsufficientDataError("t values must span at least one decade")
    pts = pts or fibonacci_points(n, design_degree)
    rows = []
    for t in t_values:
        meas = measure(pts, t, cells=cells)
        integral = meas.integral
        if basis is not None and heat_degree(t) <= math.isqrt(len(basis)) - 1:
            f = design_measure_field(pts, t, basis)
            integral = float(np.sum(f.values * f.grid.weights))
        rows.append(SweepRow(n, t, meas.h1_length, meas.l1, meas.linf, t <= 1 / (c * n) * (1 + 1e-12), integral))
    fit = [r for r in rows if r.in_regime]
    if len(fit) < 2:
        raise InsufficientDataError("fewer than two in-regime times")
    ts = [r.t for r in fit]
    h1s = [r.h1_length for r in fit]
    edge = fit[0].t
    for a, b in zip(fit, fit[1:]):
        s = loglog_slope([a.t, b.t], [a.h1_length, b.h1_length])
        if abs(s - 0.5) > 0.1:
            break
        edge = b.t
    return PropositionReport(
        rows=tuple(rows),
        h1_slope=loglog_slope(ts, h1s),
        l1_slope=loglog_slope(ts, [r.l1 for r in fit]),
        linf_slope=loglog_slope(ts, [r.linf for r in fit]),
        regime_edge=edge,
        regime_c=c,
        design_residual=float(np.max(pts.residuals[1:])) if len(pts.residuals) > 1 else 0.0,
    )


def write_proposition_csv(report: PropositionReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t", "h1_length", "l1", "linf", "in_regime"])
        for r in report.rows:
            w.writerow([r.n, "%.12g" % r.t, "%.12g" % r.h1_length, "%.12g" % r.l1, "%.12g" % r.linf, int(r.in_regime)])

