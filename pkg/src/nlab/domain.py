"""Two-dimensional domains, their quadrature grids and sampled fields.

Three geometries are supported:

* ``torus``  -- flat square torus of side ``L`` (default ``2*pi``), periodic
  uniform ``N x N`` lattice with equal weights ``(L/N)**2``.
* ``square`` -- unit square with a Dirichlet or Neumann boundary condition,
  ``N x N`` lattice including the boundary nodes and trapezoidal weights.
* ``sphere`` -- unit sphere; ``N`` Gauss-Legendre latitudes times ``2N``
  equispaced longitudes.  Points are ``(lon, lat)`` pairs in radians.

Field values are stored as ``(ny, nx)`` arrays; row ``j`` is the ``j``-th
``y`` (or latitude) node, so a C-order ravel is the row-major node order used
by the CSV format.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainMismatchError, InvalidExponentError

TORUS = "torus"
SQUARE = "square"
SPHERE = "sphere"

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
PERIODIC = "periodic"

_ON_DOMAIN_TOL = 1e-9


@dataclass(frozen=True)
class Domain:
    kind: str
    side: float = 2 * math.pi
    bc: str | None = PERIODIC

    def __post_init__(self):
        if self.kind == TORUS:
            if self.bc not in (None, PERIODIC):
                raise ValueError("the torus only carries periodic boundary conditions")
            object.__setattr__(self, "bc", PERIODIC)
        elif self.kind == SQUARE:
            if self.bc not in (DIRICHLET, NEUMANN):
                raise ValueError(f"square needs bc in {{dirichlet, neumann}}, got {self.bc!r}")
            object.__setattr__(self, "side", 1.0)
        elif self.kind == SPHERE:
            object.__setattr__(self, "side", 1.0)
            object.__setattr__(self, "bc", None)
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.side <= 0:
            raise ValueError("domain side must be positive")

    @classmethod
    def torus(cls, side: float = 2 * math.pi) -> "Domain":
        return cls(TORUS, side, PERIODIC)

    @classmethod
    def square(cls, bc: str = DIRICHLET) -> "Domain":
        return cls(SQUARE, 1.0, bc)

    @classmethod
    def sphere(cls) -> "Domain":
        return cls(SPHERE, 1.0, None)

    @property
    def area(self) -> float:
        if self.kind == SPHERE:
            return 4 * math.pi
        return self.side**2

    @property
    def diameter(self) -> float:
        if self.kind == TORUS:
            return self.side / math.sqrt(2)
        if self.kind == SQUARE:
            return math.sqrt(2)
        return math.pi

    @property
    def coordinate_names(self) -> tuple[str, str]:
        return ("lon", "lat") if self.kind == SPHERE else ("x", "y")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == TORUS:
            out["side"] = self.side
        elif self.kind == SQUARE:
            out["bc"] = self.bc
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        kind = d.get("kind")
        if kind == TORUS:
            return cls.torus(float(d.get("side", 2 * math.pi)))
        if kind == SQUARE:
            return cls.square(d.get("bc", DIRICHLET))
        if kind == SPHERE:
            return cls.sphere()
        raise ValueError(f"unknown domain kind {kind!r}")

    def check_points(self, pts) -> np.ndarray:
        """Return ``pts`` as a float array of shape ``(..., 2)`` or raise."""
        pts = np.asarray(pts, dtype=float)
        if pts.shape[-1] != 2:
            raise DomainMismatchError(f"points must have 2 coordinates, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DomainMismatchError("non-finite point coordinates")
        a, b = pts[..., 0], pts[..., 1]
        tol = _ON_DOMAIN_TOL
        if self.kind == TORUS:
            lo, hi = -tol, self.side + tol
            ok = (a >= lo) & (a <= hi) & (b >= lo) & (b <= hi)
        elif self.kind == SQUARE:
            ok = (a >= -tol) & (a <= 1 + tol) & (b >= -tol) & (b <= 1 + tol)
        else:
            ok = np.abs(b) <= math.pi / 2 + tol
        if not np.all(ok):
            raise DomainMismatchError(f"point(s) outside the {self.kind} domain")
        return pts


def lonlat_to_xyz(pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    lon, lat = pts[..., 0], pts[..., 1]
    c = np.cos(lat)
    return np.stack([c * np.cos(lon), c * np.sin(lon), np.sin(lat)], axis=-1)


def xyz_to_lonlat(xyz) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=float)
    r = np.linalg.norm(xyz, axis=-1)
    lon = np.mod(np.arctan2(xyz[..., 1], xyz[..., 0]), 2 * np.pi)
    lat = np.arcsin(np.clip(xyz[..., 2] / r, -1.0, 1.0))
    return np.stack([lon, lat], axis=-1)


def great_circle(u, v) -> np.ndarray:
    """Angle between unit vectors, accurate for nearly (anti)parallel inputs."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.arctan2(cross, dot)


def metric_distance(domain: Domain, x, y) -> np.ndarray | float:
    """Geodesic distance between points of ``domain``.

    ``x`` and ``y`` broadcast against each other; each has a trailing axis of
    length 2.  Torus distances take the periodic minimum per coordinate, the
    square is Euclidean and the sphere uses great-circle arcs.
    """
    x = domain.check_points(x)
    y = domain.check_points(y)
    if domain.kind == SPHERE:
        d = great_circle(lonlat_to_xyz(x), lonlat_to_xyz(y))
    else:
        diff = np.abs(x - y)
        if domain.kind == TORUS:
            diff = np.minimum(diff, domain.side - diff)
        d = np.hypot(diff[..., 0], diff[..., 1])
    return float(d) if np.ndim(d) == 0 else d


def pairwise_distance(domain: Domain, x, y) -> np.ndarray:
    """Distance matrix between two point clouds, shape ``(len(x), len(y))``."""
    x = domain.check_points(x).reshape(-1, 2)
    y = domain.check_points(y).reshape(-1, 2)
    if domain.kind == SPHERE:
        xu, yu = lonlat_to_xyz(x), lonlat_to_xyz(y)
        dot = np.clip(xu @ yu.T, -1.0, 1.0)
        d = np.arccos(dot)
        # arccos loses precision near 0 and pi; patch those entries
        bad = np.abs(dot) > 0.999
        if np.any(bad):
            i, j = np.nonzero(bad)
            d[i, j] = great_circle(xu[i], yu[j])
        return d
    dx = np.abs(x[:, None, 0] - y[None, :, 0])
    dy = np.abs(x[:, None, 1] - y[None, :, 1])
    if domain.kind == TORUS:
        dx = np.minimum(dx, domain.side - dx)
        dy = np.minimum(dy, domain.side - dy)
    return np.hypot(dx, dy)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature lattice on a domain.

    Attributes
    ----------
    domain : Domain
    n : int
        Resolution parameter ``N``.
    x, y : ndarray, shape (ny, nx)
        Node coordinates (``lon``/``lat`` on the sphere).
    weights : ndarray, shape (ny, nx)
        Quadrature weights; they sum to ``domain.area``.
    """

    domain: Domain
    n: int
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def spacing(self) -> float:
        """Nominal node spacing along one axis."""
        if self.domain.kind == TORUS:
            return self.domain.side / self.n
        if self.domain.kind == SQUARE:
            return 1.0 / (self.n - 1)
        return math.pi / self.n

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.x.ravel(), self.y.ravel()], axis=-1)

    @property
    def xyz(self) -> np.ndarray:
        if self.domain.kind != SPHERE:
            raise DomainMismatchError("xyz coordinates only exist on the sphere")
        return lonlat_to_xyz(np.stack([self.x, self.y], axis=-1))

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if self.domain.kind == SQUARE:
            mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask


def make_grid(domain: Domain, n: int) -> Grid:
    if n < 3:
        raise ValueError("grid resolution must be at least 3")
    if domain.kind == TORUS:
        h = domain.side / n
        c = np.arange(n) * h
        xx, yy = np.meshgrid(c, c)
        w = np.full((n, n), h * h)
    elif domain.kind == SQUARE:
        c = np.linspace(0.0, 1.0, n)
        xx, yy = np.meshgrid(c, c)
        h = 1.0 / (n - 1)
        w1 = np.full(n, h)
        w1[0] = w1[-1] = h / 2
        w = np.outer(w1, w1)
    else:
        z, wz = np.polynomial.legendre.leggauss(n)
        lat = np.arcsin(z)
        lon = np.arange(2 * n) * (np.pi / n)
        xx, yy = np.meshgrid(lon, lat)
        w = np.outer(wz, np.full(2 * n, np.pi / n))
    return Grid(domain, n, _frozen(xx), _frozen(yy), _frozen(w))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real function sampled on the nodes of a grid.

    ``dirichlet=True`` asserts that the field vanishes on the boundary nodes
    of a square domain.  ``notes`` carries non-fatal diagnostics attached by
    the operation that produced the field.
    """

    grid: Grid
    values: np.ndarray
    dirichlet: bool = False
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.dirichlet and self.grid.domain.kind == SQUARE:
            if np.any(v[self.grid.boundary_mask] != 0.0):
                raise ValueError("Dirichlet field must vanish on boundary nodes")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn, **kw) -> "ScalarField":
        return cls(grid, fn(grid.x, grid.y), **kw)

    @property
    def domain(self) -> Domain:
        return self.grid.domain

    def with_values(self, values, **kw) -> "ScalarField":
        kw.setdefault("dirichlet", self.dirichlet)
        return ScalarField(self.grid, values, **kw)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other, dirichlet=False)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other, dirichlet=False)

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _same_grid(a: ScalarField, b: ScalarField):
    if a.grid is not b.grid and (a.grid.domain != b.grid.domain or a.grid.shape != b.grid.shape):
        raise DomainMismatchError("fields live on different grids")


def integrate(f: ScalarField) -> float:
    return float(np.sum(f.values * f.grid.weights))


def inner(f: ScalarField, g: ScalarField) -> float:
    _same_grid(f, g)
    return float(np.sum(f.values * g.values * f.grid.weights))


def lp_norm(f: ScalarField, p: float) -> float:
    """``(integral |f|^p)^(1/p)``; ``p = inf`` gives the max of ``|f|``."""
    if p == math.inf or p == "inf":
        return float(np.max(np.abs(f.values)))
    p = float(p)
    if not p >= 1:
        raise InvalidExponentError(f"p must satisfy p >= 1, got {p}")
    a = np.abs(f.values)
    if p == 1:
        return float(np.sum(a * f.grid.weights))
    return float(np.sum(a**p * f.grid.weights) ** (1.0 / p))


def field_to_csv(f: ScalarField, path) -> None:
    cx, cy = f.domain.coordinate_names
    rows = zip(f.grid.x.ravel(), f.grid.y.ravel(), f.values.ravel())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([cx, cy, "value"])
        for a, b, v in rows:
            w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])


def field_from_csv(path, grid: Grid) -> ScalarField:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = [*grid.domain.coordinate_names, "value"]
        if header != expected:
            raise DomainMismatchError(f"CSV header {header} does not match {expected}")
        vals = np.array([float(r[2]) for r in reader])
    if vals.size != grid.size:
        raise DomainMismatchError("CSV node count does not match grid")
    return ScalarField(grid, vals.reshape(grid.shape))
