"""Area of the eps-enlargement of planar shapes.

The enlargement of a region ``S`` is the set of points outside ``S`` within
distance ``eps`` of it.  Its area is measured on a pixel grid: a Euclidean
distance transform finds, for every pixel near the boundary, the nearest
pixel on the other side, and bisection along that segment against the exact
indicator refines the distance to sub-pixel accuracy.  Pixel coverage is then
anti-aliased from the refined signed distance.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.special import ellipe

from .errors import PreconditionWarning, ResolutionTooCoarseError

DEFAULT_RESOLUTION = 1024


@dataclass(frozen=True, eq=False)
class TestShape:
    """Connected planar region given by a vectorized indicator."""

    name: str
    indicator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    area: float
    perimeter: float
    bbox: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    __test__ = False  # keep pytest from collecting this class


def _polygon_indicator(vertices):
    vx = np.asarray([v[0] for v in vertices], dtype=float)
    vy = np.asarray([v[1] for v in vertices], dtype=float)

    def inside(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        res = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        n = len(vx)
        for k in range(n):
            x1, y1 = vx[k], vy[k]
            x2, y2 = vx[(k + 1) % n], vy[(k + 1) % n]
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            res ^= crosses & (x < xc)
        return res

    return inside


def _polygon_area_perimeter(vertices):
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    area = 0.5 * abs(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))
    return float(area), float(np.sum(np.hypot(*(w - v).T)))


def disk(r: float = 1.0) -> TestShape:
    return TestShape("disk", lambda x, y: x * x + y * y <= r * r, math.pi * r * r, 2 * math.pi * r, (-r, -r, r, r))


def unit_square() -> TestShape:
    return TestShape(
        "square", lambda x, y: (x >= 0) & (x <= 1) & (y >= 0) & (y <= 1), 1.0, 4.0, (0.0, 0.0, 1.0, 1.0)
    )


def ellipse(a: float = 1.0, b: float = 0.1) -> TestShape:
    perim = 4 * a * float(ellipe(1 - (b / a) ** 2))
    return TestShape(
        "ellipse", lambda x, y: (x / a) ** 2 + (y / b) ** 2 <= 1, math.pi * a * b, perim, (-a, -b, a, b)
    )


def l_shape() -> TestShape:
    verts = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    area, perim = _polygon_area_perimeter(verts)
    return TestShape("l_shape", _polygon_indicator(verts), area, perim, (0.0, 0.0, 2.0, 2.0))


def star(points: int = 5, outer: float = 1.0, inner: float = 0.5) -> TestShape:
    ang = np.pi / 2 + np.arange(2 * points) * np.pi / points
    rad = np.where(np.arange(2 * points) % 2 == 0, outer, inner)
    verts = list(zip(rad * np.cos(ang), rad * np.sin(ang)))
    area, perim = _polygon_area_perimeter(verts)
    return TestShape("star", _polygon_indicator(verts), area, perim, (-outer, -outer, outer, outer))


def annulus(r_in: float = 0.5, r_out: float = 1.0) -> TestShape:
    def inside(x, y):
        s = x * x + y * y
        return (s >= r_in * r_in) & (s <= r_out * r_out)

    return TestShape(
        "annulus",
        inside,
        math.pi * (r_out**2 - r_in**2),
        2 * math.pi * (r_in + r_out),
        (-r_out, -r_out, r_out, r_out),
    )


def default_shapes() -> list[TestShape]:
    return [disk(), unit_square(), ellipse(), l_shape(), star(), annulus()]


def max_eps(shape: TestShape) -> float:
    """Largest ``eps`` at which the enlargement bound is asserted: ``sqrt(area) / 8``."""
    return math.sqrt(shape.area) / 8


# --------------------------------------------------------------------------
# distance fields


@dataclass(frozen=True, eq=False)
class _Raster:
    h: float
    inside: np.ndarray
    signed: np.ndarray  # refined signed distance, + outside; nan far from the boundary


def _refine(shape, px, py, qx, qy, steps=40):
    """Bisect for the indicator flip on segments p (one side) -> q (other side)."""
    lo = np.zeros(len(px))
    hi = np.ones(len(px))
    side_p = shape.indicator(px, py)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        same = shape.indicator(px + mid * (qx - px), py + mid * (qy - py)) == side_p
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    t = 0.5 * (lo + hi)
    return t * np.hypot(qx - px, qy - py)


@lru_cache(maxsize=16)
def _raster(shape: TestShape, resolution: int, margin: float) -> _Raster:
    x0, y0, x1, y1 = shape.bbox
    x0, y0, x1, y1 = x0 - margin, y0 - margin, x1 + margin, y1 + margin
    h = max(x1 - x0, y1 - y0) / resolution
    nx = int(math.ceil((x1 - x0) / h))
    ny = int(math.ceil((y1 - y0) / h))
    xs = x0 + (np.arange(nx) + 0.5) * h
    ys = y0 + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xs, ys)
    inside = shape.indicator(X, Y)
    if inside.all() or not inside.any():
        raise ResolutionTooCoarseError(f"shape {shape.name!r} is not resolved by the raster")
    signed = np.full(inside.shape, np.nan)
    for region, sign in ((~inside, 1.0), (inside, -1.0)):
        dist, idx = ndimage.distance_transform_edt(region, return_indices=True)
        band = region & (dist * h <= margin + 2 * h)
        jy, jx = np.nonzero(band)
        qy, qx = idx[0][jy, jx], idx[1][jy, jx]
        d = _refine(shape, xs[jx], ys[jy], xs[qx], ys[qy])
        signed[jy, jx] = sign * d
    return _Raster(h, inside, signed)


def _coverage(s, level, h):
    return np.clip((level - s) / h + 0.5, 0.0, 1.0)


def enlargement_area(shape: TestShape, eps: float, resolution: int = DEFAULT_RESOLUTION) -> float:
    """Area of ``{x outside the shape : dist(x, shape) <= eps}``.

    Parameters
    ----------
    shape : TestShape
    eps : float
        Enlargement radius, at least two pixel widths.
    resolution : int
        Pixels across the longer side of the padded bounding box.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    margin = 1.25 * max(eps, max_eps(shape))
    x0, y0, x1, y1 = shape.bbox
    h = (max(x1 - x0, y1 - y0) + 2 * margin) / resolution
    if eps < 2 * h:
        raise ResolutionTooCoarseError(f"eps={eps:g} is below two grid spacings ({2 * h:g}); raise the resolution")
    r = _raster(shape, int(resolution), margin)
    s = r.signed
    band = ~np.isnan(s)
    sb = s[band]
    area = r.h**2 * float(np.sum(_coverage(sb, eps, r.h) - _coverage(sb, 0.0, r.h)))
    # pixels outside the refined band lie farther than the margin from the boundary
    return area


def resolution_for(shape: TestShape, eps: float, pixels_per_eps: float = 4.0) -> int:
    """Resolution that puts ``pixels_per_eps`` pixels across ``eps`` (at least the default)."""
    margin = 1.25 * max(eps, max_eps(shape))
    x0, y0, x1, y1 = shape.bbox
    extent = max(x1 - x0, y1 - y0) + 2 * margin
    return max(DEFAULT_RESOLUTION, int(math.ceil(pixels_per_eps * extent / eps)))


def lemma_ratio(shape: TestShape, eps: float, resolution: int | None = None) -> float:
    """``enlargement_area / (eps * perimeter)``.

    A :class:`PreconditionWarning` is emitted when ``eps`` exceeds
    ``sqrt(area) / 8``; the value is still computed.
    """
    if eps > max_eps(shape) * (1 + 1e-12):
        warnings.warn(
            f"eps={eps:g} exceeds sqrt(area)/8={max_eps(shape):g} for {shape.name}", PreconditionWarning, stacklevel=2
        )
    if resolution is None:
        resolution = resolution_for(shape, eps)
    return enlargement_area(shape, eps, resolution) / (eps * shape.perimeter)


@dataclass(frozen=True)
class LemmaRow:
    shape: str
    eps: float
    enlargement_area: float
    perimeter: float
    ratio: float
    precondition_ok: bool


def is_connected(shape: TestShape, resolution: int = 512) -> bool:
    x0, y0, x1, y1 = shape.bbox
    h = max(x1 - x0, y1 - y0) / resolution
    xs = np.arange(x0 + h / 2, x1, h)
    ys = np.arange(y0 + h / 2, y1, h)
    X, Y = np.meshgrid(xs, ys)
    _, k = ndimage.label(shape.indicator(X, Y))
    return k == 1


def lemma_sweep(shapes=None, levels: int = 6, extra_factors=()) -> list[LemmaRow]:
    """Ratios for ``eps = sqrt(area)/8 * 2**-j``, ``j = 0 .. levels-1``.

    ``extra_factors`` adds ``eps = sqrt(area)/8 * factor`` rows; factors above
    one probe the inequality beyond its precondition.
    """
    shapes = default_shapes() if shapes is None else shapes
    rows = []
    for shp in shapes:
        top = max_eps(shp)
        factors = [2.0**-j for j in range(levels)] + list(extra_factors)
        finest = min(factors) * top
        res = resolution_for(shp, finest)
        for fac in factors:
            eps = top * fac
            ok = fac <= 1.0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", PreconditionWarning)
                ratio = lemma_ratio(shp, eps, resolution=res if fac <= 1.0 else None)
            area = ratio * eps * shp.perimeter
            rows.append(LemmaRow(shp.name, eps, area, shp.perimeter, ratio, ok))
    return rows


def write_lemma_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shape", "eps", "enlargement_area", "perimeter", "ratio", "precondition_ok"])
        for r in rows:
            w.writerow([r.shape, "%.12g" % r.eps, "%.12g" % r.enlargement_area, "%.12g" % r.perimeter, "%.12g" % r.ratio, int(r.precondition_ok)])
