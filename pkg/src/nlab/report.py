"""File outputs: atomic writes, CSV helpers and SVG renderings."""

from __future__ import annotations

import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .domain import SPHERE, TORUS, ScalarField

HEATMAP_CELLS = 96
WIDTH = 640


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_with(path, writer) -> Path:
    """Run ``writer(tmp_path)`` and move the result into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# --------------------------------------------------------------------------
# svg


def _color(v: float) -> str:
    """Diverging blue-white-red for ``v`` in ``[-1, 1]``."""
    v = max(-1.0, min(1.0, v))
    if v >= 0:
        r, g, b = 255, int(round(255 * (1 - v))), int(round(255 * (1 - v)))
    else:
        r, g, b = int(round(255 * (1 + v))), int(round(255 * (1 + v))), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def _extent(field: ScalarField):
    dom = field.domain
    if dom.kind == TORUS:
        return 0.0, 0.0, dom.side, dom.side
    if dom.kind == SPHERE:
        return 0.0, -math.pi / 2, 2 * math.pi, math.pi / 2
    return 0.0, 0.0, 1.0, 1.0


def _downsample(values: np.ndarray, cells: int) -> np.ndarray:
    ny, nx = values.shape
    sy = max(1, int(math.ceil(ny / cells)))
    sx = max(1, int(math.ceil(nx / cells)))
    py, px = (-ny) % sy, (-nx) % sx
    v = np.pad(values, ((0, py), (0, px)), mode="edge")
    return v.reshape(v.shape[0] // sy, sy, v.shape[1] // sx, sx).mean(axis=(1, 3))


def render_nodal_svg(field: ScalarField, nodal, path, cells: int = HEATMAP_CELLS) -> Path:
    """Heatmap of ``field`` with the nodal segments drawn on top.

    Sphere fields use the equirectangular projection (longitude right,
    latitude up) with a 30 degree graticule.  Output bytes depend only on
    the inputs.
    """
    if nodal is not None and nodal.domain != field.domain:
        raise ValueError("nodal set and field live on different domains")
    x0, y0, x1, y1 = _extent(field)
    w = WIDTH
    hgt = int(round(WIDTH * (y1 - y0) / (x1 - x0)))

    def px(x):
        return (x - x0) / (x1 - x0) * w

    def py(y):
        return (y1 - y) / (y1 - y0) * hgt

    v = _downsample(field.values, cells)
    scale = float(np.max(np.abs(v))) or 1.0
    ny, nx = v.shape
    cw, ch = w / nx, hgt / ny
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{hgt}" viewBox="0 0 {w} {hgt}">\n')
    out.write('<g shape-rendering="crispEdges">\n')
    for j in range(ny):
        # rows run bottom to top in the field, top to bottom on screen
        top = (ny - 1 - j) * ch
        for i in range(nx):
            out.write(
                f'<rect x="{i * cw:.3f}" y="{top:.3f}" width="{cw + 0.01:.3f}" height="{ch + 0.01:.3f}" '
                f'fill="{_color(v[j, i] / scale)}"/>\n'
            )
    out.write("</g>\n")
    if field.domain.kind == SPHERE:
        out.write('<g stroke="#888888" stroke-width="0.5" fill="none">\n')
        for lon in range(0, 361, 30):
            x = px(math.radians(lon))
            out.write(f'<line x1="{x:.3f}" y1="0" x2="{x:.3f}" y2="{hgt}"/>\n')
        for lat in range(-60, 61, 30):
            y = py(math.radians(lat))
            out.write(f'<line x1="0" y1="{y:.3f}" x2="{w}" y2="{y:.3f}"/>\n')
        out.write("</g>\n")
    if nodal is not None and len(nodal):
        seam = (x1 - x0) / 2
        out.write('<g stroke="#000000" stroke-width="1" fill="none">\n')
        for a, b in nodal.segments:
            # segments that cross the periodic seam are split there; skip them
            if abs(a[0] - b[0]) > seam or abs(a[1] - b[1]) > (y1 - y0) / 2:
                continue
            out.write(f'<line x1="{px(a[0]):.3f}" y1="{py(a[1]):.3f}" x2="{px(b[0]):.3f}" y2="{py(b[1]):.3f}"/>\n')
        out.write("</g>\n")
    out.write("</svg>\n")
    return atomic_write_text(path, out.getvalue())


def render_points_svg(lonlat: np.ndarray, segments: np.ndarray | None, path) -> Path:
    """Equirectangular plot of points and (optional) lon/lat segments."""
    w = WIDTH
    hgt = WIDTH // 2

    def px(lon):
        return lon / (2 * math.pi) * w

    def py(lat):
        return (math.pi / 2 - lat) / math.pi * hgt

    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{hgt}" viewBox="0 0 {w} {hgt}">\n')
    out.write(f'<rect x="0" y="0" width="{w}" height="{hgt}" fill="#ffffff"/>\n')
    out.write('<g stroke="#888888" stroke-width="0.5" fill="none">\n')
    for lon in range(0, 361, 30):
        out.write(f'<line x1="{px(math.radians(lon)):.3f}" y1="0" x2="{px(math.radians(lon)):.3f}" y2="{hgt}"/>\n')
    for lat in range(-60, 61, 30):
        out.write(f'<line x1="0" y1="{py(math.radians(lat)):.3f}" x2="{w}" y2="{py(math.radians(lat)):.3f}"/>\n')
    out.write("</g>\n")
    if segments is not None and len(segments):
        out.write('<g stroke="#000000" stroke-width="1" fill="none">\n')
        for a, b in segments:
            if abs(a[0] - b[0]) > math.pi:
                continue
            out.write(f'<line x1="{px(a[0]):.3f}" y1="{py(a[1]):.3f}" x2="{px(b[0]):.3f}" y2="{py(b[1]):.3f}"/>\n')
        out.write("</g>\n")
    out.write('<g fill="#c00000">\n')
    for lon, lat in lonlat:
        out.write(f'<circle cx="{px(lon):.3f}" cy="{py(lat):.3f}" r="1.5"/>\n')
    out.write("</g>\n</svg>\n")
    return atomic_write_text(path, out.getvalue())
