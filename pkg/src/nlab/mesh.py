"""Icosphere triangulation and a vectorized union-find."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class UnionFind:
    """Disjoint sets over ``0 .. n-1`` with batched unions.

    Unions hook the larger root under the smaller one; ``roots`` applies
    pointer jumping until every node points at its root, so labels are
    deterministic (each set is named by its smallest member).
    """

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def _compress(self):
        p = self.parent
        while True:
            pp = p[p]
            if np.array_equal(pp, p):
                break
            p = pp
        self.parent = p

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return int(i)

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            lo, hi = min(ra, rb), max(ra, rb)
            self.parent[hi] = lo

    def union_many(self, a, b) -> None:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        while len(a):
            self._compress()
            ra, rb = self.parent[a], self.parent[b]
            keep = ra != rb
            if not np.any(keep):
                break
            a, b, ra, rb = a[keep], b[keep], ra[keep], rb[keep]
            lo, hi = np.minimum(ra, rb), np.maximum(ra, rb)
            np.minimum.at(self.parent, hi, lo)
        self._compress()

    def roots(self) -> np.ndarray:
        self._compress()
        return self.parent.copy()


def consecutive_labels(roots: np.ndarray) -> np.ndarray:
    """Relabel root ids to ``0 .. k-1`` in order of first appearance."""
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    return order[inverse]


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (V, 3) unit vectors
    faces: np.ndarray  # (F, 3)
    edges: np.ndarray  # (E, 2), sorted pairs
    vertex_areas: np.ndarray  # (V,), sums to 4 pi

    @property
    def mean_edge(self) -> float:
        v = self.vertices
        return float(np.mean(np.linalg.norm(v[self.edges[:, 0]] - v[self.edges[:, 1]], axis=1)))


def _icosahedron():
    t = (1 + math.sqrt(5)) / 2
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return v / np.linalg.norm(v, axis=1)[:, None], f


def _subdivide(v, f):
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e.sort(axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1)[:, None]
    nv = len(v)
    nf = len(f)
    m01 = nv + inv[:nf]
    m12 = nv + inv[nf : 2 * nf]
    m20 = nv + inv[2 * nf :]
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    faces = np.concatenate(
        [
            np.stack([a, m01, m20], 1),
            np.stack([b, m12, m01], 1),
            np.stack([c, m20, m12], 1),
            np.stack([m01, m12, m20], 1),
        ]
    )
    return np.concatenate([v, mid]), faces


def spherical_triangle_areas(a, b, c) -> np.ndarray:
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2 * np.arctan2(num, den)


@lru_cache(maxsize=4)
def icosphere(level: int) -> TriMesh:
    """Icosahedron refined ``level`` times and projected to the unit sphere."""
    v, f = _icosahedron()
    for _ in range(level):
        v, f = _subdivide(v, f)
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e.sort(axis=1)
    edges = np.unique(e, axis=0)
    tri = spherical_triangle_areas(v[f[:, 0]], v[f[:, 1]], v[f[:, 2]])
    areas = np.zeros(len(v))
    for k in range(3):
        np.add.at(areas, f[:, k], tri / 3)
    areas *= 4 * math.pi / areas.sum()
    for arr in (v, f, edges, areas):
        arr.setflags(write=False)
    return TriMesh(v, f, edges, areas)


def level_for_spacing(spacing: float) -> int:
    """Smallest refinement level whose mean edge is below ``spacing``."""
    level = 0
    while 1.05 / 2**level > spacing and level < 9:
        level += 1
    return level
