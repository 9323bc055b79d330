import math

import numpy as np
import pytest

from nlab.domain import (
    Domain,
    ScalarField,
    field_from_csv,
    field_to_csv,
    integrate,
    lonlat_to_xyz,
    lp_norm,
    make_grid,
    metric_distance,
    pairwise_distance,
    xyz_to_lonlat,
)
from nlab.errors import DomainMismatchError, InvalidExponentError


@pytest.mark.parametrize("dom", [Domain.torus(), Domain.square("dirichlet"), Domain.sphere()])
def test_weights_sum_to_area(dom):
    g = make_grid(dom, 32)
    assert g.weights.sum() == pytest.approx(dom.area, rel=1e-12)


def test_torus_distance_wraps():
    d = Domain.torus()
    L = 2 * math.pi
    assert metric_distance(d, [0.1, 0.0], [L - 0.1, 0.0]) == pytest.approx(0.2)
    assert metric_distance(d, [0.0, 0.0], [math.pi, math.pi]) == pytest.approx(math.pi * math.sqrt(2))


def test_sphere_distance_and_coordinates():
    d = Domain.sphere()
    assert metric_distance(d, [0.0, 0.0], [math.pi, 0.0]) == pytest.approx(math.pi)
    assert metric_distance(d, [0.3, math.pi / 2], [2.0, math.pi / 2]) == pytest.approx(0.0, abs=1e-7)
    rng = np.random.default_rng(0)
    pts = np.stack([rng.uniform(0, 2 * math.pi, 50), rng.uniform(-1.5, 1.5, 50)], axis=1)
    back = xyz_to_lonlat(lonlat_to_xyz(pts))
    assert np.allclose(back, pts, atol=1e-12)


def test_pairwise_matches_pointwise():
    d = Domain.torus()
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 2 * math.pi, (7, 2))
    y = rng.uniform(0, 2 * math.pi, (5, 2))
    D = pairwise_distance(d, x, y)
    for i in range(7):
        for j in range(5):
            assert D[i, j] == pytest.approx(metric_distance(d, x[i], y[j]), abs=1e-12)


def test_norms_of_sine():
    g = make_grid(Domain.torus(), 64)
    f = ScalarField(g, np.sin(3 * g.x))
    assert integrate(f) == pytest.approx(0.0, abs=1e-12)
    assert lp_norm(f, 1) == pytest.approx(8 * math.pi, rel=1e-3)
    assert lp_norm(f, 2) == pytest.approx(math.sqrt(2) * math.pi, rel=1e-12)
    assert lp_norm(f, math.inf) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(InvalidExponentError):
        lp_norm(f, 0.5)


def test_sphere_quadrature_exact_for_polynomials():
    g = make_grid(Domain.sphere(), 16)
    z = np.sin(g.y)
    assert integrate(ScalarField(g, z**2)) == pytest.approx(4 * math.pi / 3, rel=1e-12)


def test_csv_round_trip(tmp_path):
    g = make_grid(Domain.torus(), 8)
    f = ScalarField(g, np.cos(g.x) * np.sin(2 * g.y))
    field_to_csv(f, tmp_path / "f.csv")
    back = field_from_csv(tmp_path / "f.csv", g)
    assert np.array_equal(back.values, f.values)
    with pytest.raises(DomainMismatchError):
        field_from_csv(tmp_path / "f.csv", make_grid(Domain.torus(), 9))


def test_fields_are_immutable_and_checked():
    g = make_grid(Domain.square("dirichlet"), 8)
    f = ScalarField(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    bad = np.ones(g.shape)
    with pytest.raises(ValueError):
        ScalarField(g, bad, dirichlet=True)
    with pytest.raises(ValueError):
        ScalarField(g, np.full(g.shape, np.nan))


def test_documented_values():
    g = make_grid(Domain.torus(), 64)
    assert integrate(ScalarField(g, np.ones(g.shape))) == pytest.approx(4 * math.pi**2, abs=1e-6)
    assert integrate(ScalarField(g, np.sin(g.x))) == pytest.approx(0.0, abs=1e-6)
    assert integrate(ScalarField(g, np.sin(g.x) ** 2)) == pytest.approx(2 * math.pi**2, rel=1e-3)
    assert metric_distance(Domain.torus(), [0, 0], [0, 0]) == 0.0
    with pytest.raises(DomainMismatchError):
        metric_distance(Domain.square("dirichlet"), [0.5, 0.5], [1.5, 0.5])


@pytest.mark.parametrize("dom", [Domain.torus(), Domain.square("neumann"), Domain.sphere()])
def test_norm_monotonicity(dom):
    g = make_grid(dom, 64)
    rng = np.random.default_rng(0)
    f = ScalarField(g, rng.standard_normal(g.shape))
    area = dom.area
    l1 = lp_norm(f, 1)
    for p in (1.5, 2, 4):
        assert l1 <= area ** (1 - 1 / p) * lp_norm(f, p) * (1 + 1e-12)
        assert area ** (1 - 1 / p) * lp_norm(f, p) <= area * lp_norm(f, math.inf) * (1 + 1e-12)


@pytest.mark.parametrize("dom", [Domain.torus(), Domain.square("neumann"), Domain.sphere()])
def test_triangle_inequality(dom):
    rng = np.random.default_rng(1)

    def pts(k):
        if dom.kind == "sphere":
            return np.stack([rng.uniform(0, 2 * math.pi, k), rng.uniform(-math.pi / 2, math.pi / 2, k)], 1)
        side = dom.side if dom.kind == "torus" else 1.0
        return rng.uniform(0, side, (k, 2))

    a, b, c = pts(1000), pts(1000), pts(1000)
    ab = metric_distance(dom, a, b)
    assert np.all(ab <= metric_distance(dom, a, c) + metric_distance(dom, c, b) + 1e-12)
