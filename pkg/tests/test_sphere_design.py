import math

import numpy as np
import pytest
from numpy.polynomial import legendre as npleg
from scipy.optimize import brentq

from nlab.domain import Domain, make_grid
from nlab.errors import InsufficientDataError, InvalidCountError, ResolutionTooCoarseError
from nlab.spectral import explicit_basis
from nlab.sphere_design import (
    DesignPointSet,
    ZonalHeatKernel,
    design_measure_field,
    fibonacci_points,
    heat_degree,
    measure_bumps,
    measure_global,
    proposition_sweep,
    write_proposition_csv,
    zonal_field_values,
)


def poles():
    P = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    return DesignPointSet(2, P, math.pi, np.zeros(1))


def pole_pair_zero(t):
    """Height ``z0`` of the northern nodal circle of the two-pole measure."""
    L = 200
    l = np.arange(L + 1)
    c = (2 * l + 1) / (4 * math.pi) * np.exp(-l * (l + 1) * t)
    c[0] = 0.0
    return brentq(lambda z: npleg.legval(z, c) + npleg.legval(-z, c), 0.5, 1.0 - 1e-12)


def test_fibonacci_separation_scales():
    for n in (50, 200, 800):
        pts = fibonacci_points(n, degree=4)
        assert 1.5 < pts.min_separation * math.sqrt(n) < 4.0
        assert np.allclose(np.linalg.norm(pts.points, axis=1), 1.0)
    with pytest.raises(InvalidCountError):
        fibonacci_points(1)


def test_kernel_unit_mass_and_degree():
    t = 1e-3
    L = heat_degree(t)
    assert math.exp(-L * (L + 1) * t) <= 1e-6 < math.exp(-(L - 1) * L * t)
    k = ZonalHeatKernel.build(t)
    assert k.total_mass() == pytest.approx(1.0, rel=1e-12)
    # small-time peak approaches 1 / (4 pi t)
    assert k.peak * 4 * math.pi * t == pytest.approx(1.0, rel=0.01)


def test_grid_synthesis_matches_zonal_sum():
    pts = fibonacci_points(20, degree=2)
    t = 0.02
    L = heat_degree(t)
    g = make_grid(Domain.sphere(), 2 * L + 2)
    b = explicit_basis(g, (L + 1) ** 2)
    f = design_measure_field(pts, t, b)
    direct = zonal_field_values(pts, t, g.points, L)
    assert np.max(np.abs(f.values.ravel() - direct)) < 1e-10 * np.max(np.abs(direct))
    assert abs(float(np.sum(f.values * g.weights))) < 1e-10
    with pytest.raises(ResolutionTooCoarseError):
        design_measure_field(pts, 1e-3, b)


@pytest.mark.parametrize("t", [1e-3, 3e-4])
def test_pole_pair_nodal_length(t):
    z0 = pole_pair_zero(t)
    exact = 2 * 2 * math.pi * math.sqrt(1 - z0 * z0)
    m = measure_bumps(poles(), t)
    assert m.h1_length == pytest.approx(exact, rel=2e-3)
    assert abs(m.integral) < 1e-6 * m.l1


def test_chart_and_global_agree():
    pts = fibonacci_points(30, degree=2)
    t = 1e-3
    a = measure_bumps(pts, t)
    b = measure_global(pts, t, level=7)
    assert a.h1_length == pytest.approx(b.h1_length, rel=0.02)
    assert a.l1 == pytest.approx(b.l1, rel=0.02)


def test_sweep_scaling_and_csv(tmp_path):
    rep = proposition_sweep(40, [2e-4, 5e-4, 1e-3, 2e-3], design_degree=4)
    assert all(r.in_regime for r in rep.rows[:3])
    assert rep.linf_slope == pytest.approx(-1.0, abs=0.15)
    assert rep.h1_slope > 0
    write_proposition_csv(rep, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "n,t,h1_length,l1,linf,in_regime" and len(lines) == 5
    with pytest.raises(InsufficientDataError):
        proposition_sweep(40, [1e-3, 2e-3], design_degree=2)


def test_documented_point_sets():
    two = fibonacci_points(2, degree=2)
    assert two.min_separation == pytest.approx(math.pi)
    pts = fibonacci_points(400, degree=8)
    assert 1.0 <= pts.min_separation * math.sqrt(400) <= 4.0
    assert pts.residual(0) == 0.0
