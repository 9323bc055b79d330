import math
import warnings

import numpy as np
import pytest

from nlab.domain import Domain, ScalarField, inner, lp_norm, make_grid
from nlab.errors import BandlimitWarning, EllipticityError, InsufficientBasisError
from nlab.spectral import (
    assemble_operator,
    closed_form_eigenvalues,
    explicit_basis,
    heat_flow,
    lowest_eigenpairs,
    project_high,
    random_high_frequency,
    real_spherical_harmonic,
    tail_energy,
)
from oracles import dirichlet_square_eigenvalues


def test_torus_basis_orthonormal_and_sorted():
    g = make_grid(Domain.torus(), 32)
    b = explicit_basis(g, 40)
    phi = b.functions.reshape(40, -1)
    gram = (phi * g.weights.ravel()) @ phi.T
    assert np.allclose(gram, np.eye(40), atol=1e-12)
    assert np.all(np.diff(b.eigenvalues) >= 0)
    assert b.eigenvalue(1) == 0.0
    # integer lattice |k|^2 on the 2 pi torus: 0, 1 x4, 2 x4, 4 x4, 5 x8 ...
    assert list(b.eigenvalues[:13]) == [0, 1, 1, 1, 1, 2, 2, 2, 2, 4, 4, 4, 4]


def test_closed_form_matches_basis():
    for dom in (Domain.torus(), Domain.square("neumann"), Domain.sphere()):
        g = make_grid(dom, 24)
        b = explicit_basis(g, 30)
        assert np.allclose(b.eigenvalues, closed_form_eigenvalues(dom, 30))


def test_sphere_harmonics_eigen_relation():
    g = make_grid(Domain.sphere(), 24)
    b = explicit_basis(g, 25)
    # degrees 0..4 carry 1, 3, 5, 7, 9 modes with lam = l (l + 1)
    expect = [l * (l + 1) for l in range(5) for _ in range(2 * l + 1)]
    assert np.allclose(b.eigenvalues, expect)
    y = real_spherical_harmonic(2, 1, g.x, g.y)
    assert math.sqrt(np.sum(y**2 * g.weights)) == pytest.approx(1.0, rel=1e-10)


def test_dirichlet_square_eigenvalues_within_two_percent():
    g = make_grid(Domain.square("dirichlet"), 64)
    op = assemble_operator(ScalarField(g, np.ones(g.shape)))
    b = lowest_eigenpairs(op, 10)
    ref = dirichlet_square_eigenvalues(10)
    assert np.all(np.abs(b.eigenvalues / ref - 1) < 0.02)
    assert b.orthonormality_residual < 1e-8


def test_variable_coefficient_scaling():
    # a = 2 doubles every eigenvalue
    g = make_grid(Domain.torus(), 32)
    one = lowest_eigenpairs(assemble_operator(ScalarField(g, np.ones(g.shape))), 6)
    two = lowest_eigenpairs(assemble_operator(ScalarField(g, np.full(g.shape, 2.0))), 6)
    assert np.allclose(two.eigenvalues, 2 * one.eigenvalues, rtol=1e-8, atol=1e-10)


def test_nonpositive_coefficient_rejected():
    g = make_grid(Domain.torus(), 16)
    v = np.ones(g.shape)
    v[3, 3] = 0.0
    with pytest.raises(EllipticityError):
        assemble_operator(ScalarField(g, v))


def test_project_high_and_random_fields():
    g = make_grid(Domain.torus(), 32)
    b = explicit_basis(g, 80)
    f = random_high_frequency(b, 30, 20, seed=3)
    assert lp_norm(f, 2) == pytest.approx(1.0, rel=1e-12)
    assert np.max(np.abs(b.coefficients(f, 29))) < 1e-12
    raw = ScalarField(g, np.cos(g.x) + np.sin(7 * g.y))
    hi = project_high(raw, b, 10)
    assert np.max(np.abs(b.coefficients(hi, 9))) < 1e-12
    assert inner(hi, ScalarField(g, np.sin(7 * g.y))) == pytest.approx(math.pi**2 * 2, rel=1e-10)
    with pytest.raises(InsufficientBasisError):
        random_high_frequency(b, 70, 20, seed=0)


def test_heat_flow_single_mode_decay():
    g = make_grid(Domain.torus(), 32)
    b = explicit_basis(g, 60)
    f = ScalarField(g, np.sin(2 * g.x + 3 * g.y))
    t = 0.05
    out = heat_flow(f, b, t)
    assert np.allclose(out.values, math.exp(-13 * t) * f.values, atol=1e-12)
    assert tail_energy(f, b) < 1e-12


def test_heat_flow_warns_outside_band():
    g = make_grid(Domain.torus(), 32)
    b = explicit_basis(g, 10)
    f = ScalarField(g, np.sin(9 * g.x))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        out = heat_flow(f, b, 0.1)
    assert any(issubclass(x.category, BandlimitWarning) for x in w)
    assert out.notes and "bandlimit" in out.notes[0]


def test_weyl_counting_on_torus():
    lam = closed_form_eigenvalues(Domain.torus(), 2000)
    area = 4 * math.pi**2
    for cap in (100, 200, 300, 400):
        count = int(np.sum(lam <= cap))
        assert count / cap == pytest.approx(area / (4 * math.pi), rel=0.10)
    # brute-force lattice count of |k|^2 <= 100
    brute = sum(1 for i in range(-11, 12) for j in range(-11, 12) if i * i + j * j <= 100)
    assert int(np.sum(lam <= 100)) == brute
    # lambda_n grows like 4 pi n / area = n / pi
    assert lam[99] / 100 == pytest.approx(1 / math.pi, rel=0.10)


def test_documented_basis_values():
    g = make_grid(Domain.torus(), 32)
    b1 = explicit_basis(g, 1)
    assert b1.eigenvalue(1) == 0.0
    assert np.ptp(b1.functions[0]) < 1e-12
    s = explicit_basis(make_grid(Domain.sphere(), 16), 4)
    assert list(s.eigenvalues) == [0, 2, 2, 2]
    from nlab.errors import ResolutionTooCoarseError

    with pytest.raises(ResolutionTooCoarseError):
        explicit_basis(make_grid(Domain.torus(), 16), 400)


def test_numerical_eigenpairs_documented():
    g = make_grid(Domain.square("dirichlet"), 64)
    b = lowest_eigenpairs(assemble_operator(ScalarField(g, np.ones(g.shape))), 3)
    assert np.allclose(b.eigenvalues, math.pi**2 * np.array([2, 5, 5]), rtol=0.02)
    gn = make_grid(Domain.square("neumann"), 32)
    bn = lowest_eigenpairs(assemble_operator(ScalarField(gn, np.ones(gn.shape))), 1)
    assert abs(bn.eigenvalue(1)) < 1e-8
    assert np.ptp(bn.functions[0]) < 1e-6
    gt = make_grid(Domain.torus(), 64)
    bt = lowest_eigenpairs(assemble_operator(ScalarField(gt, np.ones(gt.shape))), 5)
    ref = explicit_basis(gt, 5).eigenvalues
    assert np.allclose(bt.eigenvalues, ref, rtol=0.02, atol=1e-8)


def test_projection_documented():
    g = make_grid(Domain.torus(), 64)
    b = explicit_basis(g, 60)
    phi = b.eigenfunction
    assert np.allclose(project_high(phi(13), b, 10).values, phi(13).values, atol=1e-8)
    assert np.allclose(project_high(phi(1), b, 2).values, 0.0, atol=1e-8)
    f = phi(1) + phi(50)
    assert np.allclose(project_high(f, b, 10).values, phi(50).values, atol=1e-6)


def test_heat_flow_documented_and_properties():
    g = make_grid(Domain.torus(), 64)
    b = explicit_basis(g, 120)
    f = ScalarField(g, np.sin(4 * g.x))
    assert np.allclose(heat_flow(f, b, 0.0).values, f.values, atol=1e-8)
    out = heat_flow(f, b, 0.1)
    assert lp_norm(out, 2) / lp_norm(f, 2) == pytest.approx(math.exp(-1.6), rel=5e-3)
    c = ScalarField(g, np.full(g.shape, 3.0))
    assert np.allclose(heat_flow(c, b, 5.0).values, 3.0)
    n = 40
    r = random_high_frequency(b, n, 60, seed=9)
    assert np.array_equal(r.values, random_high_frequency(b, n, 60, seed=9).values)
    area = g.domain.area
    for t in (0.0, 0.01, 0.1, 1.0):
        h = heat_flow(r, b, t)
        assert lp_norm(h, 2) <= lp_norm(r, 2) * (1 + 1e-12)
        assert np.max(np.abs(b.coefficients(h, n - 1))) < 1e-8
        # L1 decay for fields on modes >= n
        assert lp_norm(h, 1) <= math.sqrt(area) * math.exp(-b.eigenvalue(n) * t) * lp_norm(r, 2) * (1 + 1e-9)
