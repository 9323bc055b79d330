"""Acceptance gate: ten criteria, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
an "acceptance criteria" section at the end of the session.
"""

import filecmp
import math
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from nlab.domain import Domain, ScalarField, lp_norm, make_grid, pairwise_distance
from nlab.harness import (
    SolverConfig,
    _balanced_measures,
    exponent_scan,
    heat_upper_bound,
    optimal_time,
    proof_chain_check,
    sine_field,
    sine_theorem1,
    theorem1_report,
    theorem2_report,
    transport_cost,
)
from nlab.lemma import lemma_sweep
from nlab.spectral import assemble_operator, explicit_basis, heat_flow, lowest_eigenpairs, random_high_frequency
from nlab.sphere_design import fibonacci_points, proposition_sweep
from nlab.transport import DiscreteMeasure, solve_exact, w1_dual_bound
from oracles import dirichlet_square_eigenvalues, sine_w1, transport_simplex_min

pytestmark = pytest.mark.slow


def _random_instances(count=50, seed=2024):
    """``count`` small transport problems with rational masses, mixed domains."""
    rng = np.random.default_rng(seed)
    doms = [Domain.torus(), Domain.square("neumann"), Domain.sphere()]
    out = []
    for i in range(count):
        dom = doms[i % 3]
        k, l = (int(x) for x in rng.integers(1, 7, 2))
        a = rng.integers(1, 30, k)
        b = rng.integers(1, 30, l)
        fa = [Fraction(int(x), int(a.sum())) for x in a]
        fb = [Fraction(int(x), int(b.sum())) for x in b]
        if dom.kind == "sphere":
            xs = np.stack([rng.uniform(0, 2 * math.pi, k), rng.uniform(-1.5, 1.5, k)], 1)
            ys = np.stack([rng.uniform(0, 2 * math.pi, l), rng.uniform(-1.5, 1.5, l)], 1)
        else:
            side = dom.side if dom.kind == "torus" else 1.0
            xs = rng.uniform(0, side, (k, 2))
            ys = rng.uniform(0, side, (l, 2))
        mu = DiscreteMeasure(dom, xs, np.array([float(x) for x in fa]))
        nu = DiscreteMeasure(dom, ys, np.array([float(x) for x in fb]))
        out.append((mu, nu, fa, fb))
    return out


@pytest.fixture(scope="module")
def instances():
    return _random_instances()


@pytest.fixture(scope="module")
def sine_reports():
    t0 = time.perf_counter()
    grid = make_grid(Domain.torus(), 256)
    reports = {m: theorem2_report(sine_field(grid, m), 1.0) for m in (2, 4, 8)}
    return reports, time.perf_counter() - t0


# 1 ----------------------------------------------------------------------------


def test_c01_transport_matches_rational_lp(instances, verdict):
    t_solve = 0.0
    worst = 0.0
    for mu, nu, fa, fb in instances:
        t0 = time.perf_counter()
        cost = solve_exact(mu, nu, 1.0).cost
        t_solve += time.perf_counter() - t0
        c = pairwise_distance(mu.domain, mu.support, nu.support)
        ref = float(transport_simplex_min(fa, fb, c))
        worst = max(worst, abs(cost - ref))
    ok = worst <= 1e-9 and t_solve < 10.0
    verdict(1, ok, f"50 instances, max |exact - LP| = {worst:.2e} (tol 1e-9), solver time {t_solve:.2f}s (< 10s)", t_solve)
    assert ok


# 2 ----------------------------------------------------------------------------


def test_c02_sine_sharpness(sine_reports, verdict):
    reports, elapsed = sine_reports
    parts = []
    ok = elapsed < 120
    ratios = []
    for m, r in reports.items():
        w_rel = r.values["w_p"] / sine_w1(m) - 1
        h_rel = r.values["h1"] / (4 * math.pi * m) - 1
        ok &= abs(w_rel) <= 0.03 and abs(h_rel) <= 0.01 and abs(r.ratio - 0.5) <= 0.05
        ratios.append(r.ratio)
        parts.append(f"m={m}: W1 {w_rel:+.2%} H1 {h_rel:+.2%} ratio {r.ratio:.4f}")
    spread = (max(ratios) - min(ratios)) / min(ratios)
    ok &= spread < 0.10
    verdict(2, ok, "; ".join(parts) + f"; spread {spread:.2%}", elapsed)
    assert ok


# 3 ----------------------------------------------------------------------------


def test_c03_holder_chain(verdict):
    t0 = time.perf_counter()
    fails = []
    worst = 0.0
    eq = []
    grid = make_grid(Domain.torus(), 256)
    for m in (2, 4, 8):
        f = sine_field(grid, m)
        for p in (1.0, 2.0):
            rep = proof_chain_check(f, p, with_transport=False)
            worst = max(worst, rep.holder_gap)
            if not rep.holder_ok:
                fails.append(f"sine m={m} p={p:g}")
            if p == 1.0:
                eq.append(rep.holder_gap)
    g128 = make_grid(Domain.torus(), 128)
    basis = explicit_basis(g128, 400)
    for seed in range(20):
        n = (16, 64, 128, 256)[seed % 4]
        f = random_high_frequency(basis, n, 64, seed)
        for p in (1.0, 2.0):
            rep = proof_chain_check(f, p, with_transport=False)
            worst = max(worst, rep.holder_gap)
            if not rep.holder_ok:
                fails.append(f"random seed={seed} p={p:g}")
    eq_ok = all(abs(g - 1) <= 0.05 for g in eq)
    ok = not fails and eq_ok
    detail = (
        f"max lhs/rhs {worst:.4f} (<= 1.05) over sine m=2,4,8 and 20 random fields, p=1,2; "
        f"sine p=1 lhs/rhs {', '.join(f'{g:.4f}' for g in eq)} (1 +- 5%)"
    )
    if fails:
        detail += f"; failing: {', '.join(fails)}"
    verdict(3, ok, detail, time.perf_counter() - t0)
    assert ok


# 4 ----------------------------------------------------------------------------


def test_c04_enlargement_lemma(verdict):
    t0 = time.perf_counter()
    rows = lemma_sweep(levels=6)
    elapsed = time.perf_counter() - t0
    top = max(r.ratio for r in rows if r.precondition_ok)
    disk = min((r for r in rows if r.shape == "disk"), key=lambda r: r.eps)
    ok = top <= 2.0 and abs(disk.ratio - 1) <= 0.05 and elapsed < 60
    verdict(4, ok, f"max ratio {top:.4f} (<= 2) over 6 shapes x 6 eps; disk at eps={disk.eps:.4g}: {disk.ratio:.4f} (1 +- 5%)", elapsed)
    assert ok


# 5 ----------------------------------------------------------------------------


def test_c05_heat_flow_bound(verdict):
    t0 = time.perf_counter()
    grid = make_grid(Domain.torus(), 64)
    cfg = SolverConfig()
    consts = {}
    worst = 0.0
    for n in (64, 256):
        bw = n // 2
        basis = explicit_basis(grid, n + bw + 1)
        lam = basis.eigenvalue(n)
        cs = []
        for seed in range(20):
            f = random_high_frequency(basis, n, bw, seed)
            t = optimal_time(lam, lp_norm(f, 1), lp_norm(f, 2))
            bound = heat_upper_bound(f, basis, n, t)
            mu, nu, _ = _balanced_measures(f, cfg)
            w1, _, _ = transport_cost(mu, nu, 1.0, cfg)
            cs.append(w1 / bound)
        consts[n] = float(np.median(cs))
        worst = max(worst, max(cs))
    pooled = float(np.median(list(consts.values())))
    stable = all(abs(c / pooled - 1) <= 0.5 for c in consts.values())
    ok = worst <= 3.0 and stable
    detail = (
        f"max W1/bound {worst:.3f} (<= 3); fitted constant (median W1/bound) "
        + ", ".join(f"n={n}: {c:.3f}" for n, c in consts.items())
        + f" (each within 50% of {pooled:.3f})"
    )
    verdict(5, ok, detail, time.perf_counter() - t0)
    assert ok


# 6 ----------------------------------------------------------------------------


def test_c06_theorem1_scaling(verdict):
    t0 = time.perf_counter()
    sine = [sine_theorem1(m, 256) for m in (2, 4, 8, 16)]
    alpha, _ = exponent_scan(sine)
    grid = make_grid(Domain.torus(), 128)
    basis = explicit_basis(grid, 400)
    ratios = {}
    for n in (16, 64, 256):
        bw = max(16, n // 2)
        ratios[n] = min(theorem1_report(seed, basis, n, bw).ratio for seed in range(3))
    elapsed = time.perf_counter() - t0
    ok = abs(alpha - 0.5) <= 0.1 and all(r >= 0.1 for r in ratios.values()) and elapsed < 300
    detail = f"sine alpha_fit {alpha:.4f} (0.5 +- 0.1); random min lhs/rhs " + ", ".join(
        f"n={n}: {r:.3f}" for n, r in ratios.items()
    ) + " (>= 0.1)"
    verdict(6, ok, detail, elapsed)
    assert ok


# 7 ----------------------------------------------------------------------------


def test_c07_sphere_sweep(verdict):
    t0 = time.perf_counter()
    n = 200
    ts = [5e-7, 1e-6, 2e-6, 5e-6]
    pts = fibonacci_points(n, degree=60)
    rep = proposition_sweep(n, ts, c=4.0, pts=pts)
    elapsed = time.perf_counter() - t0
    worst_int = max(abs(r.integral) / r.l1 for r in rep.rows)
    in_regime = all(r.in_regime for r in rep.rows) and max(ts) <= 1 / (4 * n)
    ok = (
        in_regime
        and abs(rep.h1_slope - 0.5) <= 0.1
        and abs(rep.linf_slope + 1) <= 0.1
        and worst_int <= 1e-6
        and elapsed < 300
    )
    detail = (
        f"n=200, t in [5e-7, 5e-6]: H1 slope {rep.h1_slope:.4f} (0.5 +- 0.1), "
        f"Linf slope {rep.linf_slope:.4f} (-1 +- 0.1), max |int f|/||f||_1 {worst_int:.2e} (<= 1e-6), "
        f"design residual up to L=60: {rep.design_residual:.3g}"
    )
    verdict(7, ok, detail, elapsed)
    assert ok


# 8 ----------------------------------------------------------------------------


def test_c08_duality_certificate(instances, sine_reports, verdict):
    t0 = time.perf_counter()
    violations = 0
    for mu, nu, _, _ in instances:
        plan = solve_exact(mu, nu, 1.0)
        if w1_dual_bound(mu, nu, plan) > plan.cost * (1 + 1e-9):
            violations += 1
    reports, _ = sine_reports
    gaps = {}
    for m, r in reports.items():
        v = r.values
        if v["dual_bound"] > v["w_p"] * (1 + 1e-9):
            violations += 1
        gaps[m] = 1 - v["dual_bound"] / v["w_p"]
    ok = violations == 0 and all(g <= 0.03 for g in gaps.values())
    detail = f"{violations} bound violations over 53 instances; sine gaps " + ", ".join(
        f"m={m}: {g:.2e}" for m, g in gaps.items()
    ) + " (<= 3%)"
    verdict(8, ok, detail, time.perf_counter() - t0)
    assert ok


# 9 ----------------------------------------------------------------------------


def test_c09_eigensolver(verdict):
    t0 = time.perf_counter()
    grid = make_grid(Domain.square("dirichlet"), 128)
    op = assemble_operator(ScalarField(grid, np.ones(grid.shape)))
    basis = lowest_eigenpairs(op, 10)
    ref = dirichlet_square_eigenvalues(10)
    eig_err = float(np.max(np.abs(basis.eigenvalues / ref - 1)))
    decay_err = 0.0
    for k in range(10):
        phi = basis.eigenfunction(k + 1)
        t = 1.0 / ref[k]
        out = heat_flow(phi, basis, t)
        decay = lp_norm(out, 2) / lp_norm(phi, 2)
        decay_err = max(decay_err, abs(decay / math.exp(-ref[k] * t) - 1))
    ok = eig_err <= 0.02 and decay_err <= 0.005
    verdict(
        9,
        ok,
        f"max eigenvalue error {eig_err:.2e} (<= 2%) vs pi^2 (k1^2 + k2^2); "
        f"max single-mode decay error {decay_err:.2e} (<= 0.5%) at t = 1/lambda",
        time.perf_counter() - t0,
    )
    assert ok


# 10 ---------------------------------------------------------------------------


_RUNS = [
    ("theorem2", [], "theorem2.csv"),
    ("theorem1", [], "theorem1.csv"),
    ("theorem1", ["--family", "random", "--seeds", "0,1"], "theorem1.csv"),
    ("proposition", [], "proposition.csv"),
]


def test_c10_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    diffs = []
    for i, (cmd, extra, csv_name) in enumerate(_RUNS):
        paths = []
        for rep in range(2):
            out = tmp_path / f"{i}_{rep}"
            env = dict(os.environ, PYTHONHASHSEED=str(rep + 1))
            r = subprocess.run(
                [sys.executable, "-m", "nlab", cmd, *extra, "--out", str(out)],
                capture_output=True,
                text=True,
                env=env,
            )
            assert r.returncode in (0, 1), r.stderr
            paths.append(out / csv_name)
        if not filecmp.cmp(paths[0], paths[1], shallow=False):
            diffs.append(f"{cmd} {' '.join(extra)}".strip())
    ok = not diffs
    verdict(
        10,
        ok,
        "byte-identical CSVs across two processes for theorem2, theorem1 (sine, random) and proposition"
        + (f"; differing: {', '.join(diffs)}" if diffs else ""),
        time.perf_counter() - t0,
    )
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
