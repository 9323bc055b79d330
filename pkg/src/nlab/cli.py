"""Command-line front end.

    nlab <command> [--config FILE] [--out DIR] [--seed S] [--jobs K] [overrides]

Each command writes CSV/JSON/SVG files into the output directory and exits
with status 0 when every assertion of the run holds, 1 when one fails, 2 on
a usage or configuration error and 3 when a computation raises.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import COMMANDS, ExperimentConfig
from .domain import Domain, ScalarField, integrate, make_grid
from .errors import ConfigError, NlabError
from .harness import (
    SolverConfig,
    exponent_scan,
    proof_chain_check,
    sine_field,
    sine_theorem1,
    theorem1_report,
    theorem2_report,
    write_sweep_csv,
)
from .lemma import lemma_sweep, write_lemma_csv
from .nodal import nodal_length
from .parallel import pmap, resolve_jobs
from .report import atomic_write_text, atomic_write_with, render_nodal_svg, render_points_svg, write_json
from .spectral import explicit_basis, random_high_frequency

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


def _tol(cfg: ExperimentConfig, key: str, default: float) -> float:
    return float(cfg.tolerances.get(key, default))


def _solver(cfg: ExperimentConfig) -> SolverConfig:
    return SolverConfig(**cfg.solver)


def _domain(cfg: ExperimentConfig) -> Domain:
    return Domain.from_dict(cfg.domain)


def _bandwidth(cfg: ExperimentConfig, n: int) -> int:
    return cfg.bandwidth or max(16, n // 2)


def _random_field(cfg: ExperimentConfig, n: int, seed: int) -> ScalarField:
    grid = make_grid(_domain(cfg), cfg.resolution)
    bw = _bandwidth(cfg, n)
    basis = explicit_basis(grid, max(cfg.basis_size, n + bw))
    return random_high_frequency(basis, n, bw, seed)


def _bump_field(cfg: ExperimentConfig, seed: int) -> ScalarField:
    dom = _domain(cfg)
    if dom.kind != "torus":
        raise ConfigError(["the bump family is defined on the torus"])
    grid = make_grid(dom, cfg.resolution)
    rng = np.random.default_rng(seed)
    cx, cy = rng.uniform(0, dom.side, 2)
    width = 0.3 + 0.5 * rng.random()
    dx = np.minimum(np.abs(grid.x - cx), dom.side - np.abs(grid.x - cx))
    dy = np.minimum(np.abs(grid.y - cy), dom.side - np.abs(grid.y - cy))
    v = np.exp(-(dx**2 + dy**2) / (2 * width**2))
    f = ScalarField(grid, v)
    return f.with_values(v - integrate(f) / dom.area)


def _fields(cfg: ExperimentConfig):
    """``(descriptor, field)`` pairs for the configured family."""
    if cfg.family == "sine":
        grid = make_grid(Domain.torus(), cfg.resolution)
        for m in cfg.m:
            yield {"family": "sine", "m": m, "n": m * m, "seed": 0}, sine_field(grid, m)
    elif cfg.family == "random":
        for n in cfg.n:
            for s in cfg.seeds:
                yield {"family": "random", "n": n, "seed": s}, _random_field(cfg, n, s)
    else:
        for s in cfg.seeds:
            yield {"family": "bump", "seed": s}, _bump_field(cfg, s)


# --------------------------------------------------------------------------
# jobs (top level so they can be shipped to worker processes)


def _theorem2_job(args):
    cfg, desc, f, p = args
    return theorem2_report(f, p, _solver(cfg), desc)


def _theorem1_job(args):
    cfg, n, seed = args
    grid = make_grid(_domain(cfg), cfg.resolution)
    bw = _bandwidth(cfg, n)
    basis = explicit_basis(grid, max(cfg.basis_size, n + bw))
    return theorem1_report(seed, basis, n, bw, _solver(cfg))


def _sine_theorem1_job(args):
    cfg, m = args
    return sine_theorem1(m, cfg.resolution, _solver(cfg))


def _proof_job(args):
    cfg, desc, f, p = args
    return desc, proof_chain_check(f, p, _solver(cfg), slack=_tol(cfg, "holder_slack", 0.05))


# --------------------------------------------------------------------------
# commands


def _tag(desc: dict) -> str:
    keys = ("family", "m", "n", "seed", "p")
    return " ".join(f"{k}={desc[k]}" if k != "family" else str(desc[k]) for k in keys if k in desc)


def run_theorem2(cfg: ExperimentConfig, out: Path, jobs: int) -> list[Check]:
    items = [(cfg, d, f, p) for d, f in _fields(cfg) for p in cfg.p]
    reports = pmap(_theorem2_job, items, jobs)
    atomic_write_with(out / "theorem2.csv", lambda t: write_sweep_csv(reports, t))
    write_json(out / "theorem2.json", [r.to_dict() for r in reports])
    first = items[0][2]
    render_nodal_svg(first, nodal_length(first), out / "theorem2_nodal.svg")
    checks = []
    for r in reports:
        v = r.values
        if "dual_bound" in v:
            checks.append(Check(f"primal>=dual {_tag(r.descriptor)}", v["dual_bound"] <= v["w_p"] * (1 + 1e-9), f"dual={v['dual_bound']:.6g} primal={v['w_p']:.6g}"))
    if cfg.family == "sine":
        tol = _tol(cfg, "ratio_rel", 0.10)
        for r in reports:
            m = r.descriptor["m"]
            checks.append(Check(f"ratio m={m} p={r.descriptor['p']}", abs(r.ratio - 0.5) <= tol * 0.5 if r.descriptor["p"] == 1 else r.ratio > 0, f"ratio={r.ratio:.6g}"))
            if r.descriptor["p"] == 1:
                w_ref = 8 * math.pi / m
                checks.append(Check(f"W1 m={m}", abs(r.values["w_p"] / w_ref - 1) <= _tol(cfg, "w1_rel", 0.03), f"W1={r.values['w_p']:.6g} ref={w_ref:.6g}"))
                h_ref = 4 * math.pi * m
                checks.append(Check(f"H1 m={m}", abs(r.values["h1"] / h_ref - 1) <= _tol(cfg, "h1_rel", 0.01), f"H1={r.values['h1']:.6g} ref={h_ref:.6g}"))
        for p in cfg.p:
            rs = [r.ratio for r in reports if r.descriptor["p"] == p]
            spread = (max(rs) - min(rs)) / min(rs)
            checks.append(Check(f"ratio spread p={p}", spread < tol, f"spread={spread:.4g}"))
    else:
        floor = _tol(cfg, "ratio_floor", 0.05)
        worst = min(r.ratio for r in reports)
        checks.append(Check("min ratio", worst > floor, f"min={worst:.6g} floor={floor}"))
    return checks


def run_theorem1(cfg: ExperimentConfig, out: Path, jobs: int) -> list[Check]:
    checks = []
    if cfg.family == "sine":
        reports = pmap(_sine_theorem1_job, [(cfg, m) for m in cfg.m], jobs)
        alpha, _ = exponent_scan(reports)
        tol = _tol(cfg, "alpha_abs", 0.1)
        checks.append(Check("alpha", abs(alpha - 0.5) <= tol, f"alpha={alpha:.6g}"))
        summary = {"alpha_fit": alpha}
    else:
        items = [(cfg, n, s) for n in cfg.n for s in cfg.seeds]
        reports = pmap(_theorem1_job, items, jobs)
        summary = {}
    floor = _tol(cfg, "ratio_floor", 0.1)
    heat_factor = _tol(cfg, "heat_factor", 3.0)
    for r in reports:
        d = r.descriptor
        checks.append(Check(f"ratio n={d['n']} seed={d.get('seed')}", r.ratio >= floor, f"ratio={r.ratio:.6g}"))
        checks.append(
            Check(
                f"heat bound n={d['n']} seed={d.get('seed')}",
                r.values["heat_constant"] <= heat_factor,
                f"W1/bound={r.values['heat_constant']:.6g}",
            )
        )
    summary["heat_constant_max"] = max(r.values["heat_constant"] for r in reports)
    atomic_write_with(out / "theorem1.csv", lambda t: write_sweep_csv(reports, t))
    write_json(out / "theorem1.json", {"summary": summary, "reports": [r.to_dict() for r in reports]})
    return checks


PROOF_COLUMNS = ["family", "n", "seed", "p", "l1", "h1", "proof_sum", "holder_lhs", "holder_rhs", "holder_gap", "kappa", "component_margin", "ok"]


def run_proof_chain(cfg: ExperimentConfig, out: Path, jobs: int) -> list[Check]:
    items = [(cfg, d, f, p) for d, f in _fields(cfg) for p in cfg.p]
    results = pmap(_proof_job, items, jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROOF_COLUMNS)
    checks = []
    for desc, r in results:
        w.writerow(
            [desc["family"], desc.get("n", ""), desc.get("seed", ""), "%.12g" % r.p]
            + ["%.12g" % x for x in (r.l1, r.h1, r.proof_sum, r.holder_lhs, r.holder_rhs, r.holder_gap, r.kappa, r.component_margin)]
            + [int(r.ok)]
        )
        tag = f"{desc['family']} n={desc.get('n', '')} seed={desc.get('seed', '')} p={r.p:g}"
        checks.append(Check(f"holder {tag}", r.holder_ok, f"gap={r.holder_gap:.6g}"))
        checks.append(Check(f"kappa {tag}", r.kappa > 0, f"kappa={r.kappa:.6g}"))
        if desc["family"] == "sine" and r.p == 1:
            eq = _tol(cfg, "equality_rel", 0.05)
            checks.append(Check(f"equality {tag}", abs(r.holder_gap - 1) <= eq, f"gap={r.holder_gap:.6g}"))
    atomic_write_text(out / "proof_chain.csv", buf.getvalue())
    write_json(out / "proof_chain.json", [dict(d, **r.to_dict()) for d, r in results])
    return checks


def run_lemma(cfg: ExperimentConfig, out: Path, jobs: int) -> list[Check]:
    rows = lemma_sweep(levels=cfg.lemma_levels)
    atomic_write_with(out / "lemma.csv", lambda t: write_lemma_csv(rows, t))
    top = max(r.ratio for r in rows if r.precondition_ok)
    disk = min((r for r in rows if r.shape == "disk"), key=lambda r: r.eps)
    c = _tol(cfg, "lemma_c", 2.0)
    return [
        Check("max ratio", top <= c, f"max={top:.6g} c={c}"),
        Check("disk small-eps limit", abs(disk.ratio - 1) <= _tol(cfg, "disk_limit_rel", 0.05), f"ratio={disk.ratio:.6g} eps={disk.eps:.4g}"),
    ]


def run_proposition(cfg: ExperimentConfig, out: Path, jobs: int) -> list[Check]:
    from .sphere_design import fibonacci_points, measure, proposition_sweep, write_proposition_csv

    n = cfg.n[0]
    pts = fibonacci_points(n)
    basis = None
    if cfg.resolution:
        grid = make_grid(Domain.sphere(), cfg.resolution)
        L = cfg.resolution // 2
        basis = explicit_basis(grid, max(cfg.basis_size, (L + 1) ** 2) if not cfg.basis_size else cfg.basis_size)
    rep = proposition_sweep(n, cfg.t_grid, basis=basis, c=cfg.regime_c, pts=pts)
    atomic_write_with(out / "proposition.csv", lambda t: write_proposition_csv(rep, t))
    write_json(out / "proposition.json", rep.to_dict())
    seg = measure(pts, min(cfg.t_grid), keep_segments=True).segments
    render_points_svg(pts.lonlat, seg, out / "proposition_nodal.svg")
    worst_int = max(abs(r.integral) / r.l1 for r in rep.rows)
    return [
        Check("H1 slope", abs(rep.h1_slope - 0.5) <= _tol(cfg, "h1_slope_abs", 0.1), f"slope={rep.h1_slope:.6g}"),
        Check("Linf slope", abs(rep.linf_slope + 1) <= _tol(cfg, "linf_slope_abs", 0.1), f"slope={rep.linf_slope:.6g}"),
        Check("mean zero", worst_int <= _tol(cfg, "mean_rel", 1e-6), f"max |int f|/||f||_1={worst_int:.3g}"),
    ]


def run_transport_selftest(cfg: ExperimentConfig, out: Path, jobs: int) -> list[Check]:
    from .nodal import signed_parts
    from .transport import DiscreteMeasure, field_to_measure, solve_exact, solve_regularized, w1_dual_bound

    sc = _solver(cfg)
    rows = []
    checks = []
    grid = make_grid(Domain.torus(), cfg.resolution)
    for m in cfg.m:
        g, h = signed_parts(sine_field(grid, m))
        mu, nu = field_to_measure(g, sc.max_support), field_to_measure(h, sc.max_support)
        plan = solve_exact(mu, nu, 1.0, cap=sc.cap)
        dual = w1_dual_bound(mu, nu, plan)
        ref = 8 * math.pi / m
        rel = plan.cost / ref - 1
        rows.append([f"sine m={m}", plan.cost, ref, dual, rel])
        checks.append(Check(f"W1 sine m={m}", abs(rel) <= _tol(cfg, "w1_rel", 0.03), f"rel={rel:.4g}"))
        checks.append(Check(f"dual sine m={m}", dual <= plan.cost * (1 + 1e-9) and dual >= plan.cost * (1 - _tol(cfg, "gap_rel", 0.03)), f"dual/primal={dual / plan.cost:.8g}"))
    rng = np.random.default_rng(cfg.seeds[0] if cfg.seeds else 0)
    dom = Domain.torus()
    worst_sym = worst_tri = 0.0
    for _ in range(20):
        ms = []
        for _k in range(3):
            k = int(rng.integers(2, 21))
            ms.append(DiscreteMeasure(dom, rng.uniform(0, dom.side, (k, 2)), np.full(k, 1.0 / k)))
        a, b, c = ms
        ab = solve_exact(a, b).cost
        ba = solve_exact(b, a).cost
        ac = solve_exact(a, c).cost
        cb = solve_exact(c, b).cost
        worst_sym = max(worst_sym, abs(ab - ba))
        worst_tri = max(worst_tri, ab - (ac + cb))
    rows.append(["symmetry max |W(a,b)-W(b,a)|", worst_sym, 0.0, "", ""])
    rows.append(["triangle max W(a,b)-W(a,c)-W(c,b)", worst_tri, 0.0, "", ""])
    checks.append(Check("symmetry", worst_sym <= 1e-9, f"max={worst_sym:.3g}"))
    checks.append(Check("triangle", worst_tri <= 1e-9, f"max excess={worst_tri:.3g}"))
    p1 = DiscreteMeasure(dom, [[1.0, 1.0]], [1.0])
    p2 = DiscreteMeasure(dom, [[2.0, 1.5]], [1.0])
    d = math.hypot(1.0, 0.5)
    reg_cost, _ = solve_regularized(p1, p2, 1.0, reg=1e-3 * d)
    rows.append(["sinkhorn two points", reg_cost, d, "", reg_cost / d - 1])
    checks.append(Check("sinkhorn two points", abs(reg_cost / d - 1) <= 0.01, f"cost={reg_cost:.8g} d={d:.8g}"))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "cost", "reference", "dual", "rel_err"])
    for r in rows:
        w.writerow([r[0]] + [("%.12g" % x) if isinstance(x, float) else x for x in r[1:]])
    atomic_write_text(out / "transport_selftest.csv", buf.getvalue())
    return checks


RUNNERS = {
    "theorem2": run_theorem2,
    "theorem1": run_theorem1,
    "proof-chain": run_proof_chain,
    "lemma": run_lemma,
    "proposition": run_proposition,
    "transport-selftest": run_transport_selftest,
}


def run(cfg: ExperimentConfig, jobs: int | None = None, stream=None) -> int:
    """Execute ``cfg``; return the process exit status."""
    stream = stream or sys.stdout
    cfg = cfg.with_defaults()
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    checks = RUNNERS[cfg.command](cfg, out, resolve_jobs(jobs))
    write_json(out / f"{cfg.command}_checks.json", [c.__dict__ for c in checks])
    atomic_write_text(out / "config.json", cfg.to_json() + "\n")
    for c in checks:
        stream.write(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}\n")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_FAIL


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlab", description="Transport and nodal-length experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="base seed; seeds become seed, seed+1, ...")
    ap.add_argument("--jobs", type=int, help="worker processes (default: NLAB_JOBS or 1)")
    ap.add_argument("--family", choices=("sine", "random", "bump"))
    ap.add_argument("--m", type=_int_list, help="comma-separated sine frequencies")
    ap.add_argument("--n", type=_int_list, help="comma-separated mode indices / point counts")
    ap.add_argument("--p", type=_float_list, help="comma-separated transport exponents")
    ap.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
    ap.add_argument("--resolution", type=int)
    ap.add_argument("--t-grid", type=_float_list, dest="t_grid")
    return ap


def config_from_args(args) -> ExperimentConfig:
    if args.config:
        text = Path(args.config).read_text()
        cfg = ExperimentConfig.from_json(text)
        if cfg.command != args.command:
            raise ConfigError([f"config command {cfg.command!r} does not match {args.command!r}"])
    else:
        cfg = ExperimentConfig(command=args.command)
    updates = {}
    for key in ("family", "m", "n", "p", "seeds", "resolution", "t_grid", "out"):
        v = getattr(args, key, None)
        if v is not None:
            updates[key] = v
    cfg = replace(cfg, **updates)
    if args.seed is not None:
        cfg = replace(cfg, seeds=[args.seed + k for k in range(max(1, len(cfg.seeds)))])
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        cfg = config_from_args(args)
        return run(cfg, args.jobs)
    except ConfigError as e:
        for p in e.problems:
            sys.stderr.write(f"nlab {args.command}: config error: {p}\n")
        return EXIT_USAGE
    except OSError as e:
        sys.stderr.write(f"nlab {args.command}: {e}\n")
        return EXIT_ERROR
    except NlabError as e:
        sys.stderr.write(f"nlab {args.command}: {type(e).__name__}: {e}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
