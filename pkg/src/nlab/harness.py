"""End-to-end checks of the transport/nodal-length inequalities.

The central quantity is the ratio ``W_p(g, h) * H1(f = 0) / (||f||_1^(1+1/p) / ||f||_inf)``
for ``g = max(f, 0)``, ``h = -min(f, 0)``, together with the heat-flow upper
bound for ``W_1`` and the resulting nodal-length lower bound for fields that
are orthogonal to the low modes.  Implicit constants are never assumed: they
come out of the measurements as ratios and fitted factors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import Domain, ScalarField, integrate, lp_norm, make_grid
from .errors import (
    DegenerateFieldError,
    InsufficientDataError,
    InvalidSpectrumError,
    NotOrthogonalError,
    UnbalancedFieldError,
)
from .nodal import components, nodal_length, proof_sum, signed_parts
from .spectral import SpectralBasis, closed_form_eigenvalues, random_high_frequency
from .transport import (
    DEFAULT_CAP,
    DEFAULT_MAX_SUPPORT,
    DiscreteMeasure,
    field_to_measure,
    solve_exact,
    solve_regularized,
    w1_dual_bound,
)

BALANCE_REL = 1e-4
ORTHO_TOL = 1e-6
LEMMA_C = 2.0
HOLDER_SLACK = 0.05


@dataclass(frozen=True)
class SolverConfig:
    """How transport costs are computed inside the harness."""

    max_support: int = DEFAULT_MAX_SUPPORT
    cap: int = DEFAULT_CAP
    reg: float = 5e-3
    max_iter: int = 5000


@dataclass(frozen=True)
class InequalityReport:
    experiment: str
    descriptor: dict
    lhs: float
    rhs: float
    ratio: float
    values: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# --------------------------------------------------------------------------
# shared pieces


def _norms(f: ScalarField) -> dict:
    return {"l1": lp_norm(f, 1), "l2": lp_norm(f, 2), "linf": lp_norm(f, math.inf)}


def _balanced_measures(f: ScalarField, cfg: SolverConfig):
    """Positive/negative parts as measures, both scaled to their mean mass.

    The imbalance left by quadrature (at most ``1e-4`` of ``||f||_1``) is
    spread proportionally over both measures.
    """
    norms = _norms(f)
    if norms["linf"] == 0:
        raise DegenerateFieldError("f vanishes identically")
    mean = integrate(f)
    if abs(mean) > BALANCE_REL * norms["l1"]:
        raise UnbalancedFieldError(f"integral of f is {mean:.3e}, more than 1e-4 of ||f||_1 = {norms['l1']:.3e}")
    g, h = signed_parts(f)
    mu = field_to_measure(g, cfg.max_support)
    nu = field_to_measure(h, cfg.max_support)
    m = 0.5 * (mu.total_mass + nu.total_mass)
    mu = DiscreteMeasure(mu.domain, mu.support, mu.weights * (m / mu.total_mass))
    nu = DiscreteMeasure(nu.domain, nu.support, nu.weights * (m / nu.total_mass))
    return mu, nu, norms


def transport_cost(mu, nu, p: float, cfg: SolverConfig):
    """``(W_p, plan or None, method)`` using the exact solver when it fits."""
    if len(mu) + len(nu) <= cfg.cap:
        plan = solve_exact(mu, nu, p, cap=cfg.cap)
        return plan.cost, plan, "exact"
    cost, _ = solve_regularized(mu, nu, p, reg=cfg.reg, max_iter=cfg.max_iter)
    return cost, None, "regularized"


# --------------------------------------------------------------------------
# transport inequality


def theorem2_report(
    f: ScalarField,
    p: float = 1.0,
    cfg: SolverConfig | None = None,
    descriptor: dict | None = None,
) -> InequalityReport:
    """``W_p(g, h) * H1(f = 0)`` against ``||f||_1^(1+1/p) / ||f||_inf``.

    Parameters
    ----------
    f : ScalarField
        Mean-zero field (``|int f| <= 1e-4 ||f||_1``).
    p : float
        Transport exponent, ``p >= 1``.
    """
    cfg = cfg or SolverConfig()
    mu, nu, norms = _balanced_measures(f, cfg)
    w, plan, method = transport_cost(mu, nu, p, cfg)
    h1 = nodal_length(f).total_length
    lhs = w * h1
    rhs = norms["l1"] ** (1 + 1 / p) / norms["linf"]
    vals = {"w_p": w, "h1": h1, **norms, "solver": method, "support": [len(mu), len(nu)]}
    if p == 1.0 and plan is not None:
        vals["dual_bound"] = w1_dual_bound(mu, nu, plan)
    desc = {"domain": f.domain.to_dict(), "grid_n": f.grid.n, "p": p, **(descriptor or {})}
    return InequalityReport("theorem2", desc, lhs, rhs, lhs / rhs, vals, {"balance_rel": BALANCE_REL})


@dataclass(frozen=True)
class ProofChainReport:
    p: float
    w_p: float
    h1: float
    l1: float
    linf: float
    proof_sum: float
    kappa: float
    holder_lhs: float
    holder_rhs: float
    holder_ok: bool
    holder_gap: float
    component_ok: bool
    component_margin: float
    components: int

    @property
    def ok(self) -> bool:
        return self.kappa > 0 and self.holder_ok and self.component_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def proof_chain_check(
    f: ScalarField,
    p: float = 1.0,
    cfg: SolverConfig | None = None,
    slack: float = HOLDER_SLACK,
    with_transport: bool = True,
) -> ProofChainReport:
    """Measure the intermediate inequalities of the transport lower bound.

    (a) ``kappa = W_p^p * ||f||_inf^p / S_p`` with ``S_p = proof_sum`` must be
        positive; it is the constant in ``W_p^p >= kappa S_p / ||f||_inf^p``.
    (b) Hoelder: ``(||f||_1 / 2)^(p+1) <= S_p * H1^p`` up to ``slack``.
    (c) each positive component has ``delta <= c eps_max |dD| ||f||_inf``
        with ``eps_max = sqrt(|D|) / 8`` and ``c = 2``, i.e. the
        enlargement width needed to hold its mass is admissible for the
        enlargement bound.
    """
    cfg = cfg or SolverConfig()
    norms = _norms(f)
    if norms["linf"] == 0:
        raise DegenerateFieldError("f vanishes identically")
    stats = components(f)
    s = proof_sum(stats, p)
    h1 = nodal_length(f).total_length
    if with_transport:
        mu, nu, _ = _balanced_measures(f, cfg)
        w, _, _ = transport_cost(mu, nu, p, cfg)
        kappa = w**p * norms["linf"] ** p / s
    else:
        w, kappa = float("nan"), float("nan")
    hl = (norms["l1"] / 2) ** (p + 1)
    hr = s * h1**p
    margins = [
        LEMMA_C * math.sqrt(c.area) / 8 * c.boundary_length * norms["linf"] / c.excess_mass
        for c in stats
        if c.sign > 0 and c.excess_mass > 0
    ]
    margin = min(margins) if margins else float("inf")
    return ProofChainReport(
        p=p,
        w_p=w,
        h1=h1,
        l1=norms["l1"],
        linf=norms["linf"],
        proof_sum=s,
        kappa=kappa,
        holder_lhs=hl,
        holder_rhs=hr,
        holder_ok=hl <= hr * (1 + slack),
        holder_gap=hl / hr,
        component_ok=margin >= 1.0,
        component_margin=margin,
        components=len(stats),
    )


# --------------------------------------------------------------------------
# heat-flow bound and the nodal-length lower bound


def _optimal_time(lam: float, l1: float, l2: float) -> tuple[float, bool]:
    if not lam > 0:
        raise InvalidSpectrumError(f"eigenvalue must be positive, got {lam}")
    if not (l1 > 0 and l2 > 0):
        raise DegenerateFieldError("norms must be positive")
    arg = math.sqrt(lam) * l2 / l1
    if arg < math.e:
        return 1.0 / lam, True
    return math.log(arg) / lam, False


def optimal_time(lam: float, l1: float, l2: float) -> float:
    """``t = log(sqrt(lam) ||f||_2 / ||f||_1) / lam``, clamped to ``1/lam``.

    The clamp applies when the log argument is below ``e``.
    """
    return _optimal_time(lam, l1, l2)[0]


def heat_bound_value(lam: float, l1: float, l2: float, t: float) -> float:
    return math.sqrt(t) * l1 + math.exp(-lam * t) * l2


def heat_upper_bound(f: ScalarField, basis: SpectralBasis, n: int, t: float) -> float:
    """``sqrt(t) ||f||_1 + exp(-lam_n t) ||f||_2`` for ``f`` orthogonal to modes ``1 .. n-1``.

    Raises
    ------
    NotOrthogonalError
        if some ``|<f, phi_k>|``, ``k < n``, exceeds ``1e-6 ||f||_2``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    l2 = lp_norm(f, 2)
    if n > 1:
        c = basis.coefficients(f, n - 1)
        worst = float(np.max(np.abs(c)))
        if worst > ORTHO_TOL * max(l2, 1e-300):
            raise NotOrthogonalError(f"|<f, phi_k>| = {worst:.3e} for some k < {n}")
    return heat_bound_value(basis.eigenvalue(n), lp_norm(f, 1), l2, t)


def theorem1_rhs(n: int, l1: float, l2: float, linf: float) -> float:
    """``sqrt(n / log n) * log(e + n l2 / l1)^(-1/2) * l1 / linf`` (unit constant)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return math.sqrt(n / math.log(n)) / math.sqrt(math.log(math.e + n * l2 / l1)) * l1 / linf


def theorem1_for_field(
    f: ScalarField,
    n: int,
    lam: float,
    cfg: SolverConfig | None = None,
    descriptor: dict | None = None,
) -> InequalityReport:
    """Nodal-length lower bound for a field orthogonal to modes ``1 .. n-1``.

    ``lam`` is the spectral floor used in the heat bound.  The report also
    holds the measured ``W_1``, the heat bound at the optimal time and their
    quotient ``heat_constant``.
    """
    cfg = cfg or SolverConfig()
    mu, nu, norms = _balanced_measures(f, cfg)
    w1, plan, method = transport_cost(mu, nu, 1.0, cfg)
    h1 = nodal_length(f).total_length
    t, clamped = _optimal_time(lam, norms["l1"], norms["l2"])
    bound = heat_bound_value(lam, norms["l1"], norms["l2"], t)
    rhs = theorem1_rhs(n, norms["l1"], norms["l2"], norms["linf"])
    vals = {
        "w1": w1,
        "h1": h1,
        **norms,
        "lambda_n": lam,
        "t_opt": t,
        "t_clamped": clamped,
        "heat_bound": bound,
        "heat_constant": w1 / bound,
        "solver": method,
    }
    desc = {"domain": f.domain.to_dict(), "grid_n": f.grid.n, "n": n, "p": 1.0, **(descriptor or {})}
    return InequalityReport("theorem1", desc, h1, rhs, h1 / rhs, vals)


def theorem1_report(
    seed: int,
    basis: SpectralBasis,
    n: int,
    bandwidth: int,
    cfg: SolverConfig | None = None,
) -> InequalityReport:
    """Draw ``random_high_frequency(basis, n, bandwidth, seed)`` and measure it."""
    f = random_high_frequency(basis, n, bandwidth, seed)
    desc = {"family": "random", "seed": int(seed), "bandwidth": int(bandwidth), "basis_size": len(basis)}
    return theorem1_for_field(f, n, basis.eigenvalue(n), cfg, desc)


def sine_field(grid, m: int) -> ScalarField:
    return ScalarField(grid, np.sin(m * grid.x))


def sine_theorem1(m: int, grid_n: int = 256, cfg: SolverConfig | None = None) -> InequalityReport:
    """``sin(m x)`` on the ``2 pi`` torus with ``n = m^2``.

    ``sin(m x)`` is orthogonal to every mode below eigenvalue ``m^2``, in
    particular to modes ``1 .. m^2 - 1``; ``lam_n`` is the true ``m^2``-th
    torus eigenvalue.
    """
    dom = Domain.torus()
    grid = make_grid(dom, grid_n)
    n = m * m
    lam = float(closed_form_eigenvalues(dom, n)[-1])
    return theorem1_for_field(sine_field(grid, m), n, lam, cfg, {"family": "sine", "m": m, "seed": 0})


# --------------------------------------------------------------------------
# exponents


def _triples(reports):
    out = []
    for r in reports:
        if isinstance(r, InequalityReport):
            n = r.descriptor.get("n")
            out.append((n, r.values["h1"], r.values["l1"], r.values["linf"]))
        else:
            out.append(tuple(r))
    return out


def exponent_scan(reports) -> tuple[float, float]:
    """Log-log slopes ``(alpha, beta)`` of ``H1`` against ``n`` and ``||f||_1/||f||_inf``.

    When both regressors vary they are fitted jointly; when one is constant
    across the sweep its slope is returned as ``nan``.  Reports may also be
    plain ``(n, h1, l1, linf)`` tuples.
    """
    rows = _triples(reports)
    if len(rows) < 4:
        raise InsufficientDataError(f"need at least 4 sweep points, got {len(rows)}")
    arr = np.array(rows, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InsufficientDataError("sweep contains zero or undefined lengths or norms")
    y = np.log(arr[:, 1])
    xn = np.log(arr[:, 0])
    xr = np.log(arr[:, 2] / arr[:, 3])
    cols = []
    names = []
    for name, x in (("alpha", xn), ("beta", xr)):
        if np.ptp(x) > 1e-9 * max(1.0, np.max(np.abs(x))):
            cols.append(x)
            names.append(name)
    if not cols:
        raise InsufficientDataError("degenerate sweep: neither n nor the norm ratio varies")
    A = np.column_stack([np.ones(len(y)), *cols])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = dict(zip(names, coef[1:]))
    return float(fit.get("alpha", float("nan"))), float(fit.get("beta", float("nan")))


# --------------------------------------------------------------------------
# tables

SWEEP_COLUMNS = ["n", "p", "seed", "lhs", "rhs", "ratio", "w1", "h1", "l1", "l2", "linf", "t_opt", "lambda_n"]


def sweep_row(r: InequalityReport) -> list:
    v = r.values
    d = r.descriptor
    w = v.get("w1", v.get("w_p"))
    return [
        d.get("n", ""),
        d.get("p", 1.0),
        d.get("seed", ""),
        r.lhs,
        r.rhs,
        r.ratio,
        w,
        v.get("h1"),
        v.get("l1"),
        v.get("l2"),
        v.get("linf"),
        v.get("t_opt", ""),
        v.get("lambda_n", ""),
    ]


def _fmt(x):
    if isinstance(x, float):
        return "%.12g" % x
    return str(x)


def write_sweep_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in reports:
            w.writerow([_fmt(x) for x in sweep_row(r)])
