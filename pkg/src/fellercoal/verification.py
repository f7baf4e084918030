"""Registry of end-to-end verification checks run by ``fellercoal verify``.

Each check compares an analytic quantity with an independent route to the
same number (simulation, enumeration, quadrature, finite differences) and
returns :class:`CheckResult` records.  Tolerances are fixed here so that the
command line and the test suite apply the same thresholds.
"""
from __future__ import annotations

import itertools
import math
import subprocess
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from . import coalescent as co
from . import model, rrp, simulation as sim, special
from .coalescent import DiscretePmf
from .gof import chi_square_discrete, ks_continuous
from .model import ModelParams, TimeWindow
from .rng import DEFAULT_SEED, SeededSource
from .special import QuadratureSpec, integrate

P_VALUE_FLOOR = 1e-3
N_MC = 100_000

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["seed", "passed", "checks"],
    "properties": {
        "seed": {"type": "integer"},
        "passed": {"type": "boolean"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["group", "name", "statistic", "tolerance", "comparison", "passed"],
                "properties": {
                    "group": {"type": "string"},
                    "name": {"type": "string"},
                    "statistic": {"type": ["number", "null"]},
                    "tolerance": {"type": ["number", "null"]},
                    "comparison": {"enum": ["<=", ">=", "<", ">", "=="]},
                    "passed": {"type": "boolean"},
                    "details": {"type": "object"},
                },
            },
        },
    },
}


@dataclass
class CheckResult:
    """One pass/fail comparison: ``statistic <comparison> tolerance``."""

    name: str
    statistic: float
    tolerance: float
    comparison: str
    passed: bool
    details: dict = field(default_factory=dict)
    group: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("statistic", "tolerance"):
            value = out[key]
            out[key] = None if value is None or not math.isfinite(value) else float(value)
        out["passed"] = bool(out["passed"])
        return out

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.group}/{self.name}: statistic={self.statistic:.6g} "
                f"{self.comparison} {self.tolerance:.6g}")


def _upper(name, value, tol, **details):
    return CheckResult(name, float(value), float(tol), "<=", bool(value <= tol), details)


def _lower(name, value, tol, **details):
    return CheckResult(name, float(value), float(tol), ">", bool(value > tol), details)


def _report_check(name, report):
    return _lower(name, report.p_value, P_VALUE_FLOOR, n_samples=report.n_samples,
                  chi_square=report.statistic, bins=len(report.bins),
                  deficit_mass=report.deficit_mass)


def _source(seed, stream):
    return SeededSource(seed, stream)


# -- individual check groups --------------------------------------------------

def check_ancestor_count_law(seed=DEFAULT_SEED, n_mc=N_MC):
    out = []
    for i, alpha in enumerate((-1.0, 0.0, 0.8)):
        window, params = TimeWindow(1.0, 0.5), ModelParams(alpha, 1.2)
        draws = sim.sample_population_ancestors(window, params, n_mc, _source(seed, 100 + i))
        pmf = co.population_ancestors_distribution(window, params)
        out.append(_report_check(f"two-step-sampler-alpha={alpha:g}", chi_square_discrete(pmf, draws)))
    window = TimeWindow(1.0, 1.0)
    params = ModelParams(0.8, 1.2)
    draws = sim.sample_population_ancestors(window, params, n_mc, _source(seed, 110))
    nu = params.x0 * model.mu(1.0, 0.8)
    ks = np.arange(0, int(stats.poisson.isf(1e-14, nu)) + 2)
    pois = DiscretePmf(0, stats.poisson.pmf(ks, nu))
    out.append(_report_check("s=t-is-poisson", chi_square_discrete(pois, draws)))
    return out


def _pgf_coefficients(nu, p, kmax, points=4096):
    # Taylor coefficients of exp(-nu + nu (1-p) z / (1 - p z)) by a DFT on |z| = 1
    z = np.exp(2j * np.pi * np.arange(points) / points)
    values = np.exp(-nu + nu * (1 - p) * z / (1 - p * z))
    return np.real(np.fft.fft(values) / points)[: kmax + 1]


def check_polya_aeppli_closed_form(seed=DEFAULT_SEED):
    out = []
    ks = np.arange(0, 51)
    for nu, p in ((0.5, 0.1), (2.0, 0.5), (5.0, 0.9)):
        closed = special.polya_aeppli_pmf(ks, nu, p)
        oracle = _pgf_coefficients(nu, p, 50)
        err = float(np.max(np.abs(closed - oracle)))
        out.append(_upper(f"pgf-inversion-nu={nu:g}-p={p:g}", err, 1e-10))
    return out


def _composition_counts(n, k):
    """Count compositions of ``n`` into ``k`` nonnegative parts by their number of nonzero parts."""
    rows = np.zeros((1, 0), dtype=np.int8)
    remaining = np.array([n], dtype=np.int16)
    for part in range(k):
        if part == k - 1:
            rows = np.hstack([rows, remaining[:, None].astype(np.int8)])
            break
        reps = remaining + 1
        idx = np.repeat(np.arange(rows.shape[0]), reps)
        offsets = np.arange(idx.size) - np.repeat(np.cumsum(reps) - reps, reps)
        rows = np.hstack([rows[idx], offsets[:, None].astype(np.int8)])
        remaining = (remaining[idx] - offsets).astype(np.int16)
    nonzero = np.count_nonzero(rows, axis=1)
    return np.bincount(nonzero, minlength=n + 1), rows.shape[0]


def check_sample_given_population(seed=DEFAULT_SEED, max_size=12):
    mismatches = 0
    cases = 0
    for n in range(1, max_size + 1):
        for k in range(1, max_size + 1):
            counts, total = _composition_counts(n, k)
            for j in range(1, n + 1):
                cases += 1
                if Fraction(int(counts[j]), total) != co.sample_given_population_pmf(j, n, k, exact=True):
                    mismatches += 1
    return [CheckResult("exhaustive-compositions", mismatches, 0, "==", mismatches == 0,
                        {"cases": cases, "max_n": max_size, "max_k": max_size})]


def check_sample_ancestor_law(seed=DEFAULT_SEED, n_mc=N_MC):
    out = []
    window, params = TimeWindow(1.0, 0.5), ModelParams(0.8, 1.2)
    for n in (2, 3, 6):
        pmf = co.sample_ancestors_distribution(n, window, params)
        draws = sim.sample_sample_ancestors(n, window, params, n_mc, _source(seed, 200 + n))
        out.append(_report_check(f"composed-sampler-n={n}", chi_square_discrete(pmf, draws)))
        out.append(_upper(f"normalisation-n={n}", abs(pmf.listed_mass() - 1.0), 1e-10))
    return out


def check_quasi_stationary(seed=DEFAULT_SEED):
    out = []
    alpha, s = -1.0, 0.7
    window, params = TimeWindow(1000.0, s), ModelParams(alpha, 1.0)
    ks = np.arange(1, 60)
    finite = co.population_ancestors_pmf(ks, window, params, conditioned_on_survival=True)
    limit = co.qs_population_ancestors_pmf(ks, s, alpha)
    out.append(_upper("large-t-conditioned-limit", float(np.max(np.abs(finite - limit))), 1e-6))
    for k in (2, 3, 4):
        quad = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-9)
        area = integrate(lambda w: co.qs_Wk_survival(w, k, alpha), 0.0, math.inf, quad)
        target = co.qs_mean_Wk(k, alpha)
        out.append(_upper(f"mean-from-survival-k={k}", abs(area / target - 1.0), 1e-4))
    for j, n in ((2, 2), (2, 5), (4, 7)):
        quad = QuadratureSpec(abs_tol=1e-11, rel_tol=1e-8)

        def f(svals):
            return np.array([co.qs_sample_ancestors_pmf(j, n, sv, alpha) for sv in np.atleast_1d(svals)])
        area = integrate(f, 0.0, math.inf, quad)
        target = 1.0 / (abs(alpha) * j * (j - 1))
        out.append(_upper(f"sample-occupation-j={j}-n={n}", abs(area / target - 1.0), 1e-4))
    return out


def check_rate_identities(seed=DEFAULT_SEED):
    out = []
    alpha, t = 0.7, 2.0
    worst = 0.0
    for u in (0.0, 0.3, 1.0, 1.5):
        ref = rrp.lambda_coal(u, t, alpha)
        for s in np.linspace(0.01, t - u - 0.01, 9):
            rates = rrp.bd_rates(s, alpha)
            worst = max(worst, abs(rrp.lambda_eff(u, t - s, rates) - ref) / ref)
    out.append(_upper("s-independence-of-birth-rate", worst, 1e-12))
    s, a = 0.01, 1.0
    taus = np.array([s, 2 * s, 10 * s])
    back = rrp.tau_of_rho(rrp.rho_of_tau(taus, s, a), s, a)
    out.append(_upper("rho-tau-round-trip", float(np.max(np.abs(back - taus))), 1e-12))
    worst = 0.0
    for tau in (0.05, 0.3, 1.0, 3.0):
        h = 1e-5 * tau
        fd = (rrp.rho_of_tau(tau + h, s, a) - rrp.rho_of_tau(tau - h, s, a)) / (2 * h)
        worst = max(worst, abs(fd - rrp.mu_eff(tau, a)))
    out.append(_upper("rho-derivative-is-death-rate", worst, 1e-6))
    return out


def check_nhpp_coalescent_times(seed=DEFAULT_SEED, n_mc=N_MC):
    out = []
    x, alpha = 1.0, 1.0
    for i, tau in enumerate((0.3, 1.0)):
        draws = sim.sample_coalescent_times_nhpp_batch(x, alpha, tau, n_mc, _source(seed, 300 + i))
        counts = np.sum(draws > tau, axis=1)
        z = rrp.cumulative_intensity(tau, x, alpha)
        js = np.arange(1, int(stats.poisson.isf(1e-14, z)) + 2)
        pmf = DiscretePmf(1, rrp.ancestors_at_tau_pmf(js, tau, x, alpha),
                          total_mass=-math.expm1(-z))
        out.append(_report_check(f"points-beyond-tau={tau:g}", chi_square_discrete(pmf, counts)))
    quad = QuadratureSpec(abs_tol=1e-14, rel_tol=1e-12)
    worst = 0.0
    for tau, xx, a in ((0.3, 1.0, 1.0), (0.7, 1.5, 0.9), (2.0, 0.4, 2.5)):
        area = integrate(lambda v: rrp.coalescent_rate(v, xx, a), tau, math.inf, quad)
        exact = rrp.cumulative_intensity(tau, xx, a)
        worst = max(worst, abs(area - exact) / exact)
    out.append(_upper("cumulative-intensity-quadrature", worst, 1e-8))
    return out


def check_sample_coalescent_times(seed=DEFAULT_SEED, n_mc=N_MC):
    out = []
    worst = 0.0
    for j, n, z in itertools.product((1, 2, 3), (3, 5, 8), (0.3, 1.7, 6.0)):
        a = rrp.sample_ancestors_at_z_pmf(j, n, z, "series")
        b = rrp.sample_ancestors_at_z_pmf(j, n, z, "integral")
        worst = max(worst, abs(a - b))
    out.append(_upper("series-vs-integral-grid", worst, 1e-8))
    x, alpha = 1.0, 1.0
    a = rrp.mean_inter_coalescent_sample(2, 3, x, alpha, route="double_integral")
    b = rrp.mean_inter_coalescent_sample(2, 3, x, alpha, route="tau_integral")
    out.append(_upper("mean-double-vs-tau-integral", abs(a / b - 1.0), 1e-5, double=a, tau=b))
    j, n, tau_min = 2, 4, 0.01
    occupancy = sim.sample_sample_inter_coalescent(n, x, alpha, tau_min, n_mc, _source(seed, 400))
    w = occupancy[:, j - 1]
    se = float(w.std(ddof=1) / math.sqrt(n_mc))
    analytic = rrp.mean_inter_coalescent_sample(j, n, x, alpha)
    # mean time below tau_min, which the simulation does not cover
    omitted = integrate(lambda t: np.array([rrp.sample_ancestors_at_tau_pmf(j, n, ti, x, alpha, "integral")
                                            for ti in np.atleast_1d(t)]), 0.0, tau_min)
    out.append(_upper("mean-vs-monte-carlo", abs(w.mean() - analytic) / se, 3.0,
                      monte_carlo=float(w.mean()), analytic=analytic, standard_error=se,
                      omitted_below_tau_min=omitted))
    return out


def _bgw_exact_extinction(scale, generations):
    # iterate the Poisson offspring pgf f(s) = exp(lambda (s - 1)) from 0
    q = 0.0
    for _ in range(generations):
        q = math.exp(scale.lambda_offspring * (q - 1.0))
    return q ** scale.m0


def check_diffusion_limits(seed=DEFAULT_SEED, n_mc=N_MC):
    out = []
    # birth-death limit: (s/2) M at horizon t - s against the Feller transition
    alpha, x0, t, s = 0.5, 1.0, 1.0, 1e-3
    rates = rrp.bd_rates(s, alpha)
    m0 = int(round(2 * x0 / s))
    horizon = t - s
    bd = 0.5 * s * sim.sample_bd_transition(m0, rates, horizon, n_mc, _source(seed, 500))
    params = ModelParams(alpha, 0.5 * s * m0)
    fx = sim.sample_feller_transition(horizon, params, n_mc, _source(seed, 501))
    se_mean = math.sqrt(bd.var() / n_mc + fx.var() / n_mc)
    out.append(_upper("bd-limit-mean", abs(bd.mean() - fx.mean()) / se_mean, 3.0,
                      bd=float(bd.mean()), feller=float(fx.mean())))

    def var_se(v):
        c = v - v.mean()
        return math.sqrt((np.mean(c ** 4) - np.mean(c ** 2) ** 2) / v.size)
    se_var = math.hypot(var_se(bd), var_se(fx))
    out.append(_upper("bd-limit-variance", abs(bd.var() - fx.var()) / se_var, 3.0,
                      bd=float(bd.var()), feller=float(fx.var())))

    # branching-process limit with Poisson offspring
    y0 = 2000
    params = ModelParams(alpha, x0)
    scale = sim.bgw_scale_for(params, y0, "poisson")
    generations = round(model.time_to_generations(t, scale))
    t_eff = model.generations_to_time(generations, scale)
    pop = sim.sample_bgw_population(scale, "poisson", generations, n_mc, _source(seed, 502))
    allowance = 1.0 / y0
    atom = model.extinction_prob(t_eff, params)
    frac = float(np.mean(pop == 0))
    se = math.sqrt(atom * (1 - atom) / n_mc)
    discrete = _bgw_exact_extinction(scale, generations)
    out.append(_upper("bgw-limit-extinction", abs(frac - atom), 3 * se + allowance,
                      empirical=frac, feller_atom=atom, exact_discrete=discrete,
                      discrete_bias=abs(discrete - atom), standard_error=se, allowance=allowance))
    scaled = pop / y0
    mean = model.mean_population(t_eff, params)
    se = float(scaled.std(ddof=1) / math.sqrt(n_mc))
    out.append(_upper("bgw-limit-mean", abs(scaled.mean() - mean), 3 * se + allowance,
                      empirical=float(scaled.mean()), feller=mean, standard_error=se,
                      allowance=allowance))

    # critical process conditioned on survival, scaled by t
    t_big = 200.0
    draws = sim.sample_feller_transition(t_big, ModelParams(0.0, 1.0), n_mc, _source(seed, 503),
                                         conditioned_on_survival=True) / t_big
    ks = ks_continuous(lambda w: -np.expm1(-2.0 * w), draws)
    out.append(_upper("yaglom-exponential", ks.statistic, 0.02, p_value=ks.p_value))
    return out


def check_bd_conditional_law(seed=DEFAULT_SEED, n_mc=N_MC):
    out = []
    rates = rrp.bd_rates(0.5, 1.0)
    u = 1.0
    counts = sim.simulate_bd_final(1, rates, u, n_mc, _source(seed, 600))
    q = rates.lambda_hat * rrp.kendall_b(u, rates)
    ks = np.arange(1, int(math.log(1e-15) / math.log(q)) + 2)
    pmf = DiscretePmf(1, (1 - q) * q ** (ks - 1))
    out.append(_report_check("event-driven-given-survival", chi_square_discrete(pmf, counts[counts > 0])))
    mean = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(n_mc))
    out.append(_upper("event-driven-mean", abs(mean - math.exp(rates.alpha * u)) / se, 3.0,
                      empirical=mean))
    exact = sim.sample_bd_transition(1, rates, u, n_mc, _source(seed, 601))
    out.append(_report_check("closed-form-transition-given-survival",
                             chi_square_discrete(pmf, exact[exact > 0])))
    return out


CLI_DETERMINISM_COMMANDS = (
    ["pmf", "--t", "1", "--s", "0.5", "--alpha", "0.8", "--x0", "1.2"],
    ["pmf", "--t", "1", "--s", "0.5", "--alpha", "0.8", "--x0", "1.2", "--n", "4", "--format", "json"],
    ["qs", "--alpha", "-1", "--s", "0.7", "--n", "4"],
    ["rrp-tree", "--n", "50", "--s", "0.001", "--alpha", "1"],
    ["rrp-tree", "--n", "20", "--s", "0.01", "--alpha", "1", "--format", "csv"],
    ["simulate", "feller", "--t", "1", "--alpha", "0.5", "--x0", "1", "--size", "200"],
    ["simulate", "population-ancestors", "--t", "1", "--s", "0.5", "--alpha", "0.8", "--x0", "1.2",
     "--size", "200"],
    ["simulate", "sample-ancestors", "--t", "1", "--s", "0.4", "--alpha", "0.6", "--x0", "1", "--n", "3",
     "--size", "200"],
    ["simulate", "nhpp", "--x", "1", "--alpha", "1", "--tau-min", "0.2", "--size", "50"],
    ["simulate", "bd", "--s", "0.1", "--alpha", "0.5", "--horizon", "1", "--m0", "2", "--size", "200"],
    ["simulate", "bgw", "--alpha", "0.5", "--x0", "0.5", "--y0", "100", "--generations", "10",
     "--size", "200"],
    ["verify", "--only", "polya-aeppli-closed-form"],
)


def check_cli_determinism(seed=DEFAULT_SEED):
    out = []
    for i, args in enumerate(CLI_DETERMINISM_COMMANDS):
        cmd = [sys.executable, "-m", "fellercoal", *args, "--seed", str(seed)]
        runs = [subprocess.run(cmd, capture_output=True, check=False) for _ in range(2)]
        same = runs[0].stdout == runs[1].stdout and runs[0].returncode == runs[1].returncode
        ok = same and runs[0].returncode == 0 and len(runs[0].stdout) > 0
        out.append(CheckResult(f"run-{i}-{args[0]}", float(not ok), 0.0, "==", ok,
                               {"command": " ".join(args), "bytes": len(runs[0].stdout),
                                "returncode": runs[0].returncode}))
    return out


CHECKS = {
    "ancestor-count-law": check_ancestor_count_law,
    "polya-aeppli-closed-form": check_polya_aeppli_closed_form,
    "sample-given-population": check_sample_given_population,
    "sample-ancestor-law": check_sample_ancestor_law,
    "quasi-stationary": check_quasi_stationary,
    "rate-identities": check_rate_identities,
    "nhpp-coalescent-times": check_nhpp_coalescent_times,
    "sample-coalescent-times": check_sample_coalescent_times,
    "diffusion-limits": check_diffusion_limits,
    "bd-conditional-law": check_bd_conditional_law,
    "cli-determinism": check_cli_determinism,
}


def run_checks(only=None, seed=DEFAULT_SEED) -> dict:
    """Run the selected check groups and return the JSON-ready report."""
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    results = []
    for name in names:
        for res in CHECKS[name](seed=seed):
            res.group = name
            results.append(res)
    return {
        "seed": int(seed),
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
