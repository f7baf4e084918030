import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sci_integrate, stats

from fellercoal import rrp
from fellercoal.coalescent import DiscretePmf
from fellercoal.errors import DomainError
from fellercoal.gof import chi_square_discrete
from fellercoal.model import beta
from fellercoal.rng import SeededSource


# -- matched birth-death rates ----------------------------------------------------

@pytest.mark.parametrize("s,a", [(0.1, 1.0), (0.5, -2.0), (0.3, 1e-9), (2.0, 5.0)])
def test_bd_rates_identities(s, a):
    rates = rrp.bd_rates(s, a)
    assert rates.lambda_hat - rates.mu_hat == pytest.approx(a, rel=1e-9, abs=1e-15)
    assert rates.mu_hat / rates.lambda_hat == pytest.approx(math.exp(-a * s), rel=1e-13)


def test_bd_rates_critical_limit():
    for a in (0.0, 1e-7, -1e-7):
        rates = rrp.bd_rates(0.3, a)
        assert rates.lambda_hat == pytest.approx(1 / 0.3, rel=1e-6)
        assert rates.mu_hat == pytest.approx(1 / 0.3, rel=1e-6)
    with pytest.raises(DomainError):
        rrp.bd_rates(0.0, 1.0)


def test_kendall_b_extinction_probability():
    # mu B(u) is the probability a single founder is extinct by u
    rates = rrp.bd_rates(0.4, 0.9)
    lam, death = rates.lambda_hat, rates.mu_hat
    u = 1.3
    e = math.exp((lam - death) * u)
    assert death * rrp.kendall_b(u, rates) == pytest.approx(death * (e - 1) / (lam * e - death), rel=1e-13)
    assert rrp.kendall_b(0.0, rates) == 0.0


# -- coalescent birth rate ---------------------------------------------------------------

def test_lambda_coal_critical():
    assert rrp.lambda_coal(1.0, 2.0, 0.0) == 1.0
    assert rrp.lambda_coal(1.0, 2.0, 1e-8) == pytest.approx(1.0, rel=1e-7)
    assert rrp.lambda_coal(1.0 - 1e-6, 1.0, 1.0) > 1e6
    with pytest.raises(DomainError):
        rrp.lambda_coal(2.0, 2.0, 0.5)


@pytest.mark.parametrize("alpha", [-1.0, 0.0, 0.7, 3.0])
def test_lambda_coal_is_independent_of_s(alpha):
    t = 2.0
    for u in (0.0, 0.5, 1.6):
        ref = rrp.lambda_coal(u, t, alpha)
        for s in np.linspace(1e-3, t - u - 1e-3, 15):
            eff = rrp.lambda_eff(u, t - s, rrp.bd_rates(s, alpha))
            assert eff == pytest.approx(ref, rel=1e-12)


# -- reversed reconstructed process -----------------------------------------------------

def test_mu_eff_values():
    assert rrp.mu_eff(30.0, 1.0) == pytest.approx(1.0, abs=1e-6)
    t = 3.0
    for tau in (0.2, 1.0, 2.5):
        assert rrp.mu_eff(tau, 0.8) == pytest.approx(rrp.lambda_coal(t - tau, t, 0.8), rel=1e-15)
    taus = np.linspace(0.05, 10, 50)
    assert np.all(np.diff(rrp.mu_eff(taus, 0.8)) < 0)


def test_mu_eff_integrates_to_rho():
    s, a = 0.05, 1.2
    for tau in (0.1, 1.0, 4.0):
        area, _ = sci_integrate.quad(lambda v: rrp.mu_eff(v, a), s, tau, epsabs=1e-13, epsrel=1e-12)
        assert area == pytest.approx(math.log(math.expm1(a * tau) / math.expm1(a * s)), rel=1e-10)
        assert rrp.rho_of_tau(tau, s, a) == pytest.approx(area, rel=1e-10)


def test_rho_tau_bijection():
    s, a = 0.01, 1.0
    assert rrp.rho_of_tau(s, s, a) == 0.0
    assert rrp.tau_of_rho(0.0, s, a) == s
    for tau in (s, 2 * s, 10 * s):
        assert rrp.tau_of_rho(rrp.rho_of_tau(tau, s, a), s, a) == pytest.approx(tau, abs=1e-12)
    for tau in (0.05, 0.5, 2.0):
        h = 1e-6 * tau
        fd = (rrp.rho_of_tau(tau + h, s, a) - rrp.rho_of_tau(tau - h, s, a)) / (2 * h)
        assert fd == pytest.approx(rrp.mu_eff(tau, a), abs=1e-6)


@given(st.floats(1e-4, 2.0), st.floats(0.05, 5.0), st.floats(0.0, 60.0), st.floats(0.0, 60.0))
@settings(max_examples=80, deadline=None)
def test_rho_tau_monotone_inverse(s, a, r1, r2):
    t1, t2 = rrp.tau_of_rho(r1, s, a), rrp.tau_of_rho(r2, s, a)
    assert t1 >= s
    if r1 < r2:
        assert t1 <= t2
    assert rrp.rho_of_tau(t1, s, a) == pytest.approx(r1, rel=1e-9, abs=1e-9)


def test_rho_domain():
    with pytest.raises(DomainError):
        rrp.rho_of_tau(0.5, 1.0, 1.0)
    with pytest.raises(DomainError):
        rrp.tau_of_rho(-1.0, 1.0, 1.0)


@pytest.mark.parametrize("fn", [
    lambda a: rrp.mu_eff(1.0, a),
    lambda a: rrp.rho_of_tau(1.0, 0.5, a),
    lambda a: rrp.cumulative_intensity(1.0, 1.0, a),
    lambda a: rrp.ancestors_at_tau_pmf(1, 1.0, 1.0, a),
    lambda a: rrp.mean_inter_coalescent_sample(2, 3, 1.0, a),
    lambda a: rrp.generate_rrp_tree(3, 0.1, a, SeededSource(1, 0)),
])
@pytest.mark.parametrize("alpha", [0.0, -0.5])
def test_non_supercritical_rejected(fn, alpha):
    with pytest.raises(DomainError):
        fn(alpha)


# -- coalescent-time point process ------------------------------------------------------

def test_intensity_closed_forms():
    tau, x, a = 0.7, 1.5, 0.9
    assert rrp.cumulative_intensity(tau, x, a) == pytest.approx(x / beta(tau, a), rel=1e-14)
    h = 1e-5
    fd = -(rrp.cumulative_intensity(tau + h, x, a) - rrp.cumulative_intensity(tau - h, x, a)) / (2 * h)
    assert fd == pytest.approx(rrp.coalescent_rate(tau, x, a), abs=1e-6)
    area, _ = sci_integrate.quad(lambda v: rrp.coalescent_rate(v, x, a), tau, np.inf, epsabs=1e-13, epsrel=1e-12)
    assert area == pytest.approx(rrp.cumulative_intensity(tau, x, a), rel=1e-8)
    assert rrp.coalescent_rate(30.0, 1.0, 1.0) < 1e-6
    # no overflow far out
    assert rrp.cumulative_intensity(2000.0, 1.0, 1.0) == 0.0


@given(st.floats(1e-3, 50.0), st.floats(0.01, 10.0), st.floats(0.05, 5.0))
@settings(max_examples=80, deadline=None)
def test_inverse_cumulative_intensity_round_trip(tau, x, a):
    level = rrp.cumulative_intensity(tau, x, a)
    if level > 1e-250:
        assert rrp.inverse_cumulative_intensity(level, x, a) == pytest.approx(tau, rel=1e-9)


def test_ancestors_at_tau_pmf():
    tau, a = 0.5, 1.0
    x = beta(tau, a)
    assert rrp.ancestors_at_tau_pmf(1, tau, x, a) == pytest.approx(math.exp(-1.0), rel=1e-14)
    js = np.arange(1, 80)
    total = rrp.ancestors_at_tau_pmf(js, 0.5, 2.0, 1.0).sum()
    z = rrp.cumulative_intensity(0.5, 2.0, 1.0)
    assert total == pytest.approx(-math.expm1(-z), abs=1e-10)
    assert rrp.ancestors_at_tau_deficit(0.5, 2.0, 1.0) == pytest.approx(math.exp(-z), rel=1e-15)
    with pytest.raises(DomainError):
        rrp.ancestors_at_tau_pmf(0, 0.5, 1.0, 1.0)


# -- sample ancestors at lookback tau --------------------------------------------------

def test_sample_pmf_single_lineage():
    tau, x, a = 0.6, 1.0, 1.0
    z = rrp.cumulative_intensity(tau, x, a)
    for form in ("series", "integral"):
        assert rrp.sample_ancestors_at_tau_pmf(1, 1, tau, x, a, form) == pytest.approx(-math.expm1(-z), rel=1e-12)


def test_sample_pmf_forms_agree_at_reference_point():
    a = rrp.sample_ancestors_at_z_pmf(2, 5, 1.7, "series")
    b = rrp.sample_ancestors_at_z_pmf(2, 5, 1.7, "integral")
    assert a == pytest.approx(b, abs=1e-8)


@given(st.integers(1, 10), st.integers(0, 10), st.floats(1e-3, 600.0))
@settings(max_examples=80, deadline=None)
def test_sample_pmf_series_vs_integral(j, extra, z):
    n = j + extra
    a = rrp.sample_ancestors_at_z_pmf(j, n, z, "series")
    b = rrp.sample_ancestors_at_z_pmf(j, n, z, "integral")
    assert a == pytest.approx(b, abs=1e-8)


@pytest.mark.parametrize("n,x,tau", [(4, 1.0, 0.6), (7, 3.0, 0.05), (3, 0.2, 2.0)])
def test_sample_pmf_sums_to_founder_mass(n, x, tau):
    z = rrp.cumulative_intensity(tau, x, 1.0)
    total = sum(rrp.sample_ancestors_at_tau_pmf(j, n, tau, x, 1.0) for j in range(1, n + 1))
    assert total == pytest.approx(-math.expm1(-z), abs=1e-8)


def test_sample_pmf_large_sample_tends_to_population():
    z = 2.5
    for j in (1, 2, 4):
        big = rrp.sample_ancestors_at_z_pmf(j, 5000, z)
        assert big == pytest.approx(z**j * math.exp(-z) / math.factorial(j), abs=5e-3)


def test_sample_pmf_domain():
    with pytest.raises(DomainError):
        rrp.sample_ancestors_at_z_pmf(3, 2, 1.0)
    with pytest.raises(DomainError):
        rrp.sample_ancestors_at_z_pmf(1, 2, 1.0, form="other")


# -- mean inter-coalescence times ---------------------------------------------------------

def test_mean_routes_agree():
    a = rrp.mean_inter_coalescent_sample(2, 3, 1.0, 1.0, route="double_integral")
    b = rrp.mean_inter_coalescent_sample(2, 3, 1.0, 1.0, route="tau_integral")
    assert a == pytest.approx(b, rel=1e-5)
    a = rrp.mean_inter_coalescent_sample(3, 5, 0.4, 2.0, route="double_integral")
    b = rrp.mean_inter_coalescent_sample(3, 5, 0.4, 2.0, route="tau_integral")
    assert a == pytest.approx(b, rel=1e-5)


def test_mean_monotone_in_j():
    means = [rrp.mean_inter_coalescent_sample(j, 6, 1.0, 1.0) for j in range(2, 7)]
    assert all(m > 0 for m in means)
    assert all(x > y for x, y in zip(means, means[1:]))


def test_mean_domain():
    with pytest.raises(DomainError):
        rrp.mean_inter_coalescent_sample(1, 3, 1.0, 1.0)
    with pytest.raises(DomainError):
        rrp.mean_inter_coalescent_sample(2, 3, 1.0, 1.0, route="nope")


# -- reversed reconstructed trees ---------------------------------------------------------

def test_single_leaf_tree():
    tree = rrp.generate_rrp_tree(1, 0.1, 1.0, SeededSource(3, 0))
    assert tree.coalescence_times == ()
    assert tree.origin_time >= 0.1


def test_tree_structure():
    tree = rrp.generate_rrp_tree(40, 0.01, 1.0, SeededSource(3, 1))
    times = np.array(tree.coalescence_times)
    assert len(times) == 39 and np.all(np.diff(times) > 0)
    assert times[0] > 0.01 and tree.origin_time > times[-1]


def test_first_holding_time_is_exponential():
    j = 5
    rho = rrp.sample_death_process_rho(j, 10_000, SeededSource(11, 0))
    assert stats.kstest(rho[:, 0], stats.expon(scale=1 / j).cdf).pvalue > 1e-3


def test_times_are_order_statistics():
    # each lineage's death on the rho clock is Exp(1), i.e. survival (e^{as}-1)/(e^{a tau}-1)
    m, s, a = 6, 0.05, 1.3
    times = rrp.sample_rrp_times(m, s, a, 5000, SeededSource(11, 1))
    survival = lambda tau: np.expm1(a * s) / np.expm1(a * np.asarray(tau))
    pooled = times.ravel()
    assert stats.kstest(pooled, lambda v: 1 - survival(v)).pvalue > 1e-3
    assert stats.kstest(times[:, -1], lambda v: (1 - survival(v)) ** m).pvalue > 1e-3


def test_binned_conditional_survival():
    # P(T_2 > tau | T_3) = [(e^{a T_3} - 1)/(e^{a tau} - 1)]^2 with T_j the time j ancestors begin
    s, a, size = 0.05, 1.0, 100_000
    times = rrp.sample_rrp_times(4, s, a, size, SeededSource(11, 2))
    t3, t2 = times[:, 1], times[:, 2]
    edges = np.quantile(t3, [0.0, 0.25, 0.5, 0.75, 0.95])
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = (t3 >= lo) & (t3 < hi)
        cut = 1.5 * hi
        predicted = (np.expm1(a * t3[inside]) / math.expm1(a * cut)) ** 2
        diff = (t2[inside] > cut) - predicted
        z = diff.mean() / (diff.std(ddof=1) / math.sqrt(inside.sum()))
        assert abs(z) < 3


def _tree_counts_beyond(tau, s, x, a, reps, source, chunk=250):
    """Number of ancestral lineages alive at lookback tau in trees with 2x/s leaves."""
    m = int(round(2 * x / s))
    rho0 = rrp.rho_of_tau(tau, s, a)
    out = []
    gen = source.generator()
    for start in range(0, reps, chunk):
        rho = rrp.sample_death_process_rho(m, min(chunk, reps - start), gen)
        out.append(np.sum(rho > rho0, axis=1))
    return np.concatenate(out), m, math.exp(-rho0)


def test_poisson_limit_of_tree_counts():
    tau, x, a = 0.5, 1.0, 1.0
    z = rrp.cumulative_intensity(tau, x, a)
    js = np.arange(0, 60)
    poisson = stats.poisson.pmf(js, z)
    distances = []
    for i, s in enumerate((1e-3, 1e-4)):
        counts, m, q = _tree_counts_beyond(tau, s, x, a, 4000 if s < 1e-3 else 20_000, SeededSource(12, i))
        binom = stats.binom.pmf(js, m, q)
        report = chi_square_discrete(DiscretePmf(0, binom), counts)
        assert report.p_value > 1e-3
        distances.append(0.5 * np.abs(binom - poisson).sum())
    assert distances[1] < distances[0]
    assert distances[1] < 1e-3
