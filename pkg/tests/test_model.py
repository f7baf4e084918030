import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sci_integrate

from fellercoal import model
from fellercoal.errors import DomainError
from fellercoal.model import BgwScale, ModelParams, TimeWindow

mp.mp.dps = 40


def mp_mu(t, a):
    t, a = mp.mpf(t), mp.mpf(a)
    if a == 0:
        return 2 / t
    return 2 * a * mp.e ** (a * t) / (mp.e ** (a * t) - 1)


def mp_beta(t, a):
    t, a = mp.mpf(t), mp.mpf(a)
    if a == 0:
        return t / 2
    return (mp.e ** (a * t) - 1) / (2 * a)


def test_mu_critical_values():
    assert model.mu(1.0, 0.0) == 2.0
    assert model.mu(2.0, 0.0) == 1.0
    assert model.mu(1.0, 1e-8) == pytest.approx(2.0, rel=1e-6)


def test_beta_critical_values():
    assert model.beta(1.0, 0.0) == 0.5
    assert model.beta(1.0, -1e-8) == pytest.approx(0.5, rel=1e-6)


@pytest.mark.parametrize("t,a", [(1, 1), (2, -0.5), (3, 0), (0.1, 40), (5, -3), (1e-3, 2e-4)])
def test_mu_beta_product_is_growth(t, a):
    assert model.mu(t, a) * model.beta(t, a) == pytest.approx(math.exp(a * t), rel=1e-12)


@pytest.mark.parametrize("t,a", [(1, 1), (2, -0.5), (0.3, 7.0), (1, 3e-7), (1, -3e-7), (4, -2.5)])
def test_mu_beta_match_high_precision(t, a):
    assert model.mu(t, a) == pytest.approx(float(mp_mu(t, a)), rel=1e-13)
    assert model.beta(t, a) == pytest.approx(float(mp_beta(t, a)), rel=1e-13)


def test_log_mu_survives_underflow():
    # mu(1000; -1) underflows; its log is -1000 + log 2 to leading order
    assert model.log_mu(1000.0, -1.0) == pytest.approx(float(mp.log(mp_mu(1000, -1))), rel=1e-14)
    assert model.log_mu(2.0, 0.5) == pytest.approx(math.log(model.mu(2.0, 0.5)), rel=1e-14)


@given(st.floats(0.01, 20), st.floats(1e-9, 1e-6))
@settings(max_examples=60, deadline=None)
def test_alpha_zero_continuity(t, eps):
    for f in (model.mu, model.beta):
        for sign in (1, -1):
            lhs = f(t, sign * eps)
            assert abs(lhs - f(t, 0.0)) <= 2 * eps * t * abs(f(t, 0.0))


def test_time_domain():
    with pytest.raises(DomainError):
        model.mu(0.0, 1.0)
    with pytest.raises(DomainError):
        model.beta(-1.0, 1.0)


def test_geom_p_values():
    assert model.geom_p(1.0, 1.0, 0.7) == 0.0
    assert model.geom_p(1e-9, 1.0, 1.0) == pytest.approx(1.0, abs=1e-8)
    assert model.geom_p(0.25, 1.0, 0.0) == pytest.approx(0.75, abs=1e-12)
    for a in (1e-8, -1e-8):
        assert model.geom_p(0.25, 1.0, a) == pytest.approx(0.75, abs=1e-7)


@given(st.floats(0.01, 1.0), st.floats(0.05, 10), st.floats(-5, 5))
@settings(max_examples=100, deadline=None)
def test_geom_p_range_and_monotone(frac, t, a):
    s = frac * t
    p = model.geom_p(s, t, a)
    assert 0.0 <= p < 1.0
    if frac < 0.99:
        assert model.geom_p(s * 1.01, t, a) <= p + 1e-15
    if abs(a) > 1e-6:
        num = mp.e ** (mp.mpf(a) * s) - mp.e ** (mp.mpf(a) * t)
        den = 1 - mp.e ** (mp.mpf(a) * t)
        assert p == pytest.approx(float(num / den), rel=1e-9, abs=1e-12)


def test_geom_p_domain():
    with pytest.raises(DomainError):
        model.geom_p(0.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        model.geom_p(1.5, 1.0, 0.5)


def test_time_window_validation():
    TimeWindow(1.0, 1.0)
    with pytest.raises(DomainError):
        TimeWindow(1.0, 0.0)
    with pytest.raises(DomainError):
        TimeWindow(1.0, 1.5)


def test_model_params_validation():
    assert ModelParams(-1, 1).criticality == "subcritical"
    assert ModelParams(0, 1).criticality == "critical"
    assert ModelParams(2, 1).criticality == "supercritical"
    with pytest.raises(DomainError):
        ModelParams(0.1, -1.0)
    with pytest.raises(DomainError):
        ModelParams(float("inf"), 1.0)


def test_density_atom_values():
    atom, dens = model.population_density(np.array([0.5, 1.0]), 1.0, ModelParams(0.0, 1.0))
    assert atom == pytest.approx(math.exp(-2.0), rel=1e-15)
    atom, dens = model.population_density(np.array([0.5, 1.0]), 1.0, ModelParams(0.3, 0.0))
    assert atom == 1.0
    assert np.all(dens == 0)


@pytest.mark.parametrize("t,a,x0", [(1.0, 0.5, 2.0), (0.3, -1.0, 0.7), (2.0, 0.0, 1.5), (1.0, 2.0, 0.1)])
def test_density_total_mass(t, a, x0):
    params = ModelParams(a, x0)
    atom, _ = model.population_density(0.0, t, params)
    cont, _ = sci_integrate.quad(lambda x: model.population_density(x, t, params)[1], 0, np.inf,
                                 epsabs=1e-13, epsrel=1e-12, limit=200)
    assert atom + cont == pytest.approx(1.0, abs=1e-8)


def test_density_matches_bessel_form():
    # the Poisson-Gamma sum equals a closed Bessel expression
    t, a, x0, x = 0.8, 0.6, 1.3, 0.9
    nu = x0 * model.mu(t, a)
    b = model.beta(t, a)
    closed = mp.e ** (-nu - x / b) * mp.sqrt(nu / (x * b)) * mp.besseli(1, 2 * mp.sqrt(nu * x / b))
    assert model.population_density(x, t, ModelParams(a, x0))[1] == pytest.approx(float(closed), rel=1e-12)


def test_laplace_transform_limits():
    params = ModelParams(0.0, 1.0)
    assert model.laplace_transform(0.0, 1.0, params) == 1.0
    assert model.laplace_transform(np.inf, 1.0, params) == pytest.approx(math.exp(-2.0), rel=1e-15)
    with pytest.raises(DomainError):
        model.laplace_transform(-0.1, 1.0, params)


def test_laplace_transform_matches_density_quadrature():
    phi, t = 1.3, 1.0
    params = ModelParams(0.7, 0.9)
    atom, _ = model.population_density(0.0, t, params)
    cont, _ = sci_integrate.quad(lambda x: math.exp(-phi * x) * model.population_density(x, t, params)[1],
                                 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    assert model.laplace_transform(phi, t, params) == pytest.approx(atom + cont, abs=1e-6)


def test_moments_from_laplace_finite_differences():
    t, params = 1.2, ModelParams(0.4, 1.7)
    h = 1e-4
    log_l = lambda phi: math.log(model.laplace_transform(phi, t, params))
    # second-order one-sided difference for the first and second derivative at 0
    d1 = -(-3 * log_l(0) + 4 * log_l(h) - log_l(2 * h)) / (2 * h)
    d2 = (2 * log_l(0) - 5 * log_l(h) + 4 * log_l(2 * h) - log_l(3 * h)) / h**2
    assert d1 == pytest.approx(model.mean_population(t, params), abs=1e-6)
    assert d2 == pytest.approx(model.var_population(t, params), rel=1e-3)


def test_extinction():
    assert model.eventual_extinction_prob(ModelParams(-1.0, 5.0)) == 1.0
    assert model.eventual_extinction_prob(ModelParams(0.0, 5.0)) == 1.0
    assert model.eventual_extinction_prob(ModelParams(0.7, 0.0)) == 1.0
    params = ModelParams(0.5, 1.0)
    assert model.eventual_extinction_prob(params) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert model.extinction_prob(1e3, params) == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_bgw_scale_maps():
    scale = BgwScale(y0=1000, lambda_offspring=1.01, sigma2=1.5, m0=1000)
    params = model.bgw_to_diffusion(scale)
    assert params.x0 == 1.0
    assert params.alpha == pytest.approx(1000 * math.log(1.01) / 1.5, rel=1e-15)
    back = model.diffusion_to_bgw(params, 1000, 1.5)
    assert back.lambda_offspring == pytest.approx(1.01, rel=1e-15)
    assert back.m0 == 1000
    assert model.bgw_to_diffusion(BgwScale(500, 1.0, 2.0, 10)).alpha == 0.0


def test_physical_scale():
    scale = BgwScale(y0=500, lambda_offspring=1.002, sigma2=1.0, m0=100)
    s = model.scale_s(scale)
    assert model.physical_to_diffusion(800, s=s) == pytest.approx(1.6, rel=1e-15)
    assert model.physical_to_diffusion(800, scale=scale) == pytest.approx(1.6, rel=1e-12)
    assert model.diffusion_to_physical(1.6, s=s) == pytest.approx(800, rel=1e-15)
    with pytest.raises(DomainError):
        model.physical_to_diffusion(1, scale=BgwScale(500, 1.0, 1.0, 1))
    with pytest.raises(DomainError):
        model.physical_to_diffusion(1)


def test_generation_time_round_trip():
    scale = BgwScale(y0=2000, lambda_offspring=1.0002, sigma2=1.0002, m0=2000)
    g = model.time_to_generations(1.0, scale)
    assert model.generations_to_time(g, scale) == pytest.approx(1.0, rel=1e-15)
    assert scale.generation_time == pytest.approx(1.0002 / 2000)


@pytest.mark.parametrize("kwargs", [dict(y0=0, lambda_offspring=1, sigma2=1, m0=1),
                                    dict(y0=10, lambda_offspring=1, sigma2=1, m0=11),
                                    dict(y0=10, lambda_offspring=0, sigma2=1, m0=1),
                                    dict(y0=10, lambda_offspring=1, sigma2=-1, m0=1)])
def test_bgw_scale_validation(kwargs):
    with pytest.raises(DomainError):
        BgwScale(**kwargs)
