"""Birth-death rates, reversed reconstructed trees and coalescent times for alpha > 0.

A supercritical Feller diffusion observed at scaled size ``x`` has, looking
back a time ``tau``, a Poisson number of population ancestors with mean
``x / beta(tau)``.  Trees are generated from a rate-1 pure-death process on
the ``rho`` clock and mapped to real lookback time ``tau``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp_special

from . import special
from .errors import DomainError
from .model import SMALL_ALPHA_T, mu
from .rng import as_generator
from .special import QuadratureSpec, integrate
from .trees import CoalescentTree

# Above this x / beta(tau) the Kummer series needs thousands of terms, so the
# tau-integral route of the mean switches to the integral form of the pmf.
SERIES_Z_MAX = 200.0


@dataclass(frozen=True)
class BdRates:
    """Per-individual birth and death rates of a linear birth-death process."""

    lambda_hat: float
    mu_hat: float
    s: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.lambda_hat) and self.lambda_hat >= 0):
            raise DomainError(f"birth rate must be finite and >= 0, got {self.lambda_hat}")
        if not (math.isfinite(self.mu_hat) and self.mu_hat >= 0):
            raise DomainError(f"death rate must be finite and >= 0, got {self.mu_hat}")

    @property
    def alpha(self) -> float:
        return self.lambda_hat - self.mu_hat


def bd_rates(s: float, alpha: float) -> BdRates:
    """Rates ``alpha / (1 - e^{-alpha s})`` and ``alpha e^{-alpha s} / (1 - e^{-alpha s})``.

    Their difference is ``alpha`` and their ratio ``e^{-alpha s}``; both tend
    to ``1/s`` as alpha -> 0.
    """
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    y = alpha * s
    if abs(y) < SMALL_ALPHA_T:
        lam = (1.0 + y / 2.0 + y * y / 12.0) / s
        death = (1.0 - y / 2.0 + y * y / 12.0) / s
    else:
        lam = -alpha / math.expm1(-y)
        death = alpha / math.expm1(y)
    return BdRates(lam, death, s)


def kendall_b(u, rates: BdRates):
    """``B(u) = (1 - e^{d u}) / (mu - lambda e^{d u})`` with ``d = lambda - mu``.

    ``mu B`` is the extinction probability by time ``u`` of a single founder
    and ``lambda B`` the parameter of the shifted-geometric size given survival.
    """
    u = np.asarray(u, dtype=float)
    lam, death = rates.lambda_hat, rates.mu_hat
    d = lam - death
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # B = 1 / (lambda + d / expm1(d u)); d / expm1(d u) -> 1/u as d -> 0
        small = np.abs(d * u) < 1e-8
        ratio = np.where(small, (1.0 - d * u / 2.0) / u, d / np.expm1(d * u))
        out = 1.0 / (lam + ratio)
    out = np.where(u == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def _expm1_over(d, delta):
    """``expm1(-d delta) / d`` with its ``-delta`` limit at d = 0."""
    if abs(d * delta) < 1e-8:
        return -delta * (1.0 - d * delta / 2.0)
    return math.expm1(-d * delta) / d


def lambda_eff(u: float, horizon: float, rates: BdRates) -> float:
    """Birth rate at time ``u`` of the reconstructed process of a BD process stopped at ``horizon``.

    Equals ``lambda * P(a lineage born at u survives to horizon)``.
    """
    if not 0 <= u <= horizon:
        raise DomainError(f"u must lie in [0, horizon], got u={u}, horizon={horizon}")
    lam, death = rates.lambda_hat, rates.mu_hat
    d = lam - death
    return lam / (1.0 - death * _expm1_over(d, horizon - u))


def lambda_coal(u, t: float, alpha: float):
    """Birth rate ``alpha / (1 - e^{-alpha (t - u)})`` of the population's ancestral tree.

    Defined for any sign of alpha; equals ``1/(t - u)`` at alpha = 0.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u >= t):
        raise DomainError("lambda_coal requires 0 <= u < t")
    return 0.5 * mu(t - u, alpha)


def _check_supercritical(alpha):
    if not alpha > 0:
        raise DomainError(f"the reversed reconstructed process needs alpha > 0, got {alpha}")


def _check_positive(name, value):
    if np.any(~(np.asarray(value, dtype=float) > 0)):
        raise DomainError(f"{name} must be positive")


def mu_eff(tau, alpha: float):
    """Death rate ``alpha / (1 - e^{-alpha tau})`` of a reversed lineage."""
    _check_supercritical(alpha)
    _check_positive("tau", tau)
    return 0.5 * mu(tau, alpha)


def _log_expm1(y):
    # log(e^y - 1) for y > 0 without overflow
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def rho_of_tau(tau, s: float, alpha: float):
    """Integrated reversed death rate ``log[(e^{alpha tau} - 1)/(e^{alpha s} - 1)]`` from s to tau."""
    _check_supercritical(alpha)
    _check_positive("s", s)
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau >= s)):
        raise DomainError("rho_of_tau requires tau >= s")
    out = _log_expm1(alpha * tau) - _log_expm1(alpha * s)
    out = np.where(tau == s, 0.0, out)
    return float(out) if out.ndim == 0 else out


def tau_of_rho(rho, s: float, alpha: float):
    """Inverse of :func:`rho_of_tau`: ``alpha tau = log(1 + (e^{alpha s} - 1) e^rho)``."""
    _check_supercritical(alpha)
    _check_positive("s", s)
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho >= 0)):
        raise DomainError("rho must be nonnegative")
    out = np.logaddexp(0.0, _log_expm1(alpha * s) + rho) / alpha
    # tau >= s exactly; the log/exp round trip can undershoot by an ulp
    out = np.maximum(out, s)
    return float(out) if out.ndim == 0 else out


def cumulative_intensity(tau, x: float, alpha: float):
    """Expected number of coalescent-time points beyond ``tau``: ``x / beta(tau)``."""
    _check_supercritical(alpha)
    _check_positive("x", x)
    _check_positive("tau", tau)
    y = alpha * np.asarray(tau, dtype=float)
    out = 2.0 * alpha * x * np.exp(-y) / -np.expm1(-y)
    return float(out) if out.ndim == 0 else out


def inverse_cumulative_intensity(level, x: float, alpha: float):
    """``tau`` with ``x / beta(tau) = level``: ``(1/alpha) log(1 + 2 alpha x / level)``."""
    _check_supercritical(alpha)
    _check_positive("level", level)
    level = np.asarray(level, dtype=float)
    out = np.log1p(2.0 * alpha * x / level) / alpha
    return float(out) if out.ndim == 0 else out


def coalescent_rate(tau, x: float, alpha: float):
    """Intensity ``2 x alpha^2 e^{alpha tau} / (e^{alpha tau} - 1)^2`` of coalescence times."""
    _check_supercritical(alpha)
    _check_positive("x", x)
    _check_positive("tau", tau)
    y = alpha * np.asarray(tau, dtype=float)
    with np.errstate(over="ignore"):
        out = 2.0 * x * alpha * alpha / (np.expm1(y) * -np.expm1(-y))
    return float(out) if out.ndim == 0 else out


def ancestors_at_tau_pmf(j, tau: float, x: float, alpha: float):
    """``P(N(tau) = j) = z^j e^{-z} / j!`` with ``z = x / beta(tau)``, for ``j >= 1``.

    Summed over ``j >= 1`` this gives ``1 - e^{-z}``; the missing ``e^{-z}``
    is the probability that no coalescent-time point lies beyond ``tau``.
    """
    j = np.asarray(j)
    if np.any(j < 1) or np.any(j != np.floor(j)):
        raise DomainError("j must be a positive integer")
    z = cumulative_intensity(tau, x, alpha)
    out = np.exp(j * math.log(z) - z - sp_special.gammaln(j + 1.0))
    return float(out) if out.ndim == 0 else out


def ancestors_at_tau_deficit(tau: float, x: float, alpha: float) -> float:
    """Mass ``e^{-x/beta(tau)}`` not covered by :func:`ancestors_at_tau_pmf`."""
    return math.exp(-cumulative_intensity(tau, x, alpha))


def _check_sample(j, n):
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if int(j) != j or j < 1:
        raise DomainError(f"j must be a positive integer, got {j}")
    if j > n:
        raise DomainError(f"j={j} exceeds the sample size n={n}")


def _sample_pmf_series_z(j, n, z):
    if z == 0:
        return 0.0
    log_val = (special.log_falling_factorial(n, j) - special.log_rising_factorial(n, j)
               - sp_special.gammaln(j + 1.0) + j * math.log(z) - z
               + special.log_kummer_m(j, j + n, z))
    return math.exp(log_val)


def _sample_pmf_integral_z(j, n, z, quad=None):
    quad = quad or QuadratureSpec(abs_tol=1e-15, rel_tol=1e-12)
    if z == 0:
        return 0.0
    log_pre = special.log_binom(n, j) - sp_special.gammaln(j)
    if z <= 1.0:
        def f(v):
            return np.exp(-(1.0 - v) * z) * v ** (j - 1) * (1.0 - v) ** (n - 1)
        return math.exp(log_pre + j * math.log(z)) * integrate(f, 0.0, 1.0, quad)

    # w = (1 - v) z keeps the integrand O(1) for large z
    def g(w):
        return np.exp(-w) * w ** (n - 1) * (1.0 - w / z) ** (j - 1)
    return math.exp(log_pre + (j - n) * math.log(z)) * integrate(g, 0.0, z, quad)


def sample_ancestors_at_tau_pmf(j: int, n: int, tau: float, x: float, alpha: float,
                                form: str = "series"):
    """``P(N_n(tau) = j)`` for a sample of ``n`` from a population of scaled size ``x``.

    ``form="series"`` evaluates ``n_[j] / (n_(j) j!) z^j e^{-z} M(j, j + n, z)``;
    ``form="integral"`` evaluates
    ``C(n, j)/(j-1)! z^j int_0^1 e^{-(1-v) z} v^{j-1} (1-v)^{n-1} dv``.
    Summed over j the result is ``1 - e^{-z}``.
    """
    _check_sample(j, n)
    z = cumulative_intensity(tau, x, alpha)
    if form == "series":
        return _sample_pmf_series_z(j, n, z)
    if form == "integral":
        return _sample_pmf_integral_z(j, n, z)
    raise DomainError(f"unknown form {form!r}")


def sample_ancestors_at_z_pmf(j: int, n: int, z: float, form: str = "series"):
    """:func:`sample_ancestors_at_tau_pmf` parametrised directly by ``z = x / beta(tau)``."""
    _check_sample(j, n)
    if not z >= 0:
        raise DomainError("z must be nonnegative")
    if form == "series":
        return _sample_pmf_series_z(j, n, z)
    if form == "integral":
        return _sample_pmf_integral_z(j, n, z)
    raise DomainError(f"unknown form {form!r}")


def _inner_kernel(j, c, quad):
    # int_0^inf w^{j-1} e^{-w} / (c + w) dw, finite for j >= 2 even as c -> 0
    flags = (c < 0.1, False)
    inner_quad = QuadratureSpec(quad.abs_tol, quad.rel_tol, quad.max_subdivisions, flags)

    def f(w):
        return w ** (j - 1) * np.exp(-w) / (c + w)
    return integrate(f, 0.0, math.inf, inner_quad)


def _mean_double_integral(j, n, x, alpha, quad):
    # Rescaling u = w / c with c = 2 alpha x (1 - v) turns the prefactor
    # 2 (2 alpha)^{j-1} x^j into 2 x and (1-v)^{n-1} into (1-v)^{n-j}.
    two_ax = 2.0 * alpha * x
    log_pre = math.log(2.0 * x) + special.log_binom(n, j) - sp_special.gammaln(j)

    def outer(v):
        v = np.atleast_1d(v)
        inner = np.array([_inner_kernel(j, two_ax * (1.0 - vi), quad) for vi in v])
        return v ** (j - 1) * (1.0 - v) ** (n - j) * inner
    return math.exp(log_pre) * integrate(outer, 0.0, 1.0, quad)


def _mean_tau_integral(j, n, x, alpha, quad):
    def pmf_at(tau):
        y = alpha * tau
        z = 2.0 * alpha * x * math.exp(-y) / -math.expm1(-y)
        if z > SERIES_Z_MAX:
            return _sample_pmf_integral_z(j, n, z)
        return _sample_pmf_series_z(j, n, z)

    def f(tau):
        return np.array([pmf_at(t) for t in np.atleast_1d(tau)])
    # split at the scale 1/alpha so both halves are resolved from the start
    split = 1.0 / alpha
    return integrate(f, 0.0, split, quad) + integrate(f, split, math.inf, quad)


def mean_inter_coalescent_sample(j: int, n: int, x: float, alpha: float,
                                 route: str = "double_integral",
                                 quad: QuadratureSpec | None = None) -> float:
    """Mean time ``E[W_j]`` during which a sample of ``n`` has exactly ``j`` ancestors.

    ``route="double_integral"`` evaluates the closed double integral over
    ``(v, u)``; ``route="tau_integral"`` integrates ``P(N_n(tau) = j)`` over
    ``tau`` in (0, inf).  Raises :class:`NumericalError` when quadrature
    cannot meet ``quad``.
    """
    _check_sample(j, n)
    if j < 2:
        raise DomainError("inter-coalescent times are defined for j >= 2")
    _check_supercritical(alpha)
    _check_positive("x", x)
    quad = quad or QuadratureSpec(abs_tol=1e-12, rel_tol=1e-9)
    if route == "double_integral":
        return _mean_double_integral(j, n, x, alpha, quad)
    if route == "tau_integral":
        return _mean_tau_integral(j, n, x, alpha, quad)
    raise DomainError(f"unknown route {route!r}")


# -- tree generation ---------------------------------------------------------

def sample_death_process_rho(n_leaves: int, size: int, source) -> np.ndarray:
    """Event times of a rate-1 pure-death process started from ``n_leaves`` lineages.

    Returns a ``(size, n_leaves)`` array; column ``i`` holds the time at
    which the count drops from ``n_leaves - i`` to ``n_leaves - i - 1``.  The
    last column is the death of the final lineage.
    """
    if int(n_leaves) != n_leaves or n_leaves < 1:
        raise DomainError("n_leaves must be a positive integer")
    gen = as_generator(source)
    rates = np.arange(n_leaves, 0, -1, dtype=float)
    holding = gen.standard_exponential((size, n_leaves)) / rates
    return np.cumsum(holding, axis=1)


def sample_rrp_times(n_leaves: int, s: float, alpha: float, size: int, source) -> np.ndarray:
    """Vectorised times-only version of :func:`generate_rrp_tree`.

    Row ``r`` holds ``T_{n}, ..., T_2, T_1`` in increasing order, the last
    entry being the origin of the single founder.
    """
    _check_supercritical(alpha)
    _check_positive("s", s)
    rho = sample_death_process_rho(n_leaves, size, source)
    return tau_of_rho(rho, s, alpha)


def generate_rrp_tree(n_leaves: int, s: float, alpha: float, source) -> CoalescentTree:
    """Random reversed reconstructed tree with ``n_leaves`` tips.

    Lineages die at rate 1 each on the ``rho`` clock; each death while two or
    more lineages remain merges a uniformly chosen pair.  Event times are
    mapped to ``tau`` by :func:`tau_of_rho` and the final death is recorded
    as ``origin_time``.
    """
    _check_supercritical(alpha)
    _check_positive("s", s)
    gen = as_generator(source)
    rho = sample_death_process_rho(n_leaves, 1, gen)[0]
    taus = np.atleast_1d(tau_of_rho(rho, s, alpha))
    active = list(range(1, n_leaves + 1))
    merges = []
    next_id = n_leaves + 1
    for _ in range(n_leaves - 1):
        a, b = gen.choice(len(active), size=2, replace=False)
        pair = (active[a], active[b])
        for idx in sorted((a, b), reverse=True):
            active[idx] = active[-1]
            active.pop()
        active.append(next_id)
        merges.append(pair)
        next_id += 1
    return CoalescentTree(
        leaf_count=n_leaves,
        coalescence_times=tuple(float(v) for v in taus[:-1]),
        merges=tuple(merges),
        origin_time=float(taus[-1]),
    )
