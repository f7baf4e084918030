"""Ancestor-count and coalescent-time distributions of the Feller diffusion.

``A_inf(s; t)`` is the number of ancestors, at lookback ``s``, of the whole
population observed at time ``t``; ``A_n(s; t)`` is the same count for a
sample of ``n``.  The quasi-stationary functions (prefix ``qs_``) give the
``t -> infinity`` limits of a subcritical diffusion conditioned on survival.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import special as sps

from . import special
from .errors import DomainError
from .model import ModelParams, TimeWindow, geom_p, log_mu
from .special import QuadratureSpec, integrate

TAIL_TOL = 1e-12
_MAX_SUPPORT = 5_000_000


@dataclass(frozen=True)
class PolyaAeppliParams:
    """Parameters ``(nu, p)`` of a Polya-Aeppli ancestor count.

    ``log_nu`` is carried alongside ``nu`` because in the quasi-stationary
    regime ``nu`` underflows while its log stays representable.
    """

    nu: float
    p: float
    log_nu: float | None = None

    def __post_init__(self):
        if self.log_nu is None:
            if not self.nu > 0:
                raise DomainError(f"nu must be positive, got {self.nu}")
            object.__setattr__(self, "log_nu", math.log(self.nu))
        elif not math.isfinite(self.log_nu):
            raise DomainError("log_nu must be finite")
        if not 0 <= self.p < 1:
            raise DomainError(f"p must lie in [0, 1), got {self.p}")

    @property
    def mean(self) -> float:
        return self.nu / (1.0 - self.p)


@dataclass
class DiscretePmf:
    """A probability mass function on consecutive integers.

    ``probabilities[i]`` is the mass at ``support_start + i``.
    ``total_mass`` is the mass of the full (untruncated) law, which may be
    below one when the law itself is defective, and
    ``truncation_tail_bound`` bounds the mass beyond the listed support.
    """

    support_start: int
    probabilities: np.ndarray
    total_mass: float = 1.0
    truncation_tail_bound: float = 0.0
    labels: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if np.any(self.probabilities < 0):
            raise DomainError("probabilities must be nonnegative")

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_start, self.support_start + len(self.probabilities))

    def pmf(self, k):
        k = np.asarray(k)
        idx = k - self.support_start
        inside = (idx >= 0) & (idx < len(self.probabilities))
        out = np.where(inside, self.probabilities[np.clip(idx, 0, len(self.probabilities) - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))

    def listed_mass(self) -> float:
        return math.fsum(self.probabilities)


# -- population ancestors ------------------------------------------------------

def ancestor_params(window: TimeWindow, params: ModelParams) -> PolyaAeppliParams:
    """``nu = x0 mu(t; alpha)`` and ``p = p(s, t; alpha)`` of ``A_inf(s; t)``."""
    if not params.x0 > 0:
        raise DomainError("ancestor counts need x0 > 0")
    log_nu = math.log(params.x0) + log_mu(window.t, params.alpha)
    return PolyaAeppliParams(nu=math.exp(log_nu), p=geom_p(window.s, window.t, params.alpha),
                             log_nu=log_nu)


def population_ancestors_logpmf(k, window: TimeWindow, params: ModelParams,
                                conditioned_on_survival: bool = False):
    pa = ancestor_params(window, params)
    if conditioned_on_survival:
        return special.polya_aeppli_conditional_logpmf(k, pa.nu, pa.p, pa.log_nu)
    return special.polya_aeppli_logpmf(k, pa.nu, pa.p, pa.log_nu)


def population_ancestors_pmf(k, window: TimeWindow, params: ModelParams,
                             conditioned_on_survival: bool = False):
    """``P(A_inf(s; t) = k)``, optionally conditioned on ``X(t) > 0``."""
    return np.exp(population_ancestors_logpmf(k, window, params, conditioned_on_survival))


def _pmf_until_tail(logpmf_fn, start: int, tail_tol: float, chunk: int = 64):
    """Evaluate a pmf from ``start`` until the remaining mass is below ``tail_tol``."""
    probs = []
    k = start
    cum = 0.0
    while True:
        block = np.exp(logpmf_fn(np.arange(k, k + chunk)))
        for value in block:
            probs.append(value)
            cum += value
            if 1.0 - cum < tail_tol and value < tail_tol:
                return np.array(probs), max(1.0 - cum, 0.0)
        k += chunk
        if k - start > _MAX_SUPPORT:
            raise DomainError("pmf support too large to tabulate")


def population_ancestors_distribution(window: TimeWindow, params: ModelParams,
                                      conditioned_on_survival: bool = False,
                                      tail_tol: float = TAIL_TOL) -> DiscretePmf:
    """Tabulated law of ``A_inf(s; t)`` with a tail bound below ``tail_tol``."""
    pa = ancestor_params(window, params)
    if conditioned_on_survival:
        fn = lambda k: special.polya_aeppli_conditional_logpmf(k, pa.nu, pa.p, pa.log_nu)
        start = 1
    else:
        fn = lambda k: special.polya_aeppli_logpmf(k, pa.nu, pa.p, pa.log_nu)
        start = 0
    probs, tail = _pmf_until_tail(fn, start, tail_tol)
    return DiscretePmf(start, probs, total_mass=1.0, truncation_tail_bound=tail)


# -- sample ancestors ------------------------------------------------------------

def _log_sample_given_population(j, n, k):
    """Log of ``C(k, j) n! / k_(n) C(n-1, j-1)``, vectorised over ``k``."""
    k = np.asarray(k, dtype=float)
    return (special.log_binom(k, j) + sps.gammaln(n + 1.0)
            - special.log_rising_factorial(k, n) + special.log_binom(n - 1, j - 1))


def sample_given_population_pmf(j: int, n: int, k: int, exact: bool = False):
    """``P(A_n = j | A_inf = k)``: ancestors of a size-``n`` sample among ``k``.

    Given ``k`` founder families with Dirichlet(1,...,1) relative sizes the
    sample's family counts are uniform over compositions of ``n`` into ``k``
    parts, giving ``C(k, j) n! / k_(n) C(n-1, j-1)``.  ``j > k`` has
    probability zero; ``j > n`` is a domain error.  With ``exact=True`` the
    value is returned as a :class:`fractions.Fraction`.
    """
    if n < 1 or k < 1:
        raise DomainError("n and k must be positive")
    if j > n:
        raise DomainError(f"a sample of {n} cannot have {j} ancestors")
    if j < 1 or j > k:
        return Fraction(0) if exact else 0.0
    if exact:
        rising = math.prod(range(k, k + n))
        return Fraction(math.comb(k, j) * math.factorial(n) * math.comb(n - 1, j - 1), rising)
    return float(np.exp(_log_sample_given_population(j, n, k)))


def sample_ancestors_distribution(n: int, window: TimeWindow, params: ModelParams,
                                  tail_tol: float = TAIL_TOL) -> DiscretePmf:
    """Law of ``A_n(s; t)`` on ``1..n``.

    Sums the sample-given-population law against ``A_inf`` conditioned on
    survival, truncating ``A_inf`` where its tail mass drops below
    ``tail_tol``; since the conditional sample law is at most one, the
    truncation error of every entry is below the reported tail bound.
    """
    if n < 1:
        raise DomainError("sample size must be positive")
    pop = population_ancestors_distribution(window, params, conditioned_on_survival=True,
                                            tail_tol=tail_tol)
    ks = pop.support.astype(float)
    with np.errstate(divide="ignore"):
        log_pop = np.log(pop.probabilities)
    probs = np.zeros(n)
    for j in range(1, n + 1):
        mask = ks >= j
        if np.any(mask):
            probs[j - 1] = np.exp(sps.logsumexp(_log_sample_given_population(j, n, ks[mask]) + log_pop[mask]))
    return DiscretePmf(1, probs, total_mass=1.0, truncation_tail_bound=pop.truncation_tail_bound)


def sample_ancestors_pmf(j: int, n: int, window: TimeWindow, params: ModelParams) -> float:
    """``P(A_n(s; t) = j)`` for ``1 <= j <= n``."""
    if not 1 <= j <= n:
        raise DomainError(f"need 1 <= j <= n, got j={j}, n={n}")
    return float(sample_ancestors_distribution(n, window, params).probabilities[j - 1])


# -- quasi-stationary subcritical limit ---------------------------------------

def _check_subcritical(alpha):
    if not alpha < 0:
        raise DomainError(f"the quasi-stationary limit needs alpha < 0, got {alpha}")


def _check_k(k):
    if k < 2:
        raise DomainError(f"k must be at least 2, got {k}")


def qs_population_ancestors_pmf(k, s: float, alpha: float):
    """Shifted geometric ``(1 - e^{-|alpha| s}) e^{-|alpha| (k-1) s}``."""
    _check_subcritical(alpha)
    if not s > 0:
        raise DomainError("s must be positive")
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise DomainError("k must be at least 1")
    a = abs(alpha)
    out = -np.expm1(-a * s) * np.exp(-a * (k - 1) * s)
    return float(out) if out.ndim == 0 else out


def qs_Tk_survival(k: int, s, alpha: float):
    """``P(T_k > s) = e^{-|alpha| (k-1) s}``: time back to fewer than ``k`` ancestors."""
    _check_subcritical(alpha)
    _check_k(k)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("s must be nonnegative")
    out = np.exp(-abs(alpha) * (k - 1) * s)
    return float(out) if out.ndim == 0 else out


def qs_mean_Wk(k: int, alpha: float) -> float:
    """Mean time ``1 / (|alpha| k (k-1))`` spent with exactly ``k`` ancestors."""
    _check_subcritical(alpha)
    _check_k(k)
    return 1.0 / (abs(alpha) * k * (k - 1))


def _qs_integrand(j, n, q):
    log_c = math.log(n) + float(special.log_binom(n - 1, j - 1)) + (j - 1) * math.log(q)

    def f(u):
        with np.errstate(divide="ignore"):
            return np.exp(log_c + (j - 1) * np.log(u) + (n - 1) * np.log1p(-u)
                          - (j + 1) * np.log1p(-u * q))
    return f


def qs_sample_ancestors_pmf(j: int, n: int, s: float, alpha: float,
                            quad: QuadratureSpec | None = None) -> float:
    """Quasi-stationary ``P(A_n(s; inf) = j)`` as a single integral over (0, 1)."""
    _check_subcritical(alpha)
    if not 1 <= j <= n:
        raise DomainError(f"need 1 <= j <= n, got j={j}, n={n}")
    if not s > 0:
        raise DomainError("s must be positive")
    a = abs(alpha)
    q = math.exp(-a * s)
    one_minus_q = -math.expm1(-a * s)
    if q == 0.0:
        # the integrand reduces to n (1-u)^{n-1} for j = 1 and vanishes otherwise
        return float(j == 1)
    quad = quad or QuadratureSpec(singular_endpoint_flags=(False, one_minus_q < 0.1))
    return one_minus_q * integrate(_qs_integrand(j, n, q), 0.0, 1.0, quad)


def qs_sample_ancestors_series(j: int, n: int, s: float, alpha: float,
                               tail_tol: float = TAIL_TOL) -> float:
    """The same probability summed as a series over the population count.

    Plugs the quasi-stationary shifted-geometric population law into the
    finite-``t`` sample formula; used as an independent check of the
    integral representation.
    """
    _check_subcritical(alpha)
    a = abs(alpha)
    log_one_minus_q = math.log(-math.expm1(-a * s))
    # geometric tail beyond K is e^{-|alpha| K s}
    k_max = max(j, int(math.ceil(-math.log(tail_tol) / (a * s))) + 1)
    ks = np.arange(j, k_max + 1, dtype=float)
    log_terms = _log_sample_given_population(j, n, ks) + log_one_minus_q - a * (ks - 1) * s
    return float(np.exp(sps.logsumexp(log_terms)))


def qs_Wk_survival(w, k: int, alpha: float, quad: QuadratureSpec | None = None):
    """``P(W_k > w)`` for the quasi-stationary inter-coalescence time ``W_k``.

    ``k (1 - e^{-|alpha| w}) int_0^1 e^{-|alpha|(k-1) w} u^{k-1} (1-u)^{k-1}
    / (1 - u e^{-|alpha| w})^{k+1} du``.  For small ``w`` the integrand
    peaks sharply at ``u = 1``, which the graded mesh resolves.
    """
    _check_subcritical(alpha)
    _check_k(k)
    ws = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(ws < 0):
        raise DomainError("w must be nonnegative")
    a = abs(alpha)
    out = np.empty(ws.shape)
    for i, wi in enumerate(ws):
        if wi == 0:
            out[i] = 1.0
            continue
        q = math.exp(-a * wi)
        one_minus_q = -math.expm1(-a * wi)
        if q == 0.0:
            out[i] = 0.0
            continue
        qquad = quad or QuadratureSpec(singular_endpoint_flags=(False, one_minus_q < 0.1))
        out[i] = one_minus_q * integrate(_qs_integrand(k, k, q), 0.0, 1.0, qquad)
    return float(out[0]) if np.ndim(w) == 0 else out


def mutant_frequency_density(u, k: int):
    """Beta(1, k-1) density ``(k-1)(1-u)^{k-2}`` of a mutation arising with ``k`` ancestors."""
    _check_k(k)
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("u must lie in (0, 1)")
    out = (k - 1) * (1.0 - u) ** (k - 2)
    return float(out) if out.ndim == 0 else out
