"""Feller diffusion parameters, elementary functions and the transition law.

The diffusion has generator ``x/2 d^2/dx^2 + alpha x d/dx``.  Started from
``X(0) = x0`` its state at time ``t`` is a Poisson(``x0 mu(t)``) number of
founder families, each of exponential size with mean ``beta(t)``.

Functions of ``t`` accept scalars or numpy arrays; ``alpha`` is a scalar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError

# Below this |alpha * t| the removable singularity at alpha = 0 is handled
# by a second-order series instead of the closed form.
SMALL_ALPHA_T = 1e-6
POISSON_TAIL_TOL = 1e-14


def _scalar_or_array(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class ModelParams:
    """Drift ``alpha`` (any sign) and initial scaled population ``x0``."""

    alpha: float
    x0: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise DomainError(f"alpha must be finite, got {self.alpha}")
        if not (math.isfinite(self.x0) and self.x0 >= 0):
            raise DomainError(f"x0 must be a finite nonnegative number, got {self.x0}")

    @property
    def criticality(self) -> str:
        if self.alpha < 0:
            return "subcritical"
        if self.alpha == 0:
            return "critical"
        return "supercritical"


@dataclass(frozen=True)
class TimeWindow:
    """Elapsed time ``t`` since initiation and lookback ``s`` in (0, t]."""

    t: float
    s: float

    def __post_init__(self):
        if not self.t > 0:
            raise DomainError(f"t must be positive, got {self.t}")
        if not 0 < self.s <= self.t:
            raise DomainError(f"s must lie in (0, t], got s={self.s}, t={self.t}")


@dataclass(frozen=True)
class BgwScale:
    """Scale data of the discrete branching process behind a diffusion.

    ``y0`` is the initial total population, ``m0 <= y0`` the tracked
    subpopulation, and the offspring law has mean ``lambda_offspring`` and
    variance ``sigma2``.
    """

    y0: int
    lambda_offspring: float
    sigma2: float
    m0: int

    def __post_init__(self):
        if int(self.y0) != self.y0 or self.y0 <= 0:
            raise DomainError(f"y0 must be a positive integer, got {self.y0}")
        if int(self.m0) != self.m0 or self.m0 <= 0:
            raise DomainError(f"m0 must be a positive integer, got {self.m0}")
        if self.m0 > self.y0:
            raise DomainError(f"m0={self.m0} exceeds y0={self.y0}")
        if not self.lambda_offspring > 0:
            raise DomainError("lambda_offspring must be positive")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")

    @property
    def generation_time(self) -> float:
        """Diffusion time elapsed per generation."""
        return self.sigma2 / self.y0


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("t must be positive")
    return t


def mu(t, alpha: float):
    """``2 alpha e^{alpha t} / (e^{alpha t} - 1)``, with ``mu(t; 0) = 2/t``."""
    t = _check_time(t)
    y = alpha * t
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        closed = -2.0 * alpha / np.expm1(-y)
    series = (2.0 / t) * (1.0 + y / 2.0 + y * y / 12.0)
    return _scalar_or_array(np.where(np.abs(y) < SMALL_ALPHA_T, series, closed))


def log_mu(t, alpha: float):
    """Natural log of :func:`mu`, finite even where ``mu`` underflows."""
    t = _check_time(t)
    y = alpha * t
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # mu = 2|alpha| / (1 - e^{-y}) for y > 0 and 2|alpha| e^{y} / (1 - e^{y}) for y < 0
        pos = math.log(2 * abs(alpha)) - np.log(-np.expm1(-np.abs(y))) if alpha != 0 else 0.0
        closed = np.where(y > 0, pos, pos + y)
    series = np.log(2.0 / t) + np.log1p(y / 2.0 + y * y / 12.0)
    return _scalar_or_array(np.where(np.abs(y) < SMALL_ALPHA_T, series, closed))


def beta(t, alpha: float):
    """``(e^{alpha t} - 1) / (2 alpha)``, with ``beta(t; 0) = t/2``."""
    t = _check_time(t)
    y = alpha * t
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        closed = np.expm1(y) / (2.0 * alpha)
    series = (t / 2.0) * (1.0 + y / 2.0 + y * y / 6.0)
    return _scalar_or_array(np.where(np.abs(y) < SMALL_ALPHA_T, series, closed))


def geom_p(s, t, alpha: float):
    """Shifted-geometric parameter of the ancestor count at lookback ``s``.

    ``(e^{alpha s} - e^{alpha t}) / (1 - e^{alpha t})``, tending to
    ``(t - s)/t`` as alpha -> 0.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(~(s > 0)) or np.any(s > t):
        raise DomainError("geom_p requires 0 < s <= t")
    u = t - s
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if alpha >= 0:
            closed = np.expm1(-alpha * u) / np.expm1(-alpha * t)
        else:
            closed = np.exp(alpha * s) * np.expm1(alpha * u) / np.expm1(alpha * t)
    a = alpha
    series = (u / t) * (1.0 + a * s / 2.0 + a * a * (u * u / 6.0 + t * t / 12.0 - u * t / 4.0))
    return _scalar_or_array(np.where(np.abs(alpha * t) < SMALL_ALPHA_T, series, closed))


def population_density(x, t: float, params: ModelParams, tail_tol: float = POISSON_TAIL_TOL):
    """Law of ``X(t)`` as an (atom at zero, continuous density at ``x``) pair.

    The continuous part is the Poisson-weighted sum of Gamma(l, beta)
    densities over founder counts ``l >= 1``, truncated where the Poisson
    tail mass falls below ``tail_tol``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("x must be nonnegative")
    m = mu(t, params.alpha)
    b = beta(t, params.alpha)
    nu = params.x0 * m
    atom = math.exp(-nu)
    if params.x0 == 0:
        return atom, _scalar_or_array(np.zeros_like(x))
    l_max = max(1, int(stats.poisson.isf(tail_tol, nu)) + 1)
    ls = np.arange(1, l_max + 1, dtype=float)
    log_w = -nu + ls * math.log(nu) - special.gammaln(ls + 1)
    xx = x.reshape(-1, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_x = np.where(xx > 0, np.log(xx), -np.inf)
        log_gamma_pdf = (ls - 1) * log_x - xx / b - ls * math.log(b) - special.gammaln(ls)
    # (l - 1) log x is 0 for l = 1 even at x = 0
    log_gamma_pdf[:, 0] = -xx[:, 0] / b - math.log(b)
    density = np.exp(special.logsumexp(log_w + log_gamma_pdf, axis=1)).reshape(x.shape)
    return atom, _scalar_or_array(density)


def laplace_transform(phi, t: float, params: ModelParams):
    """``E[exp(-phi X(t))] = exp{-phi x0 mu beta / (1 + phi beta)}``."""
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0):
        raise DomainError("phi must be nonnegative")
    m = mu(t, params.alpha)
    b = beta(t, params.alpha)
    with np.errstate(invalid="ignore"):
        frac = np.where(np.isinf(phi), 1.0, phi * b / (1.0 + phi * b))
    return _scalar_or_array(np.exp(-params.x0 * m * frac))


def extinction_prob(t: float, params: ModelParams) -> float:
    """Probability that the population is extinct at time ``t``."""
    return math.exp(-params.x0 * mu(t, params.alpha))


def eventual_extinction_prob(params: ModelParams) -> float:
    if params.alpha <= 0:
        return 1.0
    return math.exp(-2.0 * params.alpha * params.x0)


def mean_population(t, params: ModelParams):
    return _scalar_or_array(params.x0 * np.exp(params.alpha * np.asarray(t, dtype=float)))


def var_population(t, params: ModelParams):
    """Variance ``2 x0 e^{alpha t} beta(t)`` of ``X(t)``."""
    t = np.asarray(t, dtype=float)
    return _scalar_or_array(2.0 * params.x0 * np.exp(params.alpha * t) * beta(t, params.alpha))


# -- scale conversions -------------------------------------------------------

def bgw_to_diffusion(scale: BgwScale) -> ModelParams:
    """Map discrete-process scale data to ``(alpha, x0)``."""
    alpha = scale.y0 * math.log(scale.lambda_offspring) / scale.sigma2
    return ModelParams(alpha=alpha, x0=scale.m0 / scale.y0)


def diffusion_to_bgw(params: ModelParams, y0: int, sigma2: float) -> BgwScale:
    """Inverse of :func:`bgw_to_diffusion` for a chosen ``y0`` and ``sigma2``.

    ``x0 * y0`` is rounded to the nearest integer subpopulation.
    """
    m0 = int(round(params.x0 * y0))
    lam = math.exp(params.alpha * sigma2 / y0)
    return BgwScale(y0=y0, lambda_offspring=lam, sigma2=sigma2, m0=m0)


def time_to_generations(t: float, scale: BgwScale) -> float:
    return t * scale.y0 / scale.sigma2


def generations_to_time(i, scale: BgwScale):
    return i * scale.sigma2 / scale.y0


def scale_s(scale: BgwScale) -> float:
    """Birth-death scale ``s = 2 / y0`` matched to a branching process."""
    return 2.0 / scale.y0


def physical_to_diffusion(y, s: float | None = None, scale: BgwScale | None = None):
    """Scaled population ``x`` of a physical population count ``y``.

    Uses ``x = s y / 2`` when ``s`` is given, otherwise
    ``x = log(lambda) y / (alpha sigma^2)`` from ``scale`` (requires alpha != 0).
    """
    return _scale_factor(s, scale) * y


def diffusion_to_physical(x, s: float | None = None, scale: BgwScale | None = None):
    """Physical population count corresponding to scaled population ``x``."""
    return x / _scale_factor(s, scale)


def _scale_factor(s, scale):
    if (s is None) == (scale is None):
        raise DomainError("give exactly one of s or scale")
    if s is not None:
        if not s > 0:
            raise DomainError("s must be positive")
        return 0.5 * s
    log_lam = math.log(scale.lambda_offspring)
    if log_lam == 0:
        raise DomainError("the log(lambda)/(alpha sigma^2) form needs alpha != 0")
    alpha = scale.y0 * log_lam / scale.sigma2
    return log_lam / (alpha * scale.sigma2)
