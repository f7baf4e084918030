"""Special functions and quadrature used by the analytic modules."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, NumericalError

# -- Kummer's confluent hypergeometric function ------------------------------

KUMMER_RTOL = 1e-12
KUMMER_MAX_TERMS = 100_000
_RESCALE = 1e250


def log_kummer_m(a: float, b: float, z: float, rtol: float = KUMMER_RTOL,
                 max_terms: int = KUMMER_MAX_TERMS) -> float:
    """Log of ``M(a, b, z) = sum_k a_(k) / b_(k) z^k / k!`` for a, b > 0, z >= 0.

    All terms are positive, so the series is summed directly.  Terms are
    rescaled on the fly so that large ``z`` does not overflow.  Summation
    stops once a geometric bound on the remaining tail is below ``rtol``
    times the partial sum.
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"kummer_m needs a, b > 0, got a={a}, b={b}")
    if not z >= 0:
        raise DomainError(f"kummer_m needs z >= 0, got {z}")
    if z == 0:
        return 0.0
    term = 1.0
    total = 1.0
    log_scale = 0.0
    for k in range(max_terms):
        term *= (a + k) / (b + k) * z / (k + 1)
        total += term
        if total > _RESCALE:
            total /= _RESCALE
            term /= _RESCALE
            log_scale += math.log(_RESCALE)
        # every later term ratio is at most q, so the tail is below term * q / (1 - q)
        q = z * max(1.0, (a + k + 1) / (b + k + 1)) / (k + 2)
        if q < 1.0 and term * q / (1.0 - q) <= 0.1 * rtol * total:
            return log_scale + math.log(total)
    raise NumericalError(
        f"Kummer series for M({a}, {b}, {z}) did not converge in {max_terms} terms",
        value=math.exp(min(log_scale + math.log(total), 709.0)),
    )


def kummer_m(a: float, b: float, z: float, rtol: float = KUMMER_RTOL,
             max_terms: int = KUMMER_MAX_TERMS) -> float:
    """Kummer's confluent hypergeometric function ``M(a, b, z)``."""
    return math.exp(log_kummer_m(a, b, z, rtol, max_terms))


# -- combinatorics in log space ----------------------------------------------

def log_rising_factorial(k, n):
    """``log k_(n) = log k(k+1)...(k+n-1)``.

    Exact integer products are used for small arguments, log-Gamma
    differences otherwise.  Array inputs always use log-Gamma.
    """
    if np.ndim(k) or np.ndim(n):
        k = np.asarray(k, dtype=float)
        n = np.asarray(n, dtype=float)
        return special.gammaln(k + n) - special.gammaln(k)
    if n < 0 or k <= 0:
        raise DomainError(f"rising factorial needs k >= 1, n >= 0, got k={k}, n={n}")
    if n == 0:
        return 0.0
    if int(k) == k and n <= 256:
        return math.log(math.prod(range(int(k), int(k) + int(n))))
    return math.lgamma(k + n) - math.lgamma(k)


def log_falling_factorial(n, j):
    """``log n_[j] = log n(n-1)...(n-j+1)``."""
    return special.gammaln(np.asarray(n, dtype=float) + 1) - special.gammaln(np.asarray(n - j, dtype=float) + 1)


def log_binom(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


# -- Polya-Aeppli (geometric compound Poisson) law ---------------------------

def log_expm1(nu: float, log_nu: float | None = None) -> float:
    """``log(e^nu - 1)``, accurate when ``nu`` underflows and only ``log_nu`` is known."""
    if log_nu is None:
        log_nu = math.log(nu)
    if nu > 30:
        return nu + math.log1p(-math.exp(-nu))
    if nu > 1e-5:
        return math.log(math.expm1(nu))
    # log(expm1(nu)/nu) = nu/2 + nu^2/24 + O(nu^4)
    return log_nu + nu / 2.0 + nu * nu / 24.0


def polya_aeppli_log_series(k, log_nu: float, p: float) -> np.ndarray:
    """``log sum_{j=1..k} C(k-1, j-1) (nu(1-p))^j p^(k-j) / j!`` for each ``k >= 1``.

    This is ``log P(Q = k) + nu`` for a Polya-Aeppli variable ``Q``.
    """
    ks = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if np.any(ks < 1):
        raise DomainError("series defined for k >= 1")
    log_a = log_nu + math.log1p(-p)
    out = np.empty(ks.shape, dtype=float)
    if p == 0.0:
        out[:] = ks * log_a - special.gammaln(ks + 1.0)
        return out
    log_p = math.log(p)
    for idx, kk in enumerate(ks):
        j = np.arange(1, kk + 1, dtype=float)
        terms = log_binom(kk - 1, j - 1) + j * log_a + (kk - j) * log_p - special.gammaln(j + 1)
        out[idx] = special.logsumexp(terms)
    return out


def _check_pa(nu, p, log_nu=None):
    if not 0 <= p < 1:
        raise DomainError(f"p must lie in [0, 1), got {p}")
    if log_nu is None:
        if not nu > 0:
            raise DomainError(f"nu must be positive, got {nu}")
        log_nu = math.log(nu)
    return log_nu


def polya_aeppli_logpmf(k, nu: float, p: float, log_nu: float | None = None):
    """Log pmf of the Polya-Aeppli(nu, p) law.

    ``P(Q = 0) = e^{-nu}`` and, for ``k >= 1``,
    ``P(Q = k) = e^{-nu} sum_{j=1}^{k} C(k-1, j-1) (nu (1-p))^j p^{k-j} / j!``,
    the convolution of a Poisson(nu) number of shifted geometric summands.
    """
    log_nu = _check_pa(nu, p, log_nu)
    ks = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if np.any(ks < 0):
        raise DomainError("k must be nonnegative")
    out = np.full(ks.shape, -nu, dtype=float)
    pos = ks > 0
    if np.any(pos):
        out[pos] += polya_aeppli_log_series(ks[pos], log_nu, p)
    return float(out[0]) if np.ndim(k) == 0 else out


def polya_aeppli_pmf(k, nu: float, p: float, log_nu: float | None = None):
    return np.exp(polya_aeppli_logpmf(k, nu, p, log_nu))


def polya_aeppli_conditional_logpmf(k, nu: float, p: float, log_nu: float | None = None):
    """Log pmf of Polya-Aeppli(nu, p) conditioned on being positive.

    Stable when ``nu`` is so small that ``1 - e^{-nu}`` underflows.
    """
    log_nu = _check_pa(nu, p, log_nu)
    ks = np.atleast_1d(np.asarray(k, dtype=np.int64))
    out = np.full(ks.shape, -np.inf)
    pos = ks > 0
    if np.any(pos):
        # e^{-nu} / (1 - e^{-nu}) = 1 / (e^{nu} - 1)
        out[pos] = polya_aeppli_log_series(ks[pos], log_nu, p) - log_expm1(nu, log_nu)
    return float(out[0]) if np.ndim(k) == 0 else out


def polya_aeppli_mean(nu: float, p: float) -> float:
    return nu / (1.0 - p)


# -- adaptive quadrature ------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and limits for :func:`integrate`.

    ``singular_endpoint_flags`` marks endpoints near which the integrand is
    singular or sharply peaked; flagged ends get a geometrically graded
    initial mesh.
    """

    abs_tol: float = 1e-13
    rel_tol: float = 1e-11
    max_subdivisions: int = 4000
    singular_endpoint_flags: tuple[bool, bool] = (False, False)

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be at least 1")


DEFAULT_QUADRATURE = QuadratureSpec()

# 15-point Kronrod extension of the 7-point Gauss rule.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_WK_FULL = np.concatenate([_WK[:-1], _WK[::-1]])
_WG_FULL = np.zeros(15)
_WG_FULL[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])
_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


def _gk15(f, a, b):
    half = 0.5 * (b - a)
    center = 0.5 * (a + b)
    fx = np.asarray(f(center + half * _NODES), dtype=float)
    if fx.shape != (15,):
        fx = np.broadcast_to(fx, (15,))
    if not np.all(np.isfinite(fx)):
        raise NumericalError(f"integrand not finite on [{a}, {b}]")
    res_k = half * np.dot(_WK_FULL, fx)
    res_g = half * np.dot(_WG_FULL, fx)
    res_abs = abs(half) * np.dot(_WK_FULL, np.abs(fx))
    mean = res_k / (2 * half) if half else 0.0
    res_asc = abs(half) * np.dot(_WK_FULL, np.abs(fx - mean))
    err = abs(res_k - res_g)
    if res_asc != 0 and err != 0:
        err = res_asc * min(1.0, (200 * err / res_asc) ** 1.5)
    if res_abs > _TINY / (50 * _EPS):
        err = max(50 * _EPS * res_abs, err)
    return res_k, err


def _graded_mesh(a, b, flags, levels=40):
    points = {a, b}
    width = b - a
    for i in range(1, levels + 1):
        h = width * 0.5 ** i
        if flags[0]:
            points.add(a + h)
        if flags[1]:
            points.add(b - h)
    return sorted(p for p in points if a <= p <= b)


def integrate(f, lower: float, upper: float, quad: QuadratureSpec = DEFAULT_QUADRATURE,
              return_error: bool = False):
    """Adaptive Gauss-Kronrod (G7/K15) integral of a vectorised ``f``.

    ``upper`` may be ``inf``; the half line is then mapped onto [0, 1) by
    ``x = lower + u / (1 - u)``.  Gauss-Kronrod nodes are interior, so
    integrable endpoint singularities are never evaluated.  Intervals with
    the largest error estimate are bisected until the summed error is
    within ``max(abs_tol, rel_tol * |I|)``; otherwise :class:`NumericalError`
    is raised carrying the best estimate and its error bound.
    """
    if math.isnan(lower) or math.isnan(upper):
        raise DomainError("integration limits must not be NaN")
    if upper == lower:
        return (0.0, 0.0) if return_error else 0.0
    if upper < lower:
        res = integrate(f, upper, lower, quad, return_error=True)
        return (-res[0], res[1]) if return_error else -res[0]
    if math.isinf(lower):
        raise DomainError("lower limit must be finite")
    g = f
    a, b = lower, upper
    flags = quad.singular_endpoint_flags
    if math.isinf(upper):
        def g(u, _f=f, _lo=lower):
            u = np.asarray(u, dtype=float)
            w = 1.0 - u
            return _f(_lo + u / w) / (w * w)
        a, b = 0.0, 1.0

    heap = []
    total = 0.0
    err_total = 0.0
    mesh = _graded_mesh(a, b, flags) if any(flags) else [a, b]
    for lo, hi in zip(mesh[:-1], mesh[1:]):
        val, err = _gk15(g, lo, hi)
        heapq.heappush(heap, (-err, lo, hi, val))
        total += val
        err_total += err
    n_intervals = len(heap)
    while err_total > max(quad.abs_tol, quad.rel_tol * abs(total)):
        if n_intervals >= quad.max_subdivisions:
            raise NumericalError(
                f"quadrature tolerance not met after {n_intervals} subintervals",
                value=total, error=err_total)
        neg_err, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise NumericalError("interval too small to bisect", value=total, error=err_total)
        v1, e1 = _gk15(g, lo, mid)
        v2, e2 = _gk15(g, mid, hi)
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        total += v1 + v2 - val
        err_total += e1 + e2 + neg_err
        n_intervals += 1
        if n_intervals % 64 == 0:
            # resum to stop drift in the running totals
            total = math.fsum(item[3] for item in heap)
            err_total = math.fsum(-item[0] for item in heap)
    total = math.fsum(item[3] for item in heap)
    return (total, err_total) if return_error else total
