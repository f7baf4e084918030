"""Exact samplers for the processes behind the analytic results.

Every sampler takes ``source`` (a :class:`~fellercoal.rng.SeededSource`, a
numpy Generator or an integer seed) and is deterministic given it.  Batch
samplers draw ``size`` independent replicates at once.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .errors import DomainError, PopulationOverflowError
from .model import BgwScale, ModelParams, TimeWindow, beta, mu
from .rng import as_generator
from .rrp import BdRates, cumulative_intensity, inverse_cumulative_intensity, kendall_b

OFFSPRING_LAWS = ("poisson", "geometric")
DEFAULT_POPULATION_CAP = 10**12
_BATCH_FLOOR = 1024


# -- linear birth-death process ------------------------------------------------

def simulate_bd(m0: int, rates: BdRates, horizon: float, source) -> list:
    """One event-driven path ``[(time, count), ...]`` of a linear BD process up to ``horizon``.

    In state ``m`` the process waits Exp(``m (lambda + mu)``) and then moves
    up with probability ``lambda / (lambda + mu)``, otherwise down; 0 absorbs.
    The path ends with the state at ``horizon``.
    """
    if int(m0) != m0 or m0 < 1:
        raise DomainError("m0 must be a positive integer")
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    gen = as_generator(source)
    total = rates.lambda_hat + rates.mu_hat
    path = [(0.0, int(m0))]
    if total == 0:
        path.append((float(horizon), int(m0)))
        return path
    up = rates.lambda_hat / total
    time, m = 0.0, int(m0)
    while m > 0:
        time += gen.standard_exponential() / (m * total)
        if time >= horizon:
            break
        m += 1 if gen.random() < up else -1
        path.append((time, m))
    path.append((float(horizon), m))
    return path


def simulate_bd_final(m0: int, rates: BdRates, horizon: float, size: int, source,
                      max_events: int = 10**7) -> np.ndarray:
    """Counts at ``horizon`` of ``size`` independent event-driven BD paths.

    Same stepping rule as :func:`simulate_bd`, advanced for all replicates in
    lock-step.
    """
    if int(m0) != m0 or m0 < 1:
        raise DomainError("m0 must be a positive integer")
    gen = as_generator(source)
    total = rates.lambda_hat + rates.mu_hat
    counts = np.full(size, int(m0), dtype=np.int64)
    if total == 0:
        return counts
    up = rates.lambda_hat / total
    times = np.zeros(size)
    active = np.arange(size)
    for _ in range(max_events):
        if active.size == 0:
            return counts
        m = counts[active]
        times[active] += gen.standard_exponential(active.size) / (m * total)
        moving = times[active] < horizon
        idx = active[moving]
        counts[idx] += np.where(gen.random(idx.size) < up, 1, -1)
        active = idx[counts[idx] > 0]
    raise DomainError(f"more than {max_events} event rounds; horizon too long for these rates")


def sample_bd_transition(m0, rates: BdRates, horizon: float, size: int, source) -> np.ndarray:
    """Exact draws of ``M(horizon)`` from the closed-form BD transition law.

    Each of the ``m0`` founders is extinct with probability ``mu B`` and
    otherwise leaves a shifted-geometric(``lambda B``) number of
    descendants, with ``B = B(horizon)`` from :func:`~fellercoal.rrp.kendall_b`.
    """
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    gen = as_generator(source)
    b = kendall_b(horizon, rates)
    survive = 1.0 - rates.mu_hat * b
    q = rates.lambda_hat * b
    m0 = np.broadcast_to(np.asarray(m0, dtype=np.int64), (size,))
    survivors = gen.binomial(m0, survive)
    extra = np.zeros(size, dtype=np.int64)
    pos = survivors > 0
    # sum of S shifted geometrics = S + NegBin(S failures, success 1 - q)
    extra[pos] = gen.negative_binomial(survivors[pos], 1.0 - q)
    return survivors + extra


# -- Bienayme-Galton-Watson process ----------------------------------------------

def offspring_variance(lam: float, offspring: str) -> float:
    if offspring == "poisson":
        return lam
    if offspring == "geometric":
        return lam * (1.0 + lam)
    raise DomainError(f"offspring law must be one of {OFFSPRING_LAWS}, got {offspring!r}")


def bgw_scale_for(params: ModelParams, y0: int, offspring: str = "poisson") -> BgwScale:
    """Branching-process scale whose diffusion limit has the given ``(alpha, x0)``.

    Solves ``alpha = y0 log(lambda) / sigma2(lambda)`` for the offspring mean
    with ``sigma2`` the variance of the chosen offspring law.
    """
    offspring_variance(1.0, offspring)
    if params.alpha == 0:
        lam = 1.0
    else:
        def eq(log_lam):
            return y0 * log_lam / offspring_variance(math.exp(log_lam), offspring) - params.alpha
        guess = params.alpha * offspring_variance(1.0, offspring) / y0
        width = 4 * abs(guess) + 1e-12
        log_lam = optimize.brentq(eq, guess - width, guess + width, xtol=1e-300, rtol=1e-15)
        lam = math.exp(log_lam)
    m0 = int(round(params.x0 * y0))
    return BgwScale(y0=y0, lambda_offspring=lam, sigma2=offspring_variance(lam, offspring), m0=m0)


def _offspring_totals(gen, parents, lam, offspring):
    if offspring == "poisson":
        return gen.poisson(lam * parents)
    out = np.zeros_like(parents)
    pos = parents > 0
    out[pos] = gen.negative_binomial(parents[pos], 1.0 / (1.0 + lam))
    return out


def _check_scale(scale, offspring):
    var = offspring_variance(scale.lambda_offspring, offspring)
    if not math.isclose(var, scale.sigma2, rel_tol=1e-9):
        raise DomainError(f"sigma2={scale.sigma2} does not match the {offspring} offspring "
                          f"variance {var}")


def simulate_bgw(scale: BgwScale, offspring: str, generations: int, source,
                 cap: int = DEFAULT_POPULATION_CAP) -> list:
    """Counts ``M(0) = m0, M(1), ..., M(generations)`` of the tracked subpopulation.

    Raises :class:`PopulationOverflowError` if a generation exceeds ``cap``.
    """
    _check_scale(scale, offspring)
    if int(generations) != generations or generations < 1:
        raise DomainError("generations must be a positive integer")
    gen = as_generator(source)
    counts = [int(scale.m0)]
    m = np.array([scale.m0], dtype=np.int64)
    for i in range(generations):
        m = _offspring_totals(gen, m, scale.lambda_offspring, offspring)
        if m[0] > cap:
            raise PopulationOverflowError(
                f"population {m[0]} exceeded cap {cap} at generation {i + 1}: supercritical blow-up")
        counts.append(int(m[0]))
    return counts


def sample_bgw_population(scale: BgwScale, offspring: str, generations: int, size: int,
                          source, cap: int = DEFAULT_POPULATION_CAP) -> np.ndarray:
    """``M(generations)`` for ``size`` independent replicates."""
    _check_scale(scale, offspring)
    gen = as_generator(source)
    m = np.full(size, scale.m0, dtype=np.int64)
    alive = np.arange(size)
    for i in range(generations):
        m[alive] = _offspring_totals(gen, m[alive], scale.lambda_offspring, offspring)
        if np.any(m[alive] > cap):
            raise PopulationOverflowError(
                f"population exceeded cap {cap} at generation {i + 1}: supercritical blow-up")
        alive = alive[m[alive] > 0]
    return m


# -- Feller diffusion and ancestor counts ---------------------------------------

def _zero_truncated_poisson(gen, nu, size):
    # first point of a rate-nu Poisson process on [0, 1] given at least one point
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (size,))
    u = gen.random(size)
    first = -np.log1p(u * np.expm1(-nu)) / nu
    first = np.minimum(first, 1.0)
    return 1 + gen.poisson(nu * (1.0 - first))


def sample_feller_transition(t: float, params: ModelParams, size: int, source,
                             conditioned_on_survival: bool = False) -> np.ndarray:
    """Exact draws of ``X(t)``: Gamma(L, beta(t)) with L ~ Poisson(x0 mu(t)) founders.

    With ``conditioned_on_survival`` the founder count is zero-truncated, which
    gives the law of ``X(t)`` given ``X(t) > 0``.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    gen = as_generator(source)
    if params.x0 == 0:
        if conditioned_on_survival:
            raise DomainError("cannot condition on survival when x0 = 0")
        return np.zeros(size)
    nu = params.x0 * mu(t, params.alpha)
    b = beta(t, params.alpha)
    if conditioned_on_survival:
        founders = _zero_truncated_poisson(gen, nu, size)
    else:
        founders = gen.poisson(nu, size)
    out = np.zeros(size)
    pos = founders > 0
    out[pos] = gen.gamma(founders[pos], b)
    return out


def _rejection_fill(draw, accept, size, gen, accept_rate_floor=1e-4):
    """Collect ``size`` accepted draws from batches of ``draw(gen, m)``."""
    chunks = []
    got = 0
    batch = max(size, _BATCH_FLOOR)
    rounds = 0
    while got < size:
        values = draw(gen, batch)
        kept = values[accept(values)]
        chunks.append(kept)
        got += kept.size
        rounds += 1
        rate = max(got / (rounds * batch), accept_rate_floor)
        batch = max(_BATCH_FLOOR, int(1.2 * (size - got) / rate) + 1)
        if rounds > 10_000:
            raise DomainError("acceptance probability too small for rejection sampling")
    return np.concatenate(chunks)[:size]


def sample_population_ancestors(window: TimeWindow, params: ModelParams, size: int, source,
                                conditioned_on_survival: bool = False) -> np.ndarray:
    """``A_inf(s; t)`` by two steps: ``X(t - s)``, then Poisson(``X mu(s)``).

    With ``conditioned_on_survival`` replicates with no ancestors (equivalently
    ``X(t) = 0``) are rejected.
    """
    gen = as_generator(source)
    m_s = mu(window.s, params.alpha)
    lag = window.t - window.s

    def draw(g, m):
        if lag > 0:
            x = sample_feller_transition(lag, params, m, g)
        else:
            x = np.full(m, float(params.x0))
        return g.poisson(x * m_s)

    if not conditioned_on_survival:
        return draw(gen, size)
    if params.x0 == 0:
        raise DomainError("cannot condition on survival when x0 = 0")
    return _rejection_fill(draw, lambda v: v > 0, size, gen)


def sample_subsample_ancestors(n: int, k, size: int, source) -> np.ndarray:
    """Number of the ``k`` founder families represented in a sample of ``n``.

    The sample's family counts are a uniform composition of ``n`` into ``k``
    parts, drawn sequentially as a Polya urn: the ``(m+1)``-th sampled
    individual opens a new family with probability ``(k - J)/(k + m)`` when
    ``J`` families are already represented.  ``k`` may vary per replicate.
    """
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    k = np.broadcast_to(np.asarray(k, dtype=float), (size,))
    if np.any(k < 1):
        raise DomainError("k must be a positive integer")
    gen = as_generator(source)
    j = np.ones(size, dtype=np.int64)
    for m in range(1, n):
        j += gen.random(size) < (k - j) / (k + m)
    return j


def sample_sample_ancestors(n: int, window: TimeWindow, params: ModelParams, size: int,
                            source) -> np.ndarray:
    """``A_n(s; t)``: population ancestors given survival, then subsampled."""
    gen = as_generator(source)
    k = sample_population_ancestors(window, params, size, gen, conditioned_on_survival=True)
    return sample_subsample_ancestors(n, k, size, gen)


# -- coalescent times of the reversed reconstructed process ------------------------

def _check_tau_min(tau_min):
    if not tau_min > 0:
        raise DomainError("tau_min must be positive: the process has infinitely many points near 0")


def sample_coalescent_times_nhpp(x: float, alpha: float, tau_min: float, source) -> np.ndarray:
    """Points beyond ``tau_min`` of the Poisson process with mean measure ``x / beta(tau)`` on (tau, inf).

    Unit-rate arrival times ``E_1 < E_2 < ...`` are mapped to
    ``tau_i = (1/alpha) log(1 + 2 alpha x / E_i)``, so the result is
    decreasing: the first entry is the origin of the single founder.
    """
    _check_tau_min(tau_min)
    gen = as_generator(source)
    level = cumulative_intensity(tau_min, x, alpha)
    arrivals = []
    e = 0.0
    while True:
        e += gen.standard_exponential()
        if e >= level:
            break
        arrivals.append(e)
    if not arrivals:
        return np.empty(0)
    return np.atleast_1d(inverse_cumulative_intensity(np.array(arrivals), x, alpha))


def sample_coalescent_times_nhpp_batch(x: float, alpha: float, tau_min: float, size: int,
                                       source) -> np.ndarray:
    """``size`` independent runs of :func:`sample_coalescent_times_nhpp`.

    Returns a ``(size, width)`` array, rows decreasing and padded with NaN
    past ``tau_min``.
    """
    _check_tau_min(tau_min)
    gen = as_generator(source)
    level = cumulative_intensity(tau_min, x, alpha)
    width = int(level + 10 * math.sqrt(level) + 20)
    arrivals = np.cumsum(gen.standard_exponential((size, width)), axis=1)
    while np.any(arrivals[:, -1] < level):
        more = arrivals[:, -1:] + np.cumsum(gen.standard_exponential((size, width)), axis=1)
        arrivals = np.concatenate([arrivals, more], axis=1)
    keep = arrivals < level
    width = max(int(keep.sum(axis=1).max()), 1)
    arrivals = arrivals[:, :width]
    keep = keep[:, :width]
    with np.errstate(divide="ignore"):
        taus = np.where(keep, np.log1p(2.0 * alpha * x / arrivals) / alpha, np.nan)
    return taus


def sample_sample_inter_coalescent(n: int, x: float, alpha: float, tau_min: float, size: int,
                                   source) -> np.ndarray:
    """Time spent by a sample of ``n`` with ``j`` ancestors, ``j = 1..n``, above ``tau_min``.

    Population coalescence times come from the Poisson-process sampler.  At
    ``tau_min`` the sample's ancestors are drawn by
    :func:`sample_subsample_ancestors` from the population count; going back,
    each population coalescence joins a uniformly chosen pair, which merges
    two sample lineages with probability ``J (J - 1) / (i (i - 1))`` when
    ``i`` population and ``J`` sample lineages exist.  Returns a
    ``(size, n)`` array whose column ``j - 1`` holds the time with ``j``
    sample ancestors within (tau_min, inf); time below ``tau_min`` is not
    simulated.
    """
    gen = as_generator(source)
    taus = sample_coalescent_times_nhpp_batch(x, alpha, tau_min, size, gen)
    counts = np.sum(~np.isnan(taus), axis=1)
    if np.any(counts == 0):
        raise DomainError("tau_min too large: some runs have no ancestors at tau_min")
    j = sample_subsample_ancestors(n, counts, size, gen)
    occupancy = np.zeros((size, n))
    rows = np.arange(size)
    prev = np.full(size, float(tau_min))
    for r in range(int(counts.max())):
        live = counts - r >= 1
        rr = rows[live]
        i = counts[live] - r
        col = i - 1
        t_next = taus[rr, col]
        np.add.at(occupancy, (rr, j[live] - 1), t_next - prev[live])
        prev[rr] = t_next
        jj = j[live]
        with np.errstate(divide="ignore", invalid="ignore"):
            p_merge = np.where(i > 1, jj * (jj - 1) / (i * (i - 1.0)), 0.0)
        j[rr] = jj - (gen.random(rr.size) < p_merge)
    return occupancy
