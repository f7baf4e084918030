"""Goodness-of-fit comparisons between analytic laws and Monte Carlo samples."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .coalescent import DiscretePmf
from .errors import DomainError

MIN_EXPECTED = 5.0
MIN_CHI_SQUARE_SAMPLES = 1000
CHI_SQUARE = "chi_square"
KOLMOGOROV_SMIRNOV = "kolmogorov_smirnov"
OTHER_LABEL = "other"


@dataclass
class GofReport:
    statistic_kind: str
    statistic: float
    p_value: float
    n_samples: int
    bins: list = field(default_factory=list)
    deficit_mass: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _pool(labels, observed, expected, min_expected):
    """Merge adjacent bins left to right until every expected count reaches ``min_expected``."""
    pooled = []
    acc_labels, acc_obs, acc_exp = [], 0, 0.0
    for lab, o, e in zip(labels, observed, expected):
        acc_labels.append(lab)
        acc_obs += o
        acc_exp += e
        if acc_exp >= min_expected:
            pooled.append([acc_labels, acc_obs, acc_exp])
            acc_labels, acc_obs, acc_exp = [], 0, 0.0
    if acc_labels:
        if pooled:
            pooled[-1][0] += acc_labels
            pooled[-1][1] += acc_obs
            pooled[-1][2] += acc_exp
        else:
            pooled.append([acc_labels, acc_obs, acc_exp])
    out = []
    for labs, o, e in pooled:
        name = str(labs[0]) if len(labs) == 1 else f"{labs[0]}..{labs[-1]}"
        out.append((name, int(o), float(e)))
    return out


def chi_square_discrete(pmf: DiscretePmf, samples, min_expected: float = MIN_EXPECTED) -> GofReport:
    """Pearson chi-square of integer ``samples`` against ``pmf``.

    Values outside the listed support, and the mass the pmf does not list
    (its tail plus any defect ``1 - total_mass``), share a final ``other``
    bin.  ``deficit_mass`` reports ``1 - total_mass``.
    """
    samples = np.asarray(samples)
    n = samples.size
    if n < MIN_CHI_SQUARE_SAMPLES:
        raise DomainError(f"chi-square needs at least {MIN_CHI_SQUARE_SAMPLES} samples, got {n}")
    support = pmf.support
    idx = samples - pmf.support_start
    inside = (idx >= 0) & (idx < len(support))
    observed = np.bincount(idx[inside].astype(np.int64), minlength=len(support))
    expected = n * pmf.probabilities
    other_obs = int(n - inside.sum())
    other_exp = max(n * (1.0 - pmf.listed_mass()), 0.0)
    labels = [str(k) for k in support] + [OTHER_LABEL]
    bins = _pool(labels, list(observed) + [other_obs], list(expected) + [other_exp], min_expected)
    deficit = max(1.0 - pmf.total_mass, 0.0)
    if len(bins) < 2:
        # a single atom: the only valid sample is one that matches it exactly
        ok = other_obs == 0 or other_exp > 0
        return GofReport(CHI_SQUARE, 0.0, 1.0 if ok else 0.0, n, bins, deficit)
    obs = np.array([b[1] for b in bins], dtype=float)
    exp = np.array([b[2] for b in bins])
    # expected counts are renormalised so both vectors have the same total
    exp *= n / exp.sum()
    stat = float(np.sum((obs - exp) ** 2 / exp))
    p = float(stats.chi2.sf(stat, len(bins) - 1))
    return GofReport(CHI_SQUARE, stat, p, n, bins, deficit)


def ks_continuous(cdf, samples, deficit_mass: float = 0.0) -> GofReport:
    """One-sample Kolmogorov-Smirnov test against a continuous ``cdf``."""
    samples = np.asarray(samples, dtype=float)
    res = stats.kstest(samples, cdf)
    return GofReport(KOLMOGOROV_SMIRNOV, float(res.statistic), float(res.pvalue), samples.size,
                     [], deficit_mass)


def gof_compare(analytic, empirical, kind: str = CHI_SQUARE) -> GofReport:
    """Compare ``empirical`` samples with an analytic law.

    ``kind="chi_square"`` expects a :class:`DiscretePmf`;
    ``kind="kolmogorov_smirnov"`` expects a cdf callable or a survival
    function wrapped as ``("survival", sf)``.
    """
    if kind == CHI_SQUARE:
        if not isinstance(analytic, DiscretePmf):
            raise DomainError("chi-square comparison needs a DiscretePmf")
        return chi_square_discrete(analytic, empirical)
    if kind == KOLMOGOROV_SMIRNOV:
        if isinstance(analytic, tuple) and analytic[0] == "survival":
            sf = analytic[1]
            return ks_continuous(lambda v: 1.0 - sf(v), empirical)
        return ks_continuous(analytic, empirical)
    raise DomainError(f"unknown statistic kind {kind!r}")
