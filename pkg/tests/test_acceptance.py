"""Acceptance suite: one test per criterion, one PASS/FAIL line printed per criterion.

Every check name, comparison and tolerance is pinned here, so a change to
the verification registry that loosens a threshold fails this suite.
"""
import pytest

from fellercoal.rng import DEFAULT_SEED
from fellercoal.verification import CHECKS

P = (">", 1e-3)        # chi-square p-value floor
SE3 = ("<=", 3.0)      # |difference| / standard error
Y0 = 2000


def _bgw_tolerance(result):
    # 3 standard errors plus the O(1/y0) discretisation allowance
    return 3 * result.details["standard_error"] + 1.0 / Y0


CRITERIA = [
    (1, "ancestor count law: two-step sampler vs Polya-Aeppli pmf", "ancestor-count-law", {
        "two-step-sampler-alpha=-1": P,
        "two-step-sampler-alpha=0": P,
        "two-step-sampler-alpha=0.8": P,
        "s=t-is-poisson": P,
    }),
    (2, "Polya-Aeppli closed form vs pgf inversion, k <= 50", "polya-aeppli-closed-form", {
        "pgf-inversion-nu=0.5-p=0.1": ("<=", 1e-10),
        "pgf-inversion-nu=2-p=0.5": ("<=", 1e-10),
        "pgf-inversion-nu=5-p=0.9": ("<=", 1e-10),
    }),
    (3, "sample-given-population law vs exhaustive compositions, n, k <= 12", "sample-given-population", {
        "exhaustive-compositions": ("==", 0.0),
    }),
    (4, "sample ancestor law vs composed Monte Carlo and normalisation", "sample-ancestor-law", {
        "composed-sampler-n=2": P,
        "composed-sampler-n=3": P,
        "composed-sampler-n=6": P,
        "normalisation-n=2": ("<=", 1e-10),
        "normalisation-n=3": ("<=", 1e-10),
        "normalisation-n=6": ("<=", 1e-10),
    }),
    (5, "quasi-stationary limit, W_k means and sample occupation times", "quasi-stationary", {
        "large-t-conditioned-limit": ("<=", 1e-6),
        "mean-from-survival-k=2": ("<=", 1e-4),
        "mean-from-survival-k=3": ("<=", 1e-4),
        "mean-from-survival-k=4": ("<=", 1e-4),
        "sample-occupation-j=2-n=2": ("<=", 1e-4),
        "sample-occupation-j=2-n=5": ("<=", 1e-4),
        "sample-occupation-j=4-n=7": ("<=", 1e-4),
    }),
    (6, "birth-rate s-independence and rho/tau time change", "rate-identities", {
        "s-independence-of-birth-rate": ("<=", 1e-12),
        "rho-tau-round-trip": ("<=", 1e-12),
        "rho-derivative-is-death-rate": ("<=", 1e-6),
    }),
    (7, "coalescent-time point process counts and cumulative intensity", "nhpp-coalescent-times", {
        "points-beyond-tau=0.3": P,
        "points-beyond-tau=1": P,
        "cumulative-intensity-quadrature": ("<=", 1e-8),
    }),
    (8, "sample ancestors at lookback tau: two forms, two mean routes, Monte Carlo", "sample-coalescent-times", {
        "series-vs-integral-grid": ("<=", 1e-8),
        "mean-double-vs-tau-integral": ("<=", 1e-5),
        "mean-vs-monte-carlo": SE3,
    }),
    (9, "diffusion limits of birth-death and branching processes, Yaglom law", "diffusion-limits", {
        "bd-limit-mean": SE3,
        "bd-limit-variance": SE3,
        "bgw-limit-extinction": ("<=", _bgw_tolerance),
        "bgw-limit-mean": ("<=", _bgw_tolerance),
        "yaglom-exponential": ("<=", 0.02),
    }),
    (10, "birth-death size given survival is shifted geometric", "bd-conditional-law", {
        "event-driven-given-survival": P,
        "event-driven-mean": SE3,
        "closed-form-transition-given-survival": P,
    }),
    (11, "every CLI command is byte-identical across reruns", "cli-determinism", {
        f"run-{i}-{cmd}": ("==", 0.0)
        for i, cmd in enumerate(["pmf", "pmf", "qs", "rrp-tree", "rrp-tree", "simulate", "simulate",
                                 "simulate", "simulate", "simulate", "simulate", "verify"])
    }),
]


@pytest.mark.parametrize("number,title,group,pinned", CRITERIA, ids=[f"criterion-{c[0]}" for c in CRITERIA])
def test_criterion(number, title, group, pinned, capsys):
    results = CHECKS[group](seed=DEFAULT_SEED)
    for r in results:
        r.group = group
    problems = []
    names = [r.name for r in results]
    if sorted(names) != sorted(pinned):
        problems.append(f"checks {sorted(names)} differ from pinned {sorted(pinned)}")
    for r in results:
        if r.name not in pinned:
            continue
        comparison, tolerance = pinned[r.name]
        if callable(tolerance):
            tolerance = tolerance(r)
        if r.comparison != comparison or r.tolerance != pytest.approx(tolerance, rel=1e-12, abs=0):
            problems.append(f"{r.name}: threshold {r.comparison} {r.tolerance} is not the pinned "
                            f"{comparison} {tolerance}")
    failed = [r for r in results if not r.passed]
    verdict = "PASS" if not failed and not problems else "FAIL"
    with capsys.disabled():
        print()
        for r in results:
            print(f"    {r.line()}")
        for msg in problems:
            print(f"    [PINNING] {msg}")
        print(f"{verdict} criterion {number}: {title}")
    assert not problems, problems
    assert not failed, [r.line() for r in failed]
