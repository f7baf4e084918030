"""Ancestor counts and coalescent times of Feller branching diffusions."""
from .coalescent import (
    DiscretePmf,
    PolyaAeppliParams,
    ancestor_params,
    population_ancestors_distribution,
    population_ancestors_pmf,
    qs_mean_Wk,
    qs_population_ancestors_pmf,
    qs_sample_ancestors_pmf,
    qs_Tk_survival,
    qs_Wk_survival,
    sample_ancestors_distribution,
    sample_ancestors_pmf,
    sample_given_population_pmf,
)
from .errors import DomainError, NumericalError, PopulationOverflowError
from .model import BgwScale, ModelParams, TimeWindow, beta, mu
from .rng import DEFAULT_SEED, SeededSource
from .rrp import BdRates, bd_rates, generate_rrp_tree
from .trees import CoalescentTree

__version__ = "0.1.0"
