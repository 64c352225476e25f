"""Probabilistic reconciliation of hierarchical forecasts by conditioning."""

from .analytic import (
    bernoulli_closed_form,
    enumerate_reconciled,
    exact_pc,
    variance_decomposition,
)
from .distributions import (
    Bernoulli,
    HierForecast,
    MultivariateGaussian,
    NegativeBinomial,
    Normal,
    Poisson,
    TabulatedPmf,
)
from .gaussian import bottom_up_gaussian, convex_weights_single_upper, reconcile_gaussian
from .hierarchy import Hierarchy, aggregate, build_hierarchy, is_coherent
from .importance import estimate_pc, reconcile_is, sample_stats
from .pipeline import RunConfig, classify_effect, run

__version__ = "0.1.0"
