"""Reconciliation by conditioning via importance sampling.

Bottom draws from the base bottom forecast are weighted by the upper base
density evaluated at their aggregate, then resampled with replacement.
With independent upper and bottom blocks the importance weight of a draw
``b`` is just ``pi_U(A b)``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .distributions import HierForecast, MultivariateGaussian
from .errors import (
    AllWeightsZero,
    ContinuousUnsupported,
    EmptySamples,
    InsufficientSamples,
    LowESSWarning,
    MultipleUppersUnsupported,
    NotIndependent,
)
from .hierarchy import Hierarchy, aggregate

__all__ = [
    "ReconciledSamples",
    "SampleStats",
    "PcEstimate",
    "reconcile_is",
    "estimate_pc",
    "sample_stats",
    "empirical_quantile",
]

DEFAULT_DRAWS = 100_000
MIN_DRAWS = 1000
ESS_WARN_FRACTION = 0.01


@dataclass(frozen=True, eq=False)
class ReconciledSamples:
    """Unweighted coherent draws from the reconciled distribution.

    ``full`` has the upper columns ``A @ b`` prepended to the bottom draws.
    ``proposals`` holds the bottom draws before resampling, i.e. an i.i.d.
    sample from the base bottom forecast.
    ``mean_weight`` is the average unnormalised weight; for discrete
    forecasts it is an unbiased estimate of the coherence probability.
    """

    bottom: np.ndarray
    full: np.ndarray
    ess: float
    weight_sum_zero: bool
    n_draws: int
    seed: object
    mean_weight: float = float("nan")
    mean_weight_se: float = float("nan")
    proposals: np.ndarray | None = None

    def __len__(self):
        return self.full.shape[0]

    def to_csv(self, path, labels: Sequence[str]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(labels)
            writer.writerows(self.full.tolist())


class PcEstimate(NamedTuple):
    p_c: float
    stderr: float


@dataclass(frozen=True)
class SampleStats:
    mean: np.ndarray
    var: np.ndarray
    median: np.ndarray
    probs: tuple[float, ...]
    quantiles: np.ndarray  # (len(probs), n_vars)


def _check_is_inputs(h: Hierarchy, base: HierForecast, n_draws: int) -> None:
    base.check(h)
    if h.n_upper != 1:
        raise MultipleUppersUnsupported(
            f"importance sampling handles one upper variable, hierarchy has {h.n_upper}"
        )
    if not base.independent:
        raise NotIndependent("upper and bottom base forecasts must be independent")
    if n_draws < MIN_DRAWS:
        raise InsufficientSamples(f"n_draws must be at least {MIN_DRAWS}, got {n_draws}")


def _upper_logdensity(base: HierForecast, u: np.ndarray) -> np.ndarray:
    up = base.upper
    if isinstance(up, MultivariateGaussian):
        return np.atleast_1d(up.logdensity(u.reshape(-1, 1)))
    return np.asarray(up[0].logdensity(u[:, 0] if u.ndim == 2 else u), dtype=float)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2**63)))
    return np.random.SeedSequence(seed)


def _resample(w: np.ndarray, rng: np.random.Generator, scheme: str) -> np.ndarray:
    N = w.shape[0]
    if scheme == "multinomial":
        return rng.choice(N, size=N, replace=True, p=w)
    if scheme == "systematic":
        cdf = np.cumsum(w)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, (rng.random() + np.arange(N)) / N, side="right")
    raise ValueError(f"unknown resampling scheme {scheme!r}")


def reconcile_is(
    h: Hierarchy,
    base: HierForecast,
    n_draws: int = DEFAULT_DRAWS,
    seed=None,
    *,
    resampling: str = "multinomial",
    raise_on_zero: bool = True,
) -> ReconciledSamples:
    """Reconcile a one-upper hierarchy by importance sampling.

    Parameters
    ----------
    h : Hierarchy
        Must have exactly one upper variable.
    base : HierForecast
        Independent upper and bottom base forecasts (discrete or Gaussian).
    n_draws : int
        Number of bottom draws, and of resampled output rows.
    seed : int, SeedSequence or Generator
        Bottom variable ``j`` and the resampling pass each get their own
        derived stream, so the result depends on the seed only.
    resampling : {"multinomial", "systematic"}
    raise_on_zero : bool
        If False, an all-zero weight vector yields an empty result with
        ``weight_sum_zero=True`` instead of raising :class:`AllWeightsZero`.
    """
    _check_is_inputs(h, base, n_draws)
    ss = _seed_sequence(seed)
    bottom_ss, resample_ss = ss.spawn(2)

    draws = base.sample_block("bottom", bottom_ss, n_draws)
    logw = _upper_logdensity(base, aggregate(h, draws))

    top = np.max(logw)
    if not np.isfinite(top):
        if raise_on_zero:
            raise AllWeightsZero(
                "no bottom draw aggregates to a point with positive upper probability"
            )
        empty = np.empty((0, h.m), dtype=draws.dtype)
        return ReconciledSamples(
            empty, np.empty((0, h.n), dtype=draws.dtype), 0.0, True, n_draws, seed, 0.0, 0.0, draws
        )

    w = np.exp(logw - top)
    total = w.sum()
    mean_weight = float(np.exp(top) * total / n_draws)
    mean_weight_se = float(np.exp(top) * np.std(w, ddof=1) / np.sqrt(n_draws))
    w /= total
    ess = float(1.0 / np.dot(w, w))
    if ess < ESS_WARN_FRACTION * n_draws:
        warnings.warn(f"effective sample size {ess:.1f} of {n_draws} draws", LowESSWarning, stacklevel=2)

    idx = _resample(w, np.random.default_rng(resample_ss), resampling)
    bottom = draws[idx]
    full = np.hstack([aggregate(h, bottom), bottom])
    return ReconciledSamples(bottom, full, ess, False, n_draws, seed, mean_weight, mean_weight_se, draws)


def estimate_pc(h: Hierarchy, base: HierForecast, n_draws: int = DEFAULT_DRAWS, seed=None) -> PcEstimate:
    """Monte Carlo estimate of ``P(U_hat = A B_hat)`` with its binomial standard error."""
    _check_is_inputs(h, base, n_draws)
    if not base.is_discrete:
        raise ContinuousUnsupported("coherence probability is zero for continuous forecasts")
    ss = _seed_sequence(seed)
    up_ss, bottom_ss = ss.spawn(2)
    u = base.sample_block("upper", up_ss, n_draws)
    b = base.sample_block("bottom", bottom_ss, n_draws)
    hits = np.all(u == aggregate(h, b), axis=1)
    p = float(hits.mean())
    return PcEstimate(p, float(np.sqrt(p * (1.0 - p) / n_draws)))


def empirical_quantile(x, probs, axis=0):
    """Inverse empirical CDF: the smallest sample value whose ECDF reaches ``p``.

    Same result as ``np.quantile(..., method="inverted_cdf")``; integer
    columns with a narrow range are handled by counting instead of sorting.
    """
    x = np.asarray(x)
    if axis == 0 and x.ndim in (1, 2) and x.size and np.issubdtype(x.dtype, np.integer):
        cols = x if x.ndim == 2 else x[:, None]
        lo, hi = cols.min(axis=0), cols.max(axis=0)
        if np.max(hi - lo) <= 4 * cols.shape[0]:
            p = np.asarray(probs, dtype=float)
            target = p.ravel() * cols.shape[0]
            out = np.empty((target.size, cols.shape[1]), dtype=x.dtype)
            for j in range(cols.shape[1]):
                cum = np.cumsum(np.bincount(cols[:, j] - lo[j]))
                out[:, j] = lo[j] + np.searchsorted(cum, target, side="left")
            out = out.reshape(p.shape + cols.shape[1:])
            return out if x.ndim == 2 else out[..., 0]
    return np.quantile(x, probs, axis=axis, method="inverted_cdf")


def sample_stats(s, probs: Sequence[float] = (0.05, 0.95)) -> SampleStats:
    """Per-column moments and order statistics of a sample matrix.

    Variances use the population (``ddof=0``) convention; the median is the
    lower median.
    """
    x = s.full if isinstance(s, ReconciledSamples) else np.asarray(s)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise EmptySamples("no samples")
    probs = tuple(float(p) for p in probs)
    return SampleStats(
        mean=x.mean(axis=0),
        var=x.var(axis=0),
        median=empirical_quantile(x, 0.5),
        probs=probs,
        quantiles=empirical_quantile(x, probs) if probs else np.empty((0, x.shape[1])),
    )
