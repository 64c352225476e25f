"""Probabilistic and point-forecast scores.

All sample-based routines take an ``(N, n)`` array of draws (or a 1-D array
for a single series). Quantiles use the inverse empirical CDF, matching
:func:`probrec.importance.empirical_quantile`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import EmptySamples, InsufficientSamples, InvertedInterval, NegativeMetric
from .hierarchy import Hierarchy, aggregate
from .importance import ReconciledSamples, empirical_quantile

__all__ = [
    "energy_score",
    "interval_score",
    "point_errors",
    "skill_score",
    "interval_from_samples",
    "coverage",
    "coherent_point_forecast",
    "ScoreReport",
    "score_step",
]


def _as_2d(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise EmptySamples("no samples")
    return x


def energy_score(samples, y, beta: float = 2.0, pairing: str = "disjoint") -> float:
    """Sample estimate of ``E||y - s||^beta - 0.5 E||s - s'||^beta``.

    ``pairing="disjoint"`` estimates the second expectation from the
    consecutive pairs ``(s_0, s_1), (s_2, s_3), ...`` (an odd last draw is
    dropped); ``pairing="all"`` averages over every unordered pair.
    Both are unbiased; the result depends on the order of the draws only in
    the disjoint case.
    """
    x = _as_2d(samples)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape[0] < 2:
        raise InsufficientSamples("energy score needs at least two draws")
    if not 0 < beta <= 2:
        raise ValueError("beta must lie in (0, 2]")
    if y.shape != (x.shape[1],):
        raise ValueError(f"observation has shape {y.shape}, samples have {x.shape[1]} columns")

    sq = np.sum((x - y) ** 2, axis=1)
    term1 = float(np.mean(sq if beta == 2 else sq ** (beta / 2)))

    if pairing == "disjoint":
        half = x.shape[0] // 2
        d2 = np.sum((x[0 : 2 * half : 2] - x[1 : 2 * half : 2]) ** 2, axis=1)
        term2 = float(np.mean(d2 if beta == 2 else d2 ** (beta / 2)))
    elif pairing == "all":
        if beta == 2:
            # mean over i != j of ||s_i - s_j||^2 = 2 * trace of the unbiased covariance
            term2 = float(2.0 * np.sum(np.var(x, axis=0, ddof=1)))
        else:
            term2 = float(np.mean(pdist(x) ** beta))
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    return term1 - 0.5 * term2


def interval_score(l, u, y, alpha: float = 0.1):
    """Interval score of the central ``(1 - alpha)`` interval ``[l, u]``. Vectorised."""
    l, u, y = (np.asarray(v, dtype=float) for v in (l, u, y))
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if np.any(l > u):
        raise InvertedInterval("lower bound exceeds upper bound")
    score = (u - l) + (2.0 / alpha) * np.clip(l - y, 0, None) + (2.0 / alpha) * np.clip(y - u, 0, None)
    return float(score) if score.ndim == 0 else score


@dataclass(frozen=True)
class PointErrors:
    se: np.ndarray
    ae: np.ndarray
    mean: np.ndarray
    median: np.ndarray


def point_errors(samples, y) -> PointErrors:
    """Squared error of the mean and absolute error of the (lower) median, per column."""
    x = _as_2d(samples)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean = x.mean(axis=0)
    median = empirical_quantile(x, 0.5)
    return PointErrors((y - mean) ** 2, np.abs(y - median), mean, median)


def skill_score(metric_base, metric_reconc):
    """Symmetric relative improvement ``(base - reconc) / ((base + reconc) / 2)``.

    Lies in [-2, 2]; positive means the reconciled forecast scores better.
    ``0/0`` is defined as 0. Vectorised.
    """
    base = np.asarray(metric_base, dtype=float)
    rec = np.asarray(metric_reconc, dtype=float)
    if np.any(base < 0) or np.any(rec < 0):
        raise NegativeMetric("skill score is defined for non-negative losses only")
    denom = (base + rec) / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, (base - rec) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def interval_from_samples(samples, level: float = 0.9):
    """Empirical central interval: the ``(1-level)/2`` and ``(1+level)/2`` inverse-CDF quantiles."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    x = _as_2d(samples)
    a = 1.0 - level
    lo, hi = empirical_quantile(x, [a / 2.0, 1.0 - a / 2.0])
    if np.ndim(samples) == 1:
        return float(lo[0]), float(hi[0])
    return lo, hi


def coverage(l, u, y) -> float:
    """Fraction of observations inside their intervals."""
    l, u, y = (np.asarray(v, dtype=float) for v in (l, u, y))
    return float(np.mean((y >= l) & (y <= u)))


def coherent_point_forecast(h: Hierarchy, reconciled) -> np.ndarray:
    """Bottom medians with their aggregates on top, so the point forecast is coherent."""
    if isinstance(reconciled, ReconciledSamples):
        bottom = reconciled.bottom
    else:
        bottom = np.asarray(reconciled)
        if bottom.ndim == 2 and bottom.shape[1] == h.n:
            bottom = bottom[:, h.n_upper :]
    if bottom.shape[0] == 0:
        raise EmptySamples("no samples")
    med = empirical_quantile(bottom, 0.5)
    return np.concatenate([aggregate(h, med), med])


@dataclass
class ScoreReport:
    """Scores of base and reconciled forecasts for one time step.

    Per-series arrays follow the hierarchy ordering (upper block first).
    ``skill`` maps a metric name to the skill score (a scalar for ``"ES"``,
    an array otherwise).
    """

    labels: tuple[str, ...]
    es_joint: dict[str, float]
    is_per_series: dict[str, np.ndarray]
    se_per_series: dict[str, np.ndarray]
    ae_per_series: dict[str, np.ndarray]
    width: dict[str, np.ndarray]
    covered: dict[str, np.ndarray]
    skill: dict[str, object] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str, float, float, float]]:
        """``(series, metric, base, reconc, skill)`` rows; the joint ES uses series ``"joint"``."""
        out = [("joint", "ES", self.es_joint["base"], self.es_joint["reconc"], self.skill["ES"])]
        for metric, table in (("IS", self.is_per_series), ("SE", self.se_per_series), ("AE", self.ae_per_series)):
            for i, name in enumerate(self.labels):
                out.append((name, metric, float(table["base"][i]), float(table["reconc"][i]), float(self.skill[metric][i])))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["series", "metric", "base", "reconc", "skill"])
            for r in self.rows():
                writer.writerow([r[0], r[1], *(repr(float(v)) for v in r[2:])])


def _safe_skill(base, rec):
    # negative sample ES estimates have no skill score
    try:
        return skill_score(base, rec)
    except NegativeMetric:
        return float("nan")


def score_step(
    labels: Sequence[str],
    base_samples,
    reconc_samples,
    y,
    alpha: float = 0.1,
    es_pairing: str = "disjoint",
) -> ScoreReport:
    """Score base and reconciled joint draws against one observation vector."""
    y = np.asarray(y, dtype=float)
    draws = {"base": _as_2d(base_samples), "reconc": _as_2d(reconc_samples)}
    es, is_, se, ae, width, covered = {}, {}, {}, {}, {}, {}
    for key, x in draws.items():
        es[key] = energy_score(x, y, beta=2.0, pairing=es_pairing)
        lo, hi = interval_from_samples(x, 1.0 - alpha)
        is_[key] = interval_score(lo, hi, y, alpha)
        pe = point_errors(x, y)
        se[key], ae[key] = pe.se, pe.ae
        width[key] = hi - lo
        covered[key] = (y >= lo) & (y <= hi)
    skill = {
        "ES": _safe_skill(es["base"], es["reconc"]),
        "IS": skill_score(is_["base"], is_["reconc"]),
        "SE": skill_score(se["base"], se["reconc"]),
        "AE": skill_score(ae["base"], ae["reconc"]),
    }
    return ScoreReport(tuple(labels), es, is_, se, ae, width, covered, skill)
