"""Exact reconciliation of discrete base forecasts by enumeration.

The reconciled bottom pmf is proportional to ``pi_U(A b) * prod_j pi_Bj(b_j)``.
Unbounded count supports are truncated per variable once the remaining tail
mass drops below ``tail_tol``; the truncation is always reported alongside
the results.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .distributions import HierForecast, MultivariateGaussian
from .errors import (
    ContinuousUnsupported,
    InvalidParameter,
    NotIndependent,
    NumericalBreakdown,
    SupportExplosion,
    ZeroCoherence,
    ZeroNormalizer,
)
from .hierarchy import Hierarchy, aggregate

__all__ = [
    "JointPmfTable",
    "VarianceDecomposition",
    "BernoulliReconciliation",
    "ExactPc",
    "enumerate_reconciled",
    "bernoulli_closed_form",
    "exact_pc",
    "variance_decomposition",
]

MAX_POINTS = 10**8


@dataclass(frozen=True, eq=False)
class JointPmfTable:
    """Reconciled bottom pmf as an explicit table.

    ``support`` rows are bottom vectors in lexicographic order; ``probs`` sum
    to one. ``normalizer`` is the pre-normalisation mass, i.e. the coherence
    probability restricted to the truncated support, and
    ``truncation_bound`` bounds the base bottom mass left out.
    """

    support: np.ndarray
    probs: np.ndarray
    hierarchy: Hierarchy
    normalizer: float
    truncation_bound: float

    @property
    def full_support(self) -> np.ndarray:
        return np.hstack([aggregate(self.hierarchy, self.support), self.support])

    def mean(self) -> np.ndarray:
        """Reconciled means, upper block first."""
        return self.probs @ self.full_support

    def var(self) -> np.ndarray:
        Y = self.full_support
        mu = self.probs @ Y
        return self.probs @ (Y - mu) ** 2

    def marginal(self, i: int):
        """Values and probabilities of variable ``i`` (index into ``[u; b]``)."""
        col = self.full_support[:, i]
        values, inv = np.unique(col, return_inverse=True)
        return values, np.bincount(inv, weights=self.probs, minlength=values.size)

    def to_csv(self, path) -> None:
        labels = self.hierarchy.labels_bottom
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*labels, "probability"])
            for row, p in zip(self.support.tolist(), self.probs.tolist()):
                writer.writerow([*row, repr(p)])


@dataclass(frozen=True)
class VarianceDecomposition:
    """Pieces of the law-of-total-variance identity for one bottom variable.

    ``reconciled_var`` is evaluated from the other fields;
    ``enumerated_var`` is the variance of the reconciled table computed
    directly, kept for cross-checking.
    """

    base_var: float
    cond_var_incoherent: float
    p_c: float
    a: float  # E[B_j | incoherent]
    b: float  # E[B_j | coherent]
    reconciled_var: float
    enumerated_var: float


class BernoulliReconciliation(NamedTuple):
    p1: float
    p2: float
    q: np.ndarray
    S: float


class ExactPc(NamedTuple):
    p_c: float
    truncation_bound: float


def _enumerate(h: Hierarchy, base: HierForecast, tail_tol: float, max_points: int):
    base.check(h)
    if not base.is_discrete:
        raise ContinuousUnsupported("enumeration needs discrete base forecasts")
    if not base.independent:
        raise NotIndependent("enumeration assumes independent upper and bottom forecasts")
    if isinstance(base.upper, MultivariateGaussian) or isinstance(base.bottom, MultivariateGaussian):
        raise ContinuousUnsupported("enumeration needs discrete base forecasts")

    values, probs, tails = [], [], []
    for d in base.bottom:
        v, p, t = d.support(tail_tol)
        values.append(np.asarray(v, dtype=np.int64))
        probs.append(np.asarray(p, dtype=float))
        tails.append(t)
    size = int(np.prod([v.size for v in values], dtype=float))
    if size > max_points:
        raise SupportExplosion(f"enumeration needs {size} points (limit {max_points})")

    grids = np.meshgrid(*values, indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    prior = probs[0]
    for p in probs[1:]:
        prior = np.multiply.outer(prior, p)
    prior = prior.ravel()

    u = aggregate(h, points)
    upper_w = np.ones(points.shape[0])
    for k, d in enumerate(base.upper):
        upper_w = upper_w * d.pmf(u[:, k])
    bound = float(1.0 - np.prod([1.0 - t for t in tails]))
    return points, prior, upper_w, bound


def enumerate_reconciled(
    h: Hierarchy, base: HierForecast, tail_tol: float = 1e-9, max_points: int = MAX_POINTS
) -> JointPmfTable:
    """Brute-force reconciled bottom pmf over the (truncated) bottom support.

    Raises
    ------
    ZeroNormalizer
        No enumerated bottom vector aggregates to a point the upper forecast supports.
    SupportExplosion
        More than ``max_points`` bottom vectors.
    """
    points, prior, upper_w, bound = _enumerate(h, base, tail_tol, max_points)
    w = prior * upper_w
    Z = float(w.sum())
    if Z <= 0:
        raise ZeroNormalizer("upper and bottom-up supports do not intersect")
    return JointPmfTable(points, w / Z, h, Z, bound)


def exact_pc(h: Hierarchy, base: HierForecast, tail_tol: float = 1e-9) -> ExactPc:
    """Coherence probability summed over the truncated bottom support.

    The true value lies in ``[p_c, p_c + truncation_bound]``.
    """
    points, prior, upper_w, bound = _enumerate(h, base, tail_tol, MAX_POINTS)
    return ExactPc(float(np.dot(prior, upper_w)), bound)


def bernoulli_closed_form(p1: float, p2: float, q: Sequence[float]) -> BernoulliReconciliation:
    """Reconciled law of the two-Bernoulli minimal hierarchy with a pmf on {0, 1, 2} for the upper."""
    q = np.asarray(q, dtype=float)
    if not (0 <= p1 <= 1 and 0 <= p2 <= 1):
        raise InvalidParameter("Bernoulli probabilities must lie in [0, 1]")
    if q.shape != (3,) or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
        raise InvalidParameter("q must be a probability vector on {0, 1, 2}")
    q0, q1, q2 = q
    w00 = (1 - p1) * (1 - p2) * q0
    w10 = p1 * (1 - p2) * q1
    w01 = (1 - p1) * p2 * q1
    w11 = p1 * p2 * q2
    S = w00 + w10 + w01 + w11
    if S <= 0:
        raise ZeroNormalizer("coherence probability is zero")
    p1_t = ((1 - p2) * q1 + p2 * q2) * p1 / S
    p2_t = ((1 - p1) * q1 + p1 * q2) * p2 / S
    q_t = np.array([w00, (p1 + p2 - 2 * p1 * p2) * q1, w11]) / S
    return BernoulliReconciliation(float(p1_t), float(p2_t), q_t, float(S))


def variance_decomposition(
    h: Hierarchy, base: HierForecast, j: int, tail_tol: float = 1e-9
) -> VarianceDecomposition:
    """Reconciled variance of bottom variable ``j`` (0-based) from the total-variance identity.

    The base law is the truncated bottom product (renormalised) times the
    untruncated upper pmf, which is the same law the enumeration table
    conditions, so the two routes agree to rounding error.
    """
    if not 0 <= j < h.m:
        raise IndexError(f"bottom index {j} out of range for m={h.m}")
    points, prior, upper_w, _ = _enumerate(h, base, tail_tol, MAX_POINTS)
    prior = prior / prior.sum()
    x = points[:, j].astype(float)

    coh = prior * upper_w
    p_c = float(coh.sum())
    if p_c <= 0:
        raise ZeroCoherence("base forecasts are never coherent")
    incoh = prior * (1.0 - upper_w)
    q = float(incoh.sum())

    base_mean = float(prior @ x)
    base_var = float(prior @ (x - base_mean) ** 2)
    b = float(coh @ x) / p_c
    enumerated = float(coh @ (x - b) ** 2) / p_c
    if q > 1e-15:
        a = float(incoh @ x) / q
        var_incoh = float(incoh @ (x - a) ** 2) / q
    else:
        a, var_incoh = b, 0.0

    formula = (base_var - (1 - p_c) * var_incoh - p_c * (1 - p_c) * (a - b) ** 2) / p_c
    if abs(formula - enumerated) > 1e-8 * max(1.0, base_var) / p_c:
        raise NumericalBreakdown(
            f"variance identity mismatch: formula {formula!r} vs enumeration {enumerated!r}"
        )
    return VarianceDecomposition(base_var, var_incoh, p_c, a, b, formula, enumerated)
