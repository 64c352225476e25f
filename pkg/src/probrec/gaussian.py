"""Closed-form reconciliation of jointly Gaussian base forecasts by conditioning.

With ``y = [u; b] ~ N([u_hat; b_hat], [[S_U, S_UB], [S_UB^T, S_B]])`` the
reconciled bottom law is the law of ``b`` given ``u - A b = 0``. Writing
``Q = S_U - S_UB A^T - A S_UB^T + A S_B A^T`` (the covariance of the
incoherence ``u - A b``), the reconciled moments are

    b_tilde  = b_hat + (S_UB^T - S_B A^T) Q^{-1} (A b_hat - u_hat)
    u_tilde  = u_hat + (S_U - S_UB A^T)   Q^{-1} (A b_hat - u_hat)
    Sig_B    = S_B - (S_UB^T - S_B A^T) Q^{-1} (S_UB^T - S_B A^T)^T
    Sig_U    = S_U - (S_U - S_UB A^T)   Q^{-1} (S_U - S_UB A^T)^T
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .distributions import MultivariateGaussian
from .errors import (
    CorrelatedBlocks,
    DegenerateWeights,
    DimensionMismatch,
    MultipleUppers,
    NumericalBreakdown,
    SingularQ,
)
from .hierarchy import Hierarchy

__all__ = [
    "GaussianReconciliation",
    "reconcile_gaussian",
    "convex_weights_single_upper",
    "bottom_up_gaussian",
]


@dataclass(frozen=True)
class GaussianReconciliation:
    bottom_mean: np.ndarray
    bottom_cov: np.ndarray
    upper_mean: np.ndarray
    upper_cov: np.ndarray
    Q: np.ndarray
    incoherence: np.ndarray  # A b_hat - u_hat

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([self.upper_mean, self.bottom_mean])

    def joint(self, h: Hierarchy) -> MultivariateGaussian:
        """Reconciled (degenerate) Gaussian over the whole hierarchy, ``S b_tilde``."""
        return MultivariateGaussian(h.S @ self.bottom_mean, h.S @ self.bottom_cov @ h.S.T)

    def to_json(self) -> dict:
        return {
            "bottom_mean": self.bottom_mean.tolist(),
            "bottom_cov": self.bottom_cov.tolist(),
            "upper_mean": self.upper_mean.tolist(),
            "upper_cov": self.upper_cov.tolist(),
            "Q": self.Q.tolist(),
            "incoherence": self.incoherence.tolist(),
        }


def _split(h: Hierarchy, base: MultivariateGaussian):
    if base.dim != h.n:
        raise DimensionMismatch(f"base Gaussian has dimension {base.dim}, hierarchy has {h.n}")
    k = h.n_upper
    cov = base.cov
    return base.mean[:k], base.mean[k:], cov[:k, :k], cov[:k, k:], cov[k:, k:]


def _repair_psd(M: np.ndarray, what: str) -> np.ndarray:
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    if w[0] >= 0:
        return M
    if w[0] < -1e-9 * max(np.trace(M), np.finfo(float).tiny):
        raise NumericalBreakdown(f"reconciled {what} covariance has eigenvalue {w[0]:.3g}")
    return (V * np.clip(w, 0.0, None)) @ V.T


def reconcile_gaussian(h: Hierarchy, base: MultivariateGaussian) -> GaussianReconciliation:
    """Condition a joint Gaussian base forecast on ``u = A b``.

    All ``Q^{-1}`` products are computed by Cholesky solves. If ``Q`` is
    numerically zero and the base mean is already coherent (for instance the
    output of :func:`bottom_up_gaussian`), the incoherence ``u - A b`` is
    almost surely zero and the base moments are returned unchanged.

    Raises
    ------
    SingularQ
        ``Q`` is not positive definite.
    """
    u_hat, b_hat, S_U, S_UB, S_B = _split(h, base)
    A = h.A.astype(float)

    Q = S_U - S_UB @ A.T - A @ S_UB.T + A @ S_B @ A.T
    Q = 0.5 * (Q + Q.T)
    gap = A @ b_hat - u_hat
    scale = max(1.0, float(np.max(np.abs(base.cov))))

    if np.max(np.abs(Q)) <= 1e-12 * scale:
        if np.max(np.abs(gap)) <= 1e-12 * max(1.0, float(np.max(np.abs(base.mean)))):
            return GaussianReconciliation(b_hat.copy(), S_B.copy(), A @ b_hat, A @ S_B @ A.T, Q, gap)
        raise SingularQ("incoherence covariance Q is zero but the base means are incoherent")

    try:
        cf = linalg.cho_factor(Q, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularQ("incoherence covariance Q is not positive definite") from exc

    G = S_UB.T - S_B @ A.T  # m x (n-m)
    H = S_U - S_UB @ A.T  # (n-m) x (n-m)
    solved_gap = linalg.cho_solve(cf, gap)

    b_tilde = b_hat + G @ solved_gap
    u_tilde = u_hat + H @ solved_gap
    cov_B = S_B - G @ linalg.cho_solve(cf, G.T)
    cov_U = S_U - H @ linalg.cho_solve(cf, H.T)

    return GaussianReconciliation(
        bottom_mean=b_tilde,
        bottom_cov=_repair_psd(cov_B, "bottom"),
        upper_mean=u_tilde,
        upper_cov=_repair_psd(cov_U, "upper"),
        Q=Q,
        incoherence=gap,
    )


def convex_weights_single_upper(h: Hierarchy, base: MultivariateGaussian):
    """Weights of the reconciled upper mean as a convex combination.

    For one upper variable uncorrelated with the bottoms,
    ``u_tilde = w_base * u_hat + w_bu * (A @ b_hat)`` where
    ``w_base = var_bu / (var_u + var_bu)`` and ``var_bu = A S_B A^T``.

    Returns
    -------
    (w_base, w_bu, bottom_up_var)
    """
    if h.n_upper != 1:
        raise MultipleUppers(f"needs exactly one upper variable, hierarchy has {h.n_upper}")
    u_hat, b_hat, S_U, S_UB, S_B = _split(h, base)
    if np.max(np.abs(S_UB)) > 1e-12:
        raise CorrelatedBlocks("upper and bottom base forecasts are correlated")
    A = h.A.astype(float)
    var_u = float(S_U[0, 0])
    var_bu = float((A @ S_B @ A.T)[0, 0])
    total = var_u + var_bu
    if total <= 0:
        if abs(float(A[0] @ b_hat) - float(u_hat[0])) <= 1e-12 * max(1.0, abs(float(u_hat[0]))):
            # both forecasts are the same point mass; any convex weights give it
            return 0.5, 0.5, var_bu
        raise DegenerateWeights("both upper and bottom-up forecasts are point masses and disagree")
    w_base = var_bu / total
    return w_base, 1.0 - w_base, var_bu


def bottom_up_gaussian(h: Hierarchy, bottom: MultivariateGaussian) -> MultivariateGaussian:
    """Probabilistic bottom-up: ``N(S b_hat, S S_B S^T)`` over the full hierarchy."""
    if bottom.dim != h.m:
        raise DimensionMismatch(f"bottom Gaussian has dimension {bottom.dim}, hierarchy has m={h.m}")
    S = h.S.astype(float)
    cov = S @ bottom.cov @ S.T
    return MultivariateGaussian(S @ bottom.mean, 0.5 * (cov + cov.T))
