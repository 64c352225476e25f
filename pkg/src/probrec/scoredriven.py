"""Score-driven negative binomial count model: simulation and one-step forecasts.

Locations follow

    log mu_{t+1} = C + D log mu_t + E (y_t - mu_t) / (alpha * mu_t + 1)

with the denominator taken elementwise, and ``y_{i,t} ~ NB(mu_{i,t}, alpha_i)``.
Parameters are inputs; nothing here is estimated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .distributions import NegativeBinomial
from .errors import AllZeroSeries, InvalidParameter, NonFiniteUpdate

__all__ = [
    "ScoreDrivenParams",
    "SimulatedPanel",
    "step_mu",
    "filter_locations",
    "simulate_panel",
    "aggregate_forecast",
    "adi",
    "INTERMITTENT_ADI",
]

LOG_MU_LIMIT = 50.0
INTERMITTENT_ADI = 1.32


@dataclass(frozen=True, eq=False)
class ScoreDrivenParams:
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    alpha: np.ndarray
    mu0: np.ndarray

    def __init__(self, C, D, E, alpha, mu0, *, check_stationary: bool = True):
        C = np.atleast_1d(np.asarray(C, dtype=float)).ravel()
        k = C.size
        D = np.asarray(D, dtype=float).reshape(k, k)
        E = np.asarray(E, dtype=float).reshape(k, k)
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (k,)).copy()
        mu0 = np.broadcast_to(np.asarray(mu0, dtype=float), (k,)).copy()
        if np.any(alpha < 0):
            raise InvalidParameter("dispersion parameters must be non-negative")
        if np.any(mu0 <= 0):
            raise InvalidParameter("initial locations must be positive")
        if check_stationary:
            rho = float(np.max(np.abs(np.linalg.eigvals(D))))
            if rho >= 1:
                raise InvalidParameter(f"spectral radius of D is {rho:.4g}; must be below 1")
        for name, val in zip("C D E alpha mu0".split(), (C, D, E, alpha, mu0)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def k(self) -> int:
        return self.C.size

    @classmethod
    def from_json(cls, obj: dict) -> "ScoreDrivenParams":
        return cls(obj["C"], obj["D"], obj["E"], obj["alpha"], obj["mu0"])

    def to_json(self) -> dict:
        return {n: getattr(self, n).tolist() for n in ("C", "D", "E", "alpha", "mu0")}


@dataclass(frozen=True, eq=False)
class SimulatedPanel:
    """``mus[t]`` is the location used to draw ``counts[t]``; ``forecasts[t]`` is ``mu_{t+1}``."""

    counts: np.ndarray
    mus: np.ndarray
    forecasts: np.ndarray
    alpha: np.ndarray

    @property
    def T(self) -> int:
        return self.counts.shape[0]

    def forecast_distributions(self, t: int) -> list[NegativeBinomial]:
        """Base forecasts for ``counts[t]``, as issued at time ``t - 1``."""
        return [NegativeBinomial(float(m), float(a)) for m, a in zip(self.mus[t], self.alpha)]

    def to_csv(self, path, labels=None) -> None:
        k = self.counts.shape[1]
        labels = labels or [f"S{i + 1}" for i in range(k)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "series", "count", "mu", "forecast_mu", "forecast_alpha"])
            for t in range(self.T):
                for i in range(k):
                    writer.writerow(
                        [t, labels[i], int(self.counts[t, i]), repr(float(self.mus[t, i])),
                         repr(float(self.forecasts[t, i])), repr(float(self.alpha[i]))]
                    )


def step_mu(params: ScoreDrivenParams, mu_t, y_t) -> np.ndarray:
    """One location update; raises :class:`NonFiniteUpdate` if ``|log mu| > 50``."""
    mu_t = np.asarray(mu_t, dtype=float)
    y_t = np.asarray(y_t, dtype=float)
    if np.any(mu_t <= 0):
        raise InvalidParameter("locations must be positive")
    score = (y_t - mu_t) / (params.alpha * mu_t + 1.0)
    log_next = params.C + params.D @ np.log(mu_t) + params.E @ score
    if not np.all(np.abs(log_next) <= LOG_MU_LIMIT):
        raise NonFiniteUpdate(f"log-location update {log_next} left [-{LOG_MU_LIMIT}, {LOG_MU_LIMIT}]")
    return np.exp(log_next)


def _nb_draw(rng: np.random.Generator, mu: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    # gamma-Poisson mixture; alpha == 0 entries are plain Poisson
    pos = alpha > 0
    shape = np.where(pos, 1.0 / np.where(pos, alpha, 1.0), 1.0)
    gam = rng.gamma(shape, np.where(pos, alpha * mu, 1.0))
    return rng.poisson(np.where(pos, gam, mu))


def simulate_panel(params: ScoreDrivenParams, T: int, seed=None) -> SimulatedPanel:
    if T < 1:
        raise ValueError("T must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k = params.k
    counts = np.empty((T, k), dtype=np.int64)
    mus = np.empty((T, k))
    forecasts = np.empty((T, k))
    mu = params.mu0.copy()
    for t in range(T):
        mus[t] = mu
        counts[t] = _nb_draw(rng, mu, params.alpha)
        mu = step_mu(params, mu, counts[t])
        forecasts[t] = mu
    return SimulatedPanel(counts, mus, forecasts, params.alpha.copy())


def filter_locations(params: ScoreDrivenParams, counts) -> SimulatedPanel:
    """Run the location recursion over observed counts (no sampling)."""
    counts = np.asarray(counts)
    if counts.ndim == 1:
        counts = counts[:, None]
    if counts.shape[1] != params.k:
        raise InvalidParameter(f"counts have {counts.shape[1]} series, params have {params.k}")
    T = counts.shape[0]
    mus = np.empty((T, params.k))
    forecasts = np.empty((T, params.k))
    mu = params.mu0.copy()
    for t in range(T):
        mus[t] = mu
        mu = step_mu(params, mu, counts[t])
        forecasts[t] = mu
    return SimulatedPanel(counts.astype(np.int64), mus, forecasts, params.alpha.copy())


def aggregate_forecast(bottom_counts, params: ScoreDrivenParams) -> SimulatedPanel:
    """Univariate score-driven forecasts for the summed bottom series.

    ``bottom_counts`` is a (T, k) count matrix or a :class:`SimulatedPanel`;
    ``params`` must be univariate.
    """
    if isinstance(bottom_counts, SimulatedPanel):
        bottom_counts = bottom_counts.counts
    bottom_counts = np.asarray(bottom_counts)
    if bottom_counts.ndim == 1:
        bottom_counts = bottom_counts[:, None]
    if params.k != 1:
        raise InvalidParameter("aggregate forecasts need univariate parameters")
    return filter_locations(params, bottom_counts.sum(axis=1))


def adi(series) -> float:
    """Average inter-demand interval: series length over the number of non-zero entries."""
    series = np.asarray(series)
    nz = int(np.count_nonzero(series))
    if nz == 0:
        raise AllZeroSeries("series has no demand occurrences")
    return series.size / nz
