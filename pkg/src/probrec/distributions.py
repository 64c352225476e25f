"""Base-forecast distributions.

Count families (Poisson, negative binomial, Bernoulli, tabulated pmf) share a
small protocol: ``logpmf``/``pmf`` (vectorised, zero mass off-support),
``sample``, ``mean_var`` and ``support`` for truncated enumeration.
:class:`Normal` and :class:`MultivariateGaussian` cover the continuous case.

The negative binomial is parameterised by mean ``mu`` and dispersion
``alpha`` so that ``Var = mu + alpha * mu**2``. In the size/probability
parameterisation used by ``numpy``/``scipy`` this is ``n = 1/alpha`` and
``p = 1 / (1 + alpha * mu)``. ``alpha == 0`` is the Poisson limit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import gammaln, xlogy

from .errors import (
    DimensionMismatch,
    FactorizationFailure,
    InvalidParameter,
    TruncationWarning,
)

__all__ = [
    "Poisson",
    "NegativeBinomial",
    "Bernoulli",
    "TabulatedPmf",
    "Normal",
    "MultivariateGaussian",
    "HierForecast",
    "pmf",
    "sample",
    "mean_var",
    "child_generators",
    "distribution_from_json",
    "distribution_to_json",
]

SUPPORT_CAP = 10_000
_LOG_2PI = np.log(2.0 * np.pi)


def child_generators(seed, count: int) -> list[np.random.Generator]:
    """Independent generators derived from one seed, one per consumer.

    Stream ``i`` depends only on ``(seed, i)``, so the order in which
    variables are sampled never changes the draws.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(count)]


class _Count:
    is_discrete = True

    def pmf(self, k):
        return np.exp(self.logpmf(k))

    def logdensity(self, x):
        return self.logpmf(x)

    def _scan_support(self, tail_tol: float, start: int):
        # grow [0, hi] until the remaining tail is below tail_tol
        hi = max(start, 16)
        while True:
            hi = min(hi, SUPPORT_CAP)
            k = np.arange(hi + 1)
            p = self.pmf(k)
            tail = max(0.0, 1.0 - float(np.sum(p)))
            if tail < tail_tol:
                # smallest kmax whose remaining tail is below tail_tol
                cum_tail = 1.0 - np.cumsum(p)
                below = np.flatnonzero(cum_tail < tail_tol)
                last = int(below[0]) if below.size else hi
                return k[: last + 1], p[: last + 1], max(0.0, float(cum_tail[last]))
            if hi >= SUPPORT_CAP:
                warnings.warn(
                    f"{self!r}: tail mass {tail:.3g} still above {tail_tol:g} at k={SUPPORT_CAP}",
                    TruncationWarning,
                    stacklevel=3,
                )
                return k, p, tail
            hi *= 2


@dataclass(frozen=True)
class Poisson(_Count):
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidParameter(f"Poisson rate must be positive, got {self.lam}")

    def logpmf(self, k):
        k = np.asarray(k)
        kf = k.astype(float)
        out = xlogy(kf, self.lam) - self.lam - gammaln(kf + 1.0)
        return np.where((k >= 0) & (kf == np.floor(kf)), out, -np.inf)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.poisson(self.lam, size=size).astype(np.int64)

    def mean_var(self):
        return float(self.lam), float(self.lam)

    def support(self, tail_tol: float = 1e-9):
        return self._scan_support(tail_tol, int(self.lam + 10.0 * np.sqrt(self.lam) + 10))


@dataclass(frozen=True)
class NegativeBinomial(_Count):
    mu: float
    alpha: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise InvalidParameter(f"negative binomial mean must be positive, got {self.mu}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise InvalidParameter(f"dispersion must be non-negative, got {self.alpha}")

    def logpmf(self, k):
        if self.alpha == 0:
            return Poisson(self.mu).logpmf(k)
        k = np.asarray(k)
        kf = np.where(k >= 0, k, 0).astype(float)
        r = 1.0 / self.alpha
        am = self.alpha * self.mu
        out = (
            gammaln(kf + r)
            - gammaln(r)
            - gammaln(kf + 1.0)
            - r * np.log1p(am)
            + kf * (np.log(am) - np.log1p(am))
        )
        return np.where((k >= 0) & (np.asarray(k, float) == np.floor(np.asarray(k, float))), out, -np.inf)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.alpha == 0:
            return rng.poisson(self.mu, size=size).astype(np.int64)
        r = 1.0 / self.alpha
        return rng.negative_binomial(r, 1.0 / (1.0 + self.alpha * self.mu), size=size).astype(np.int64)

    def mean_var(self):
        return float(self.mu), float(self.mu + self.alpha * self.mu**2)

    def support(self, tail_tol: float = 1e-9):
        _, var = self.mean_var()
        return self._scan_support(tail_tol, int(self.mu + 10.0 * np.sqrt(var) + 10))


@dataclass(frozen=True)
class Bernoulli(_Count):
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise InvalidParameter(f"Bernoulli probability must lie in [0, 1], got {self.p}")

    def logpmf(self, k):
        k = np.asarray(k)
        with np.errstate(divide="ignore"):
            return np.where(k == 1, np.log(self.p), np.where(k == 0, np.log1p(-self.p), -np.inf))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return (rng.random(size) < self.p).astype(np.int64)

    def mean_var(self):
        return float(self.p), float(self.p * (1.0 - self.p))

    def support(self, tail_tol: float = 1e-9):
        return np.array([0, 1]), np.array([1.0 - self.p, self.p]), 0.0


@dataclass(frozen=True, eq=False)
class TabulatedPmf(_Count):
    """Finite pmf on an explicit integer support."""

    values: np.ndarray
    probs: np.ndarray
    _cdf: np.ndarray = field(init=False, repr=False)

    def __init__(self, values: Sequence[int], probs: Sequence[float]):
        v = np.asarray(values)
        p = np.asarray(probs, dtype=float)
        if v.ndim != 1 or v.shape != p.shape or v.size == 0:
            raise InvalidParameter("support and probabilities must be equal-length 1-D sequences")
        if not np.all(v == np.round(v)):
            raise InvalidParameter("tabulated support must be integer")
        v = v.astype(np.int64)
        if np.unique(v).size != v.size:
            raise InvalidParameter("tabulated support has duplicates")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"tabulated probabilities must be a simplex (sum={p.sum()!r})")
        order = np.argsort(v)
        v, p = v[order], p[order]
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    def __repr__(self):
        return f"TabulatedPmf(values={self.values.tolist()}, probs={self.probs.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, TabulatedPmf):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash((self.values.tobytes(), self.probs.tobytes()))

    def logpmf(self, k):
        k = np.asarray(k)
        idx = np.clip(np.searchsorted(self.values, k), 0, self.values.size - 1)
        hit = self.values[idx] == k
        with np.errstate(divide="ignore"):
            return np.where(hit, np.log(self.probs[idx]), -np.inf)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.values[np.searchsorted(self._cdf, rng.random(size), side="right")]

    def mean_var(self):
        mean = float(np.dot(self.values, self.probs))
        return mean, float(np.dot((self.values - mean) ** 2, self.probs))

    def support(self, tail_tol: float = 1e-9):
        return self.values.copy(), self.probs.copy(), 0.0


@dataclass(frozen=True)
class Normal:
    """Univariate Gaussian, parameterised by mean and variance."""

    mean: float
    var: float
    is_discrete = False

    def __post_init__(self):
        if not (np.isfinite(self.var) and self.var > 0):
            raise InvalidParameter(f"Normal variance must be positive, got {self.var}")

    def logdensity(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * (_LOG_2PI + np.log(self.var) + (x - self.mean) ** 2 / self.var)

    def pdf(self, x):
        return np.exp(self.logdensity(x))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + np.sqrt(self.var) * rng.standard_normal(size)

    def mean_var(self):
        return float(self.mean), float(self.var)


@dataclass(frozen=True, eq=False)
class MultivariateGaussian:
    mean: np.ndarray
    cov: np.ndarray
    is_discrete = False

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(cov, dtype=float)).copy()
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise DimensionMismatch(f"mean {mean.shape} and cov {cov.shape} are inconsistent")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidParameter("Gaussian parameters must be finite")
        scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
        if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
            raise InvalidParameter("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        eig = np.linalg.eigvalsh(cov)
        if eig[0] < -1e-10 * max(np.trace(cov), np.finfo(float).tiny):
            raise FactorizationFailure(f"covariance is not positive semi-definite (min eigenvalue {eig[0]:.3g})")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def __repr__(self):
        return f"MultivariateGaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def factor(self) -> np.ndarray:
        """Square-root ``L`` with ``L @ L.T == cov`` from a symmetric eigendecomposition."""
        w, V = np.linalg.eigh(self.cov)
        if w[0] < -1e-10 * max(np.sum(np.abs(w)), np.finfo(float).tiny):
            raise FactorizationFailure("covariance is not positive semi-definite")
        return V * np.sqrt(np.clip(w, 0.0, None))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ self.factor().T

    def logdensity(self, x):
        x = np.asarray(x, dtype=float)
        try:
            c, low = linalg.cho_factor(self.cov, lower=True)
        except linalg.LinAlgError as exc:
            raise FactorizationFailure("covariance is singular; density undefined") from exc
        diff = np.atleast_2d(x - self.mean)
        sol = linalg.cho_solve((c, low), diff.T)
        maha = np.sum(diff.T * sol, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(c)))
        out = -0.5 * (self.dim * _LOG_2PI + logdet + maha)
        return out if x.ndim > 1 else out[0]

    def marginal(self, idx) -> "MultivariateGaussian":
        idx = np.asarray(idx)
        return MultivariateGaussian(self.mean[idx], self.cov[np.ix_(idx, idx)])


Univariate = Union[Poisson, NegativeBinomial, Bernoulli, TabulatedPmf, Normal]
Block = Union[Sequence[Univariate], MultivariateGaussian]


def _block_dim(block) -> int:
    return block.dim if isinstance(block, MultivariateGaussian) else len(block)


def _block_discrete(block) -> bool:
    if isinstance(block, MultivariateGaussian):
        return False
    return all(d.is_discrete for d in block)


@dataclass(frozen=True)
class HierForecast:
    """Base forecasts for a hierarchy: an upper block and a bottom block.

    Each block is either a sequence of independent univariate distributions or
    one :class:`MultivariateGaussian`. ``independent`` records whether the two
    blocks are independent of each other (required by the sampling path).
    """

    upper: Block
    bottom: Block
    independent: bool = True

    def __post_init__(self):
        for name in ("upper", "bottom"):
            block = getattr(self, name)
            if not isinstance(block, MultivariateGaussian):
                object.__setattr__(self, name, tuple(block))

    @property
    def n_upper(self) -> int:
        return _block_dim(self.upper)

    @property
    def m(self) -> int:
        return _block_dim(self.bottom)

    @property
    def is_discrete(self) -> bool:
        return _block_discrete(self.upper) and _block_discrete(self.bottom)

    def check(self, h) -> None:
        if self.n_upper != h.n_upper or self.m != h.m:
            raise DimensionMismatch(
                f"forecast has {self.n_upper} upper / {self.m} bottom variables, "
                f"hierarchy has {h.n_upper} / {h.m}"
            )

    def mean_var(self) -> tuple[np.ndarray, np.ndarray]:
        """Marginal base means and variances, upper block first."""
        means, variances = [], []
        for block in (self.upper, self.bottom):
            if isinstance(block, MultivariateGaussian):
                means.extend(block.mean)
                variances.extend(np.diag(block.cov))
            else:
                for d in block:
                    mu, v = d.mean_var()
                    means.append(mu)
                    variances.append(v)
        return np.array(means), np.array(variances)

    def sample_block(self, which: str, seed, size: int) -> np.ndarray:
        """Draw ``size`` rows of one block using one derived stream per variable."""
        block = getattr(self, which)
        if isinstance(block, MultivariateGaussian):
            (rng,) = child_generators(seed, 1)
            return block.sample(rng, size)
        rngs = child_generators(seed, len(block))
        cols = [d.sample(r, size) for d, r in zip(block, rngs)]
        return np.column_stack(cols)

    def to_gaussian(self) -> MultivariateGaussian:
        """Joint Gaussian over ``[u; b]`` when every component is Gaussian and the blocks are independent."""
        if not self.independent:
            raise InvalidParameter("joint covariance between blocks is unknown")
        parts = []
        for block in (self.upper, self.bottom):
            if isinstance(block, MultivariateGaussian):
                parts.append(block)
            elif all(isinstance(d, Normal) for d in block):
                parts.append(MultivariateGaussian([d.mean for d in block], np.diag([d.var for d in block])))
            else:
                raise InvalidParameter("all base forecasts must be Gaussian")
        return MultivariateGaussian(
            np.concatenate([p.mean for p in parts]), linalg.block_diag(*[p.cov for p in parts])
        )


def pmf(d, k):
    """Probability ``P(X = k)``; zero outside the support (including negative ``k``)."""
    return d.pmf(k)


def sample(d, rng: np.random.Generator, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be at least 1")
    return d.sample(rng, count)


def mean_var(d) -> tuple[float, float]:
    return d.mean_var()


def distribution_from_json(obj: dict):
    """Parse ``{"family": ..., "params": {...}}``."""
    try:
        family = obj["family"].lower()
        params = obj.get("params", {})
        if family == "poisson":
            return Poisson(float(params.get("lambda", params.get("lam"))))
        if family in ("negbin", "negative_binomial", "nb"):
            return NegativeBinomial(float(params["mu"]), float(params["alpha"]))
        if family == "bernoulli":
            return Bernoulli(float(params["p"]))
        if family == "tabulated":
            return TabulatedPmf(params["support"], params["probs"])
        if family == "gaussian":
            if np.ndim(params["mean"]) == 0:
                return Normal(float(params["mean"]), float(params["var"]))
            return MultivariateGaussian(params["mean"], params["cov"])
    except (KeyError, TypeError) as exc:
        raise InvalidParameter(f"malformed distribution descriptor {obj!r}: {exc}") from None
    raise InvalidParameter(f"unknown family {obj.get('family')!r}")


def distribution_to_json(d) -> dict:
    if isinstance(d, Poisson):
        return {"family": "poisson", "params": {"lambda": d.lam}}
    if isinstance(d, NegativeBinomial):
        return {"family": "negbin", "params": {"mu": d.mu, "alpha": d.alpha}}
    if isinstance(d, Bernoulli):
        return {"family": "bernoulli", "params": {"p": d.p}}
    if isinstance(d, TabulatedPmf):
        return {"family": "tabulated", "params": {"support": d.values.tolist(), "probs": d.probs.tolist()}}
    if isinstance(d, Normal):
        return {"family": "gaussian", "params": {"mean": d.mean, "var": d.var}}
    if isinstance(d, MultivariateGaussian):
        return {"family": "gaussian", "params": {"mean": d.mean.tolist(), "cov": d.cov.tolist()}}
    raise TypeError(f"cannot serialise {type(d).__name__}")
