import math

import numpy as np
import pytest
from scipy import stats

from probrec import Bernoulli, HierForecast, MultivariateGaussian, NegativeBinomial, Normal, Poisson, TabulatedPmf
from probrec.distributions import distribution_from_json, distribution_to_json, mean_var, pmf, sample
from probrec.errors import FactorizationFailure, InvalidParameter, TruncationWarning


def test_poisson_pmf_closed_form():
    assert pmf(Poisson(1.5), 0) == pytest.approx(math.exp(-1.5), abs=1e-15)


def test_bernoulli_pmf():
    assert pmf(Bernoulli(0.3), 1) == pytest.approx(0.3)
    assert pmf(Bernoulli(0.3), 0) == pytest.approx(0.7)
    assert pmf(Bernoulli(0.3), 2) == 0.0


@pytest.mark.parametrize("mu, alpha", [(2.0, 0.5), (0.3, 3.0), (12.0, 0.05), (1.0, 10.0)])
def test_negbin_matches_scipy(mu, alpha):
    # scipy's nbinom(n, p) with n = 1/alpha, p = 1/(1 + alpha*mu) has mean mu, var mu + alpha mu^2
    ref = stats.nbinom(1.0 / alpha, 1.0 / (1.0 + alpha * mu))
    k = np.arange(200)
    np.testing.assert_allclose(NegativeBinomial(mu, alpha).pmf(k), ref.pmf(k), rtol=1e-12, atol=1e-300)
    values, probs, tail = NegativeBinomial(mu, alpha).support(1e-9)
    assert tail < 1e-9
    assert probs.sum() >= 1 - 1e-9


def test_negbin_zero_value():
    # NB(2, 0.5): n = 2, p = 0.5, P(0) = p^n = 0.25
    assert pmf(NegativeBinomial(2.0, 0.5), 0) == pytest.approx(0.25, abs=1e-15)


def test_negbin_alpha_zero_is_poisson():
    k = np.arange(30)
    np.testing.assert_allclose(NegativeBinomial(2.5, 0.0).pmf(k), stats.poisson(2.5).pmf(k), rtol=1e-12)


def test_negative_support_is_zero():
    for d in (Poisson(1.0), NegativeBinomial(1.0, 1.0), Bernoulli(0.5)):
        assert pmf(d, -1) == 0.0


@pytest.mark.parametrize(
    "d, expected",
    [
        (Poisson(6.0), (6.0, 6.0)),
        (Bernoulli(0.3), (0.3, 0.21)),
        (TabulatedPmf([0, 1, 2], [0.1, 0.2, 0.7]), (1.6, 0.44)),
        (NegativeBinomial(2.0, 0.5), (2.0, 4.0)),
    ],
)
def test_mean_var(d, expected):
    np.testing.assert_allclose(mean_var(d), expected, atol=1e-12)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: Poisson(-1.0),
        lambda: NegativeBinomial(0.0, 1.0),
        lambda: NegativeBinomial(1.0, -0.1),
        lambda: Bernoulli(1.2),
        lambda: TabulatedPmf([0, 1], [0.5, 0.6]),
        lambda: TabulatedPmf([0, 1], [1.2, -0.2]),
        lambda: Normal(0.0, -1.0),
    ],
)
def test_invalid_parameters(factory):
    with pytest.raises(InvalidParameter):
        factory()


def test_poisson_sample_mean():
    x = sample(Poisson(0.5), np.random.default_rng(0), 10**6)
    assert abs(x.mean() - 0.5) < 0.005


def test_gaussian_sample_cov():
    g = MultivariateGaussian([0.0, 0.0], np.eye(2))
    x = g.sample(np.random.default_rng(1), 10**5)
    assert np.max(np.abs(np.cov(x.T) - np.eye(2))) < 0.05


def test_point_mass_sample():
    np.testing.assert_array_equal(sample(TabulatedPmf([0], [1.0]), np.random.default_rng(0), 5), np.zeros(5))


@pytest.mark.parametrize(
    "d",
    [Poisson(0.7), NegativeBinomial(0.8, 2.5), Bernoulli(0.35), TabulatedPmf([0, 2, 5], [0.5, 0.3, 0.2])],
)
def test_sampling_mean_within_four_se(d):
    mu, var = d.mean_var()
    x = d.sample(np.random.default_rng(11), 10**6)
    assert abs(x.mean() - mu) < 4 * math.sqrt(var / x.size)


@pytest.mark.parametrize("d", [Poisson(3.0), NegativeBinomial(1.0, 4.0), Bernoulli(0.4)])
def test_support_mass(d):
    values, probs, tail = d.support(1e-9)
    assert np.all(probs >= 0)
    assert probs.sum() >= 1 - 1e-9
    assert np.all(np.diff(values) == 1)


def test_support_cap_warns():
    with pytest.warns(TruncationWarning):
        values, probs, tail = NegativeBinomial(1000.0, 50.0).support(1e-12)
    assert values.size <= 10**4 + 1
    assert tail > 0


def test_gaussian_validation():
    with pytest.raises(InvalidParameter):
        MultivariateGaussian([0, 0], [[1, 0.5], [0, 1]])
    with pytest.raises(FactorizationFailure):
        MultivariateGaussian([0, 0], [[1, 2], [2, 1]])
    # singular but PSD is allowed
    g = MultivariateGaussian([0, 0], [[1, 1], [1, 1]])
    x = g.sample(np.random.default_rng(0), 100)
    np.testing.assert_allclose(x[:, 0], x[:, 1])


def test_gaussian_logdensity_matches_scipy():
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    g = MultivariateGaussian([1.0, -1.0], cov)
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]])
    ref = stats.multivariate_normal([1.0, -1.0], cov).logpdf(pts)
    np.testing.assert_allclose(g.logdensity(pts), ref, rtol=1e-12)


def test_json_roundtrip():
    for d in (
        Poisson(1.5),
        NegativeBinomial(2.0, 0.5),
        Bernoulli(0.3),
        TabulatedPmf([0, 1, 2], [0.1, 0.2, 0.7]),
        Normal(1.0, 2.0),
    ):
        again = distribution_from_json(distribution_to_json(d))
        assert again.mean_var() == pytest.approx(d.mean_var())
    g = distribution_from_json({"family": "gaussian", "params": {"mean": [0, 1], "cov": [[1, 0], [0, 2]]}})
    assert isinstance(g, MultivariateGaussian) and g.dim == 2


def test_json_unknown_family():
    with pytest.raises(InvalidParameter):
        distribution_from_json({"family": "weibull", "params": {}})


def test_block_sampling_is_per_variable():
    # adding a variable must not change the draws of the existing ones
    f2 = HierForecast([Poisson(1.0)], [Poisson(0.5), Poisson(0.8)])
    f3 = HierForecast([Poisson(1.0)], [Poisson(0.5), Poisson(0.8), Poisson(2.0)])
    a = f2.sample_block("bottom", 42, 1000)
    b = f3.sample_block("bottom", 42, 1000)
    np.testing.assert_array_equal(a, b[:, :2])
    np.testing.assert_array_equal(a, f2.sample_block("bottom", 42, 1000))


def test_hier_forecast_moments():
    f = HierForecast([Poisson(6.0)], [Poisson(0.5), Poisson(0.8)])
    mean, var = f.mean_var()
    np.testing.assert_allclose(mean, [6.0, 0.5, 0.8])
    np.testing.assert_allclose(var, [6.0, 0.5, 0.8])
    assert f.is_discrete and f.n_upper == 1 and f.m == 2
