"""Random problem generators shared by the unit and acceptance suites."""

import numpy as np

from probrec import HierForecast, MultivariateGaussian, Poisson, TabulatedPmf, build_hierarchy


def random_hierarchy(rng, max_bottom=6, max_upper=3):
    m = int(rng.integers(1, max_bottom + 1))
    k = int(rng.integers(1, max_upper + 1))
    A = rng.integers(0, 2, size=(k, m))
    for i in range(k):
        if not A[i].any():
            A[i, rng.integers(m)] = 1
    return build_hierarchy(A)


def random_psd(rng, d, rank=None):
    rank = d if rank is None else rank
    L = rng.normal(size=(d, rank))
    return L @ L.T + 0.05 * np.eye(d)


def random_gaussian_base(rng, h):
    return MultivariateGaussian(rng.normal(scale=3.0, size=h.n), random_psd(rng, h.n))


def random_tabulated(rng, max_value=4):
    values = np.arange(int(rng.integers(1, max_value + 1)) + 1)
    probs = rng.dirichlet(np.ones(values.size))
    return TabulatedPmf(values, probs)


def random_discrete_base(rng, m_max=3):
    """One-upper hierarchy with finite-support tabulated bottoms and a Poisson or tabulated upper."""
    m = int(rng.integers(1, m_max + 1))
    h = build_hierarchy(np.ones((1, m), dtype=int))
    bottom = [random_tabulated(rng) for _ in range(m)]
    if rng.random() < 0.5:
        upper = Poisson(float(rng.uniform(0.3, 2.5 * m)))
    else:
        upper = random_tabulated(rng, max_value=4 * m)
    return h, HierForecast([upper], bottom)
