import numpy as np
import pytest

from transroc.bernstein import BernsteinBasis, default_support
from transroc.model import Dataset, ModelSpec

LINK_NAMES = ("probit", "logit", "cloglog", "loglog")


def two_sample(n0, n1, shift, seed=0, link="probit"):
    """Two-sample data from the transformation model with h = identity."""
    from transroc.links import get_link

    rng = np.random.default_rng(seed)
    lk = get_link(link)
    y0 = lk.quantile(rng.uniform(size=n0))
    y1 = lk.quantile(rng.uniform(size=n1)) + shift
    y = np.r_[y0, y1]
    d = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    return y, d


def make_spec(y, link="probit", order=6, covariates=(), interactions=True):
    return ModelSpec(link, BernsteinBasis(order, default_support(y)), covariates, interactions)


@pytest.fixture
def probit_data():
    y, d = two_sample(150, 150, 1.0, seed=11)
    return Dataset.from_arrays(y, d), y, d


@pytest.fixture(params=LINK_NAMES)
def link_name(request):
    return request.param
