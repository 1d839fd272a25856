import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from transroc.bernstein import BernsteinBasis, TransformationFunction, reparam_to_monotone
from transroc.exceptions import NonFiniteLikelihoodError
from transroc.model import (
    Dataset,
    LikelihoodDesign,
    ModelSpec,
    Observation,
    ParameterVector,
    loglik,
    loglik_contribution,
    observed_information,
    schur_inverse_block,
    score,
)

from conftest import LINK_NAMES

SCIPY = {
    "probit": stats.norm,
    "logit": stats.logistic,
    "cloglog": stats.gumbel_l,
    "loglog": stats.gumbel_r,
}


def linear_spec(link="probit", support=(-1.0, 1.0), covariates=()):
    return ModelSpec(link, BernsteinBasis(1, support), covariates)


def test_right_censored_at_centre_is_log_half():
    spec = linear_spec()
    params = ParameterVector([0.0], [-1.0, 1.0])
    obs = Observation.right_censored(0.0, 0)
    assert loglik_contribution(spec, params, obs) == pytest.approx(math.log(0.5), abs=1e-15)


def test_interval_contribution_is_cdf_difference():
    spec = linear_spec("logit", (0.0, 1.0))
    params = ParameterVector([0.0], [0.0, 1.0])
    value = loglik_contribution(spec, params, Observation.interval(0.4, 0.6, 1))
    expit = lambda t: 1 / (1 + math.exp(-t))  # noqa: E731
    assert value == pytest.approx(math.log(expit(0.6) - expit(0.4)), rel=1e-13)


@pytest.mark.parametrize("link", LINK_NAMES)
def test_exact_density_is_limit_of_interval_probability(link):
    spec = ModelSpec(link, BernsteinBasis(4, (-2, 3)))
    params = ParameterVector([0.7], reparam_to_monotone([-1.0, 0.1, -0.3, 0.2, 0.0]))
    y, eps = 0.4, 1e-5
    exact = loglik_contribution(spec, params, Observation.exact(y, 1))
    interval = loglik_contribution(spec, params, Observation.interval(y - eps, y + eps, 1))
    assert math.exp(exact) == pytest.approx(math.exp(interval) / (2 * eps), rel=1e-4)


def transcription(link, spec, beta, theta, obs):
    """Term-by-term log-likelihood written straight from the model definition."""
    dist = SCIPY[link]
    h = TransformationFunction(spec.basis, theta)
    total = 0.0
    for o in obs:
        x = np.asarray(o.covariates)
        mu = beta[0] * o.disease
        if x.size:
            mu += x @ beta[1:1 + x.size] + o.disease * x @ beta[1 + x.size:]
        if o.kind == "exact":
            total += dist.logpdf(h(o.upper) - mu) + math.log(h.eval_deriv(o.upper))
        else:
            hi = dist.cdf(h(o.upper) - mu) if np.isfinite(o.upper) else 1.0
            lo = dist.cdf(h(o.lower) - mu) if np.isfinite(o.lower) else 0.0
            total += math.log(hi - lo)
    return total


TEN = [
    Observation.exact(0.1, 0, (0.5,)),
    Observation.exact(-0.8, 0, (-1.0,)),
    Observation.exact(1.2, 1, (0.2,)),
    Observation.exact(2.0, 1, (1.5,)),
    Observation.left_censored(-0.5, 0, (0.0,)),
    Observation.left_censored(0.3, 1, (-0.7,)),
    Observation.right_censored(1.0, 0, (1.1,)),
    Observation.right_censored(0.0, 1, (0.4,)),
    Observation.interval(-0.2, 0.6, 0, (-0.3,)),
    Observation.interval(0.5, 1.7, 1, (0.9,)),
]


@pytest.mark.parametrize("link", LINK_NAMES)
def test_ten_observation_fixture_against_transcription(link):
    spec = ModelSpec(link, BernsteinBasis(3, (-1.5, 2.5)), ("x",))
    beta = np.array([0.8, -0.3, 0.25])
    theta = reparam_to_monotone([-1.2, 0.0, 0.3, -0.4])
    got = loglik(spec, ParameterVector(beta, theta), TEN)
    assert got == pytest.approx(transcription(link, spec, beta, theta, TEN), rel=1e-12)


def test_single_observation_loglik_equals_contribution():
    spec = linear_spec("logit")
    params = ParameterVector([0.3], [-1.0, 1.5])
    obs = Observation.exact(0.2, 1)
    assert loglik(spec, params, [obs]) == loglik_contribution(spec, params, obs)


def test_label_symmetry_at_zero_shift():
    spec = linear_spec("probit", (-3, 3))
    params = ParameterVector([0.0], [-2.0, 2.0])
    y = np.array([-1.0, 0.5, 1.2, -0.3])
    a = loglik(spec, params, Dataset.from_arrays(y, [0, 0, 1, 1]))
    b = loglik(spec, params, Dataset.from_arrays(y, [1, 1, 0, 0]))
    assert a == b


def random_problem(rng, link, kinds=True):
    n = 40
    x = rng.normal(size=(n, 1))
    d = rng.integers(0, 2, n)
    d[:2] = [0, 1]
    y = rng.normal(size=n) + d
    lo, hi = y.copy(), y.copy()
    if kinds:
        lo[:6] = -np.inf
        hi[6:12] = np.inf
        hi[12:18] = y[12:18] + 0.5
    data = Dataset.from_arrays(np.column_stack([lo, hi]), d, x)
    spec = ModelSpec(link, BernsteinBasis(5, (-4.5, 5.5)), ("x0",))
    vec = np.r_[rng.normal(0, 0.7, 3), reparam_to_monotone(rng.normal(-0.5, 0.5, 6) + [-2, 0, 0, 0, 0, 0])]
    return spec, data, vec


@pytest.mark.parametrize("link", LINK_NAMES)
def test_score_matches_central_differences_on_random_draws(link):
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(25):
        spec, data, vec = random_problem(rng, link)
        design = LikelihoodDesign(spec, data)
        g = design.score(vec)
        fd = np.empty_like(vec)
        for i in range(vec.size):
            e = np.zeros_like(vec)
            e[i] = 1e-6 * max(1.0, abs(vec[i]))
            fd[i] = (design.loglik(vec + e) - design.loglik(vec - e)) / (2 * e[i])
        worst = max(worst, np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)))
    assert worst < 1e-5


def test_delta_score_by_hand():
    spec = linear_spec("probit", (-3, 3))
    vec = np.array([0.4, -3.0, 3.0])  # h(y) = y
    data = Dataset.from_arrays([1.3], [1])
    assert score(spec, vec, data)[0] == pytest.approx(1.3 - 0.4, rel=1e-12)


@pytest.mark.parametrize("link", LINK_NAMES)
def test_information_delta_entry_by_hand(link):
    spec = linear_spec(link, (-3, 3))
    vec = np.array([0.4, -3.0, 3.0])
    y = np.array([-0.5, 0.9, 1.3])
    data = Dataset.from_arrays(y, [1, 1, 1])
    from transroc.links import get_link

    expected = -np.sum(get_link(link).d2logpdf(y - 0.4))
    for method in ("fd", "analytic"):
        info = LikelihoodDesign(spec, data).information(vec, method=method)
        assert info[0, 0] == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("link", LINK_NAMES)
def test_information_symmetric_and_methods_agree(link):
    rng = np.random.default_rng(5)
    spec, data, vec = random_problem(rng, link)
    design = LikelihoodDesign(spec, data)
    analytic = design.hessian(vec)
    np.testing.assert_allclose(analytic, analytic.T, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(design.information(vec, "fd"), -analytic, rtol=1e-5, atol=1e-6)


def test_schur_block_equals_block_of_inverse():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(6, 6))
    info = a @ a.T + 6 * np.eye(6)
    np.testing.assert_allclose(schur_inverse_block(info, 2), np.linalg.inv(info)[:2, :2], rtol=1e-12)


def test_observed_information_public_wrapper():
    rng = np.random.default_rng(8)
    spec, data, vec = random_problem(rng, "logit", kinds=False)
    info = observed_information(spec, vec, data)
    assert info.shape == (spec.n_params, spec.n_params)
    assert np.all(np.linalg.eigvalsh(info) > 0)


def test_nonfinite_likelihood_is_reported():
    spec = linear_spec("probit", (-1, 1))
    flat = ParameterVector([0.0], [0.0, 0.0])
    with pytest.raises(NonFiniteLikelihoodError):
        loglik_contribution(spec, flat, Observation.exact(0.1, 0))


@pytest.mark.parametrize(
    "args",
    [(1.0, 0.0, 0), (np.nan, 1.0, 0), (0.0, 1.0, 2), (np.inf, np.inf, 0)],
)
def test_invalid_observations(args):
    with pytest.raises(ValueError):
        Observation(*args)


@settings(max_examples=50, deadline=None)
@given(lo=st.floats(-3, 3), width=st.floats(1e-3, 3), delta=st.floats(-3, 3))
def test_interval_probability_never_exceeds_one(lo, width, delta):
    spec = linear_spec("logit", (-10, 10))
    params = ParameterVector([delta], [-10.0, 10.0])
    value = loglik_contribution(spec, params, Observation.interval(lo, lo + width, 1))
    assert value <= 0.0


def test_spec_roundtrip():
    spec = ModelSpec("cloglog", BernsteinBasis(4, (0.0, 2.0)), ("a", "b"), False)
    again = ModelSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()
    assert spec.n_beta == 3 and spec.beta_names == ["delta", "xi[a]", "xi[b]"]
