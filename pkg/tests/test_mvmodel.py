import numpy as np
import pytest
from scipy import stats

from transroc import rocmetrics as rm
from transroc.bernstein import BernsteinBasis, TransformationFunction, reparam_to_monotone
from transroc.fit import fit_mle
from transroc.inference import SimCiConfig
from transroc.model import Dataset, LikelihoodDesign, ModelSpec
from transroc.mvmodel import (
    JointData,
    JointParams,
    JointSpec,
    compare_tests,
    fit_joint,
    joint_loglik,
    joint_loglik_grad,
    marginal_roc_param,
    sigma_from_lambda,
)

pytestmark = pytest.mark.filterwarnings("ignore::transroc.exceptions.FlatTransformationWarning")

SUPPORT = (-4.0, 6.0)


def joint_spec(names=("a", "b"), order=4):
    specs = tuple(ModelSpec("probit", BernsteinBasis(order, SUPPORT)) for _ in names)
    return JointSpec(tuple(names), specs)


def sample(n, shifts, lam, seed, transform=None):
    rng = np.random.default_rng(seed)
    d = np.r_[np.zeros(n), np.ones(n)]
    J = len(shifts)
    sigma = sigma_from_lambda(np.atleast_1d(lam), J)
    z = rng.multivariate_normal(np.zeros(J), sigma, size=2 * n)
    z += d[:, None] * np.asarray(shifts)
    if transform is not None:
        z = transform(z)
    return JointData(z, d)


@pytest.fixture(scope="module")
def fixture_params():
    spec = joint_spec()
    thetas = [
        np.r_[0.7, reparam_to_monotone([-1.5, -0.2, 0.1, -0.4, 0.3])],
        np.r_[-0.3, reparam_to_monotone([-2.0, 0.2, -0.1, 0.0, -0.5])],
    ]
    data = sample(15, (0.5, 0.2), 0.0, seed=1)
    return spec, thetas, data


def test_sigma_from_lambda_by_hand():
    np.testing.assert_allclose(sigma_from_lambda([0.5], 2), [[1, -0.5], [-0.5, 1.25]])


def test_factorizes_without_dependence(fixture_params):
    spec, thetas, data = fixture_params
    joint = joint_loglik(spec, JointParams(thetas, [0.0]), data)
    separate = sum(
        LikelihoodDesign(spec.specs[j], data.marginal(j)).loglik(thetas[j]) for j in range(2)
    )
    assert joint == pytest.approx(separate, rel=1e-13)


def test_matches_bivariate_normal_density(fixture_params):
    spec, thetas, data = fixture_params
    lam = 0.5
    sigma = np.array([[1.0, -0.5], [-0.5, 1.25]])
    z = np.empty_like(data.Y)
    logjac = 0.0
    for j in range(2):
        h = TransformationFunction(spec.specs[j].basis, thetas[j][1:])
        z[:, j] = h(data.Y[:, j]) - thetas[j][0] * data.disease
        logjac += np.sum(np.log(h.eval_deriv(data.Y[:, j])))
    oracle = stats.multivariate_normal(np.zeros(2), sigma).logpdf(z).sum() + logjac
    assert joint_loglik(spec, JointParams(thetas, [lam]), data) == pytest.approx(oracle, rel=1e-12)


def test_relabelling_tests_leaves_loglik_unchanged(fixture_params):
    spec, thetas, data = fixture_params
    lam = 0.8
    a, b = 1 / np.sqrt(lam**2 + 1), np.sqrt(lam**2 + 1)
    swapped = JointData(data.Y[:, ::-1], data.disease)
    original = joint_loglik(spec, JointParams(thetas, [lam]), data)
    relabelled = joint_loglik(spec, JointParams([a * thetas[1], b * thetas[0]], [lam]), swapped)
    assert relabelled == pytest.approx(original, rel=1e-12)


def test_gradient_by_finite_differences(fixture_params):
    spec, thetas, data = fixture_params
    params = JointParams(thetas, [0.4])
    g = joint_loglik_grad(spec, params, data)
    vec = params.vector
    fd = np.empty_like(vec)
    for i in range(vec.size):
        e = np.zeros_like(vec)
        e[i] = 1e-6
        up = joint_loglik(spec, JointParams.from_vector(spec, vec + e), data)
        dn = joint_loglik(spec, JointParams.from_vector(spec, vec - e), data)
        fd[i] = (up - dn) / 2e-6
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6)


def test_null_dependence_recovered():
    data = sample(1000, (1.0, 0.6), 0.0, seed=5)
    joint = fit_joint(joint_spec(), data)
    assert abs(joint.lam[0]) < 3 * joint.lambda_se()[0]


@pytest.fixture(scope="module")
def dependent_fit():
    data = sample(1000, (1.2, 0.8), 0.9, seed=7, transform=lambda z: np.c_[z[:, 0], np.arcsinh(z[:, 1])])
    return data, fit_joint(joint_spec(), data)


def test_marginal_shifts_match_univariate_fits(dependent_fit):
    data, joint = dependent_fit
    for j in range(2):
        uni = fit_mle(ModelSpec("probit", BernsteinBasis(4, SUPPORT)), data.marginal(j))
        assert marginal_roc_param(joint, j) == pytest.approx(uni.delta, abs=0.05)


def test_implied_correlation_matches_residual_correlation(dependent_fit):
    data, joint = dependent_fit
    z = np.empty_like(data.Y)
    for j in range(2):
        p = joint.marginal_params(j)
        h = TransformationFunction(joint.spec.specs[j].basis, p.theta)
        z[:, j] = h(data.Y[:, j]) - p.beta[0] * data.disease
    sample_corr = np.corrcoef(z.T)[0, 1]
    lam = joint.lam[0]
    assert -lam / np.sqrt(lam**2 + 1) == pytest.approx(sample_corr, abs=0.03)
    assert joint.correlation[0, 1] == pytest.approx(-lam / np.sqrt(lam**2 + 1))


def test_marginal_parameter_without_dependence():
    data = sample(500, (1.0, 0.5), 0.0, seed=3)
    joint = fit_joint(joint_spec(), data)
    joint.params.lam[:] = 0.0
    assert marginal_roc_param(joint, "b") == joint.marginal_params(1).beta[0]


def test_compare_same_test_gives_no_difference(dependent_fit):
    _, joint = dependent_fit
    cmp = compare_tests(joint, 0, 0, config=SimCiConfig(500, 1))
    assert cmp.auc_difference.point == 0.0 and cmp.p_value == 1.0


def test_duplicated_column_flags_boundary():
    data = sample(300, (1.0,), 0.0, seed=2)
    dup = JointData(np.c_[data.Y[:, 0], data.Y[:, 0]], data.disease)
    joint = fit_joint(joint_spec(), dup)
    assert joint.at_bound
    assert any("bound" in note for note in joint.notes)
    cmp = compare_tests(joint, 0, 1, config=SimCiConfig(1000, 1))
    assert abs(cmp.auc_difference.point) < 1e-3


def test_calibrated_auc_difference():
    # latent marginal shifts 1.874 and 1.214 give AUCs 0.907 and 0.805
    data = sample(4000, (1.874, 1.214 * np.sqrt(1 + 0.6**2)), 0.6, seed=11,
                  transform=lambda z: np.c_[np.exp(z[:, 0] / 4), z[:, 1]])
    spec = JointSpec(("whtr", "sbp"), (ModelSpec("probit", BernsteinBasis(6, (0.3, 6.0))),
                                       ModelSpec("probit", BernsteinBasis(6, (-5.5, 7.5)))))
    joint = fit_joint(spec, data)
    cmp = compare_tests(joint, "whtr", "sbp", config=SimCiConfig(5000, 4))
    truth = rm.auc("probit", 1.874) - rm.auc("probit", 1.214)
    assert round(truth, 2) == 0.10
    half = (cmp.auc_difference.upper - cmp.auc_difference.lower) / 2
    assert abs(cmp.auc_difference.point - truth) < 1.5 * half
    assert cmp.auc_difference.lower > 0 and cmp.p_value < 1e-6


def test_spec_rejects_other_links():
    with pytest.raises(ValueError):
        JointSpec(("a", "b"), (ModelSpec("logit", BernsteinBasis(3, SUPPORT)),) * 2)
    with pytest.raises(IndexError):
        joint_spec().index("zzz")
