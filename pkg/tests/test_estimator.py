import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from transroc import TransformationROC
from transroc import rocmetrics as rm
from transroc.estimator import fit_dataset
from transroc.model import Dataset

from conftest import two_sample

pytestmark = pytest.mark.filterwarnings("ignore::transroc.exceptions.FlatTransformationWarning")


@pytest.fixture(scope="module")
def data():
    return two_sample(250, 250, 1.1, seed=13, link="logit")


def test_params_follow_sklearn_conventions():
    est = TransformationROC(link="probit", order=4)
    assert est.get_params()["order"] == 4
    twin = clone(est.set_params(order=5))
    assert twin.order == 5 and twin.link == "probit"
    assert not hasattr(twin, "fitted_")


def test_unfitted_estimator_raises():
    with pytest.raises(NotFittedError):
        TransformationROC().auc()


def test_two_sample_fit_and_summaries(data):
    y, d = data
    est = TransformationROC().fit(None, y, d)
    assert est.n_features_in_ == 0 and est.coef_.shape == (1,)
    assert est.delta_ == est.coef_[0]
    assert est.auc() == pytest.approx(rm.auc("logit", est.delta_))
    sens, spec = est.sens_spec()
    assert sens + spec - 1 == pytest.approx(est.youden())
    assert est.roc().values[-1] == 1.0
    ci = est.score_ci(level=0.9)
    assert ci.lower < est.delta_ < ci.upper
    stat, p = est.score_test()
    assert p < 1e-6
    auc_ci = est.index("auc", method="simulate", B=500, seed=1)
    assert auc_ci.lower <= auc_ci.point <= auc_ci.upper
    band = est.roc_band()
    assert np.all(band.lower <= band.upper)


def test_transform_and_cdf(data):
    y, d = data
    est = TransformationROC(link="probit").fit(None, y, d)
    grid = np.linspace(np.min(y), np.max(y), 50)
    assert np.all(np.diff(est.transform(grid)) >= 0)
    f0 = est.predict_cdf(grid, 0)
    f1 = est.predict_cdf(grid, 1)
    assert np.all(f1 <= f0 + 1e-12)
    assert est.threshold() == pytest.approx(rm.optimal_threshold(est.fitted_))


def test_score_is_mean_loglik(data):
    y, d = data
    est = TransformationROC().fit(None, y, d)
    assert est.score(None, y, d) == pytest.approx(est.fitted_.loglik / y.size)


def test_covariates_and_profiles():
    rng = np.random.default_rng(1)
    n = 300
    x = rng.normal(size=(2 * n, 1))
    d = np.r_[np.zeros(n), np.ones(n)]
    y = rng.logistic(size=2 * n) + d * (1 + 0.6 * x[:, 0])
    est = TransformationROC().fit(x, y, d)
    assert est.n_features_in_ == 1 and est.coef_.shape == (3,)
    assert est.auc([1.0]) > est.auc([-1.0])
    assert est.shift([1.0]) == pytest.approx(est.coef_[0] + est.coef_[2])


def test_censored_and_ordinal_inputs(data):
    y, d = data
    bounds = np.column_stack([y, y])
    bounds[y < -1] = [np.nan, -1.0]
    est = TransformationROC().fit(None, bounds, d)
    assert np.isfinite(est.delta_)
    codes = np.digitize(y, [-1.0, 0.5, 2.0]) + 1
    ordinal = TransformationROC(ordinal=True).fit(None, codes, d)
    pts = ordinal.ordinal_points()
    assert pts.fpr.size == 4 and np.all(np.diff(pts.tpr) <= 0)


def test_fit_dataset_helper(data):
    y, d = data
    est = fit_dataset(Dataset.from_arrays(y, d), link="cloglog")
    assert est.link == "cloglog" and np.isfinite(est.delta_)


@pytest.mark.parametrize(
    "y, d, message",
    [([1.0, 2.0, 3.0], [0, 0, 0], "disease group empty"),
     ([1.0, np.nan, 3.0], [0, 1, 1], "finite"),
     ([1.0, 2.0, 3.0], [0, 2, 1], "0/1")],
)
def test_input_validation(y, d, message):
    with pytest.raises(ValueError, match=message):
        TransformationROC().fit(None, y, d)


def test_bad_level():
    y, d = two_sample(30, 30, 1.0)
    est = TransformationROC().fit(None, y, d)
    with pytest.raises(ValueError):
        est.score_ci(level=95)
