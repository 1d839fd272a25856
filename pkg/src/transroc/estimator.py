"""scikit-learn style front end to the transformation-model ROC analysis."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import inference as inf
from . import rocmetrics as rm
from ._validation import check_covariates, check_level, make_dataset
from .bernstein import BernsteinBasis, OrdinalBasis, default_support
from .fit import FitOptions, fit_mle
from .links import get_link
from .model import Dataset, LikelihoodDesign, ModelSpec


class TransformationROC(BaseEstimator):
    """ROC analysis with the model F(y | d, x) = F_Z(h(y) - delta d - x'xi - d x'gamma).

    Parameters
    ----------
    link : {"logit", "probit", "cloglog", "loglog"}
    order : int
        Order of the Bernstein polynomial for h.
    support : tuple or None
        Interval (l, u) for h; by default the range of the finite responses
        widened by 5% on each side.
    interactions : bool
        Whether covariates modify the ROC curve (the gamma terms).
    ordinal : bool
        Treat ``y`` as integer category codes 1..K.
    n_categories : int or None
        K for ordinal responses; inferred from the data when omitted.

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> y = np.r_[rng.normal(size=200), rng.normal(1.0, 1.0, size=200)]
    >>> d = np.r_[np.zeros(200), np.ones(200)]
    >>> model = TransformationROC(link="probit").fit(None, y, d)
    >>> 0.6 < model.auc() < 0.9
    True
    """

    def __init__(self, link="logit", order=6, support=None, interactions=True, ordinal=False,
                 n_categories=None, max_iter=500, tol=1e-7):
        self.link = link
        self.order = order
        self.support = support
        self.interactions = interactions
        self.ordinal = ordinal
        self.n_categories = n_categories
        self.max_iter = max_iter
        self.tol = tol

    def _make_spec(self, data, k, names):
        link = get_link(self.link)
        if self.ordinal:
            basis = OrdinalBasis(k)
        else:
            support = self.support if self.support is not None else default_support(data.finite_values())
            basis = BernsteinBasis(self.order, tuple(support))
        return ModelSpec(link, basis, names, bool(self.interactions))

    def fit(self, X, y, disease):
        """Fit to responses ``y`` (exact or (n, 2) bounds) with covariates ``X`` (or None)."""
        names = ()
        if X is not None and hasattr(X, "columns"):
            names = tuple(str(c) for c in X.columns)
        n = np.asarray(y).shape[0]
        Xa = check_covariates(X, n)
        data, k = make_dataset(y, disease, Xa, names, self.ordinal, self.n_categories)
        spec = self._make_spec(data, k, data.covariate_names)
        self.fitted_ = fit_mle(spec, data, FitOptions(max_iter=self.max_iter, tol=self.tol))
        self.spec_ = spec
        self.data_ = data
        self.n_features_in_ = Xa.shape[1]
        self.coef_ = self.fitted_.beta.copy()
        self.theta_ = self.fitted_.theta.copy()
        self.delta_ = self.fitted_.delta
        return self

    # -- model quantities ---------------------------------------------------
    def transform(self, y):
        """h(y) under the fitted transformation function."""
        check_is_fitted(self, "fitted_")
        return self.fitted_.transformation()(np.asarray(y, dtype=float))

    def predict_cdf(self, y, disease, X=None):
        """F(y | d, x) for exact response values ``y``."""
        check_is_fitted(self, "fitted_")
        y = np.asarray(y, dtype=float).ravel()
        d = np.broadcast_to(np.asarray(disease).ravel(), y.shape)
        Xa = check_covariates(X, y.shape[0])
        mu = self.spec_.shift_design(d, Xa) @ self.coef_
        return self.spec_.link.cdf(self.transform(y) - mu)

    def score(self, X, y, disease):
        """Mean log-likelihood of (X, y, disease) under the fitted model."""
        check_is_fitted(self, "fitted_")
        n = np.asarray(y).shape[0]
        data, _ = make_dataset(y, disease, check_covariates(X, n), self.data_.covariate_names,
                               self.ordinal, getattr(self.spec_.basis, "n_categories", None))
        return LikelihoodDesign(self.spec_, data).loglik(self.fitted_.params.vector) / n

    # -- ROC summaries ------------------------------------------------------
    def shift(self, x=None):
        check_is_fitted(self, "fitted_")
        return rm.shift_at(self.fitted_, x)

    def roc(self, x=None, p=None):
        shift = self.shift(x)
        return rm.roc_curve(self.spec_.link, shift, p)

    def auc(self, x=None):
        shift = self.shift(x)
        return rm.auc(self.spec_.link, shift)

    def youden(self, x=None):
        shift = self.shift(x)
        return rm.youden(self.spec_.link, shift)

    def threshold(self, x=None):
        check_is_fitted(self, "fitted_")
        return rm.optimal_threshold(self.fitted_, x)

    def sens_spec(self, x=None):
        shift = self.shift(x)
        return rm.sens_spec_at_star(self.spec_.link, shift)

    def ordinal_points(self, x=None):
        check_is_fitted(self, "fitted_")
        return rm.ordinal_roc_points(self.fitted_, x)

    # -- inference ----------------------------------------------------------
    def score_ci(self, x=None, level=0.95):
        check_is_fitted(self, "fitted_")
        check_level(level)
        return inf.score_ci(self.spec_, self.data_, level, x=x,
                            fitted=self.fitted_ if x is None else None)

    def score_test(self, x=None):
        """Score test of delta(x) = 0: (statistic, p-value)."""
        check_is_fitted(self, "fitted_")
        return inf.hypothesis_test_delta_zero(self.spec_, self.data_, x=x)

    def index(self, kind, method="score", x=None, level=0.95, B=1000, seed=None):
        check_is_fitted(self, "fitted_")
        check_level(level)
        return inf.index_interval(self.fitted_, kind, method, level, x, data=self.data_,
                                  config=inf.SimCiConfig(B, seed))

    def roc_band(self, x=None, level=0.95, p=None):
        ci = self.score_ci(x, level)
        return inf.uniform_roc_band(self.spec_.link, ci, p)


def fit_dataset(data: Dataset, **params):
    """Convenience: fit a :class:`TransformationROC` to an existing Dataset."""
    est = TransformationROC(**params)
    y = data.upper if np.all(data.exact) else np.column_stack([data.lower, data.upper])
    return est.fit(data.X if data.X.shape[1] else None, y, data.disease)
