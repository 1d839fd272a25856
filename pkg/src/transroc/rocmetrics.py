"""ROC curves and summary indices implied by a shift transformation model.

For F(y | d, x) = F_Z(h(y) - mu_d(x)) the ROC curve depends on the data only
through the shift delta(x) = delta + x^T gamma:

    ROC(p | x) = 1 - F_Z(F_Z^{-1}(1 - p) - delta(x)).

Every index below is therefore a closed-form function of (link, delta(x)),
except the optimal threshold, which is mapped back to the response scale
through the inverse of the estimated transformation function.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import DimensionMismatchError, PolarityWarning
from .links import Link, get_link

__all__ = [
    "DEFAULT_GRID",
    "INDEX_KINDS",
    "RocCurve",
    "IndexEstimate",
    "OrdinalRocPoints",
    "shift_at",
    "baseline_at",
    "roc_eval",
    "roc_curve",
    "auc",
    "youden",
    "ovl",
    "threshold_transform",
    "optimal_threshold",
    "sens_spec_at_star",
    "index_value",
    "ordinal_roc_points",
]

DEFAULT_GRID = np.round(np.linspace(0.0, 1.0, 1001), 12)
INDEX_KINDS = ("auc", "youden", "threshold", "sens", "spec", "ovl")


def _finish(value, like):
    return float(value) if np.ndim(like) == 0 else value


def _x_over_expm1(x):
    # x / (exp(x) - 1), equal to 1 at x = 0
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-10
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(small, 1.0 - 0.5 * x, x / np.expm1(np.where(small, 1.0, x)))
    return out


def _log_expm1_over(x):
    # log((exp(x) - 1) / x), equal to 0 at x = 0
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-5
    safe = np.where(small, 1.0, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = safe + np.log(-np.expm1(-np.abs(safe))) - np.log(np.abs(safe))
        neg = np.log(-np.expm1(-np.abs(safe))) - np.log(np.abs(safe))
    series = x / 2.0 + x * x / 24.0 - x**4 / 2880.0
    return np.where(small, series, np.where(x > 0, pos, neg))


# --------------------------------------------------------------------------
# shift at a covariate profile


def _gamma_xi(fitted):
    spec = fitted.spec
    p = spec.n_covariates
    beta = np.asarray(fitted.beta if hasattr(fitted, "beta") else fitted.params.beta)
    xi = beta[1: 1 + p]
    gamma = beta[1 + p: 1 + 2 * p] if spec.interactions else np.zeros(p)
    return xi, gamma


def _profile(fitted, x):
    p = fitted.spec.n_covariates
    if x is None:
        return np.zeros(p)
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if x.shape[0] != p:
        raise DimensionMismatchError(
            f"covariate profile has {x.shape[0]} entries, the model has {p} covariates"
        )
    return x


def shift_at(fitted, x=None) -> float:
    """delta(x) = delta + x^T gamma (just delta without covariates)."""
    x = _profile(fitted, x)
    _, gamma = _gamma_xi(fitted)
    return float(fitted.params.beta[0] + x @ gamma)


def baseline_at(fitted, x=None) -> float:
    """x^T xi, the shift of the non-diseased distribution at profile ``x``."""
    x = _profile(fitted, x)
    xi, _ = _gamma_xi(fitted)
    return float(x @ xi)


# --------------------------------------------------------------------------
# curve


def roc_eval(link, shift, p):
    """ROC(p) = 1 - F_Z(F_Z^{-1}(1 - p) - shift); exact at p = 0 and p = 1."""
    link = get_link(link)
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)) or np.any(np.isnan(p_arr)):
        raise ValueError("p must lie in [0, 1]")
    inner = np.clip(1.0 - p_arr, 1e-300, 1.0)
    interior = (p_arr > 0) & (p_arr < 1)
    q = link.quantile(np.where(interior, inner, 0.5))
    out = np.where(interior, link.sf(q - shift), p_arr)
    if np.ndim(shift) == 0 and shift == 0:
        # the chance diagonal, without quantile round-off
        out = p_arr.copy()
    return _finish(out, p)


@dataclass
class RocCurve:
    link: Link
    shift: float
    p: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.link = get_link(self.link)
        self.p = np.asarray(self.p, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.p.shape != self.values.shape:
            raise ValueError("p and values differ in shape")

    def to_dict(self):
        return {
            "link": self.link.name,
            "shift": self.shift,
            "p": self.p.tolist(),
            "roc": self.values.tolist(),
        }


def roc_curve(link, shift, p=None) -> RocCurve:
    p = DEFAULT_GRID if p is None else np.asarray(p, dtype=float)
    return RocCurve(get_link(link), float(shift), p, roc_eval(link, shift, p))


# --------------------------------------------------------------------------
# indices


def auc(link, shift):
    """Area under the ROC curve as a closed-form function of the shift."""
    link = get_link(link)
    d = np.asarray(shift, dtype=float)
    if link.name == "probit":
        out = special.ndtr(d / np.sqrt(2.0))
    elif link.name == "logit":
        a = np.abs(d)
        small = a < 1e-4
        safe = np.where(small, 1.0, a)
        e = np.exp(-safe)
        upper = (1.0 - e * (1.0 + safe)) / (-np.expm1(-safe)) ** 2
        series = 0.5 + a / 6.0 - a**3 / 180.0
        val = np.where(small, series, upper)
        out = np.where(d >= 0, val, 1.0 - val)
    elif link.name in ("cloglog", "loglog"):
        out = special.expit(d)
    else:  # pragma: no cover - links are closed over LINKS
        raise ValueError(f"no AUC formula for link {link.name!r}")
    return _finish(out, shift)


def youden(link, shift):
    """Youden index J, a function of |shift|."""
    link = get_link(link)
    a = np.abs(np.asarray(shift, dtype=float))
    if link.name == "probit":
        out = 1.0 - 2.0 * special.ndtr(-a / 2.0)
    elif link.name == "logit":
        out = 1.0 - 2.0 * special.expit(-a / 2.0)
    else:
        out = np.exp(-_x_over_expm1(a)) - np.exp(-_x_over_expm1(-a))
    return _finish(np.maximum(out, 0.0), shift)


def ovl(link, shift):
    """Overlap coefficient 1 - J."""
    j = youden(link, shift)
    return 1.0 - j


def threshold_transform(link, shift):
    """h(c*) - x^T xi: the optimal cut on the latent scale of the non-diseased group."""
    link = get_link(link)
    d = np.asarray(shift, dtype=float)
    if link.name in ("probit", "logit"):
        out = d / 2.0
    elif link.name == "cloglog":
        out = d - _log_expm1_over(d)
    else:
        out = _log_expm1_over(d)
    return _finish(out, shift)


def sens_spec_at_star(link, shift, warn=True):
    """(sensitivity, specificity) at the Youden-optimal threshold.

    For a negative shift lower values indicate disease; the pair is then
    reported for the test with reversed polarity (positive when the value is
    at or below c*), and a :class:`PolarityWarning` is issued.
    """
    link = get_link(link)
    d = np.asarray(shift, dtype=float)
    t = np.asarray(threshold_transform(link, d), dtype=float)
    reversed_ = d < 0
    if warn and np.any(reversed_):
        warnings.warn(
            "negative shift: lower test values indicate disease; indices refer to "
            "the test with reversed polarity",
            PolarityWarning,
            stacklevel=2,
        )
    sens = np.where(reversed_, link.cdf(t - d), link.sf(t - d))
    spec = np.where(reversed_, link.sf(t), link.cdf(t))
    return _finish(sens, shift), _finish(spec, shift)


def index_value(kind, link, shift, warn=False):
    """Index ``kind`` (anything but the threshold) as a function of the shift."""
    if kind == "auc":
        return auc(link, shift)
    if kind == "youden":
        return youden(link, shift)
    if kind == "ovl":
        return ovl(link, shift)
    if kind == "sens":
        return sens_spec_at_star(link, shift, warn=warn)[0]
    if kind == "spec":
        return sens_spec_at_star(link, shift, warn=warn)[1]
    if kind == "threshold":
        raise ValueError("the threshold depends on h; use optimal_threshold")
    raise ValueError(f"unknown index {kind!r}; expected one of {INDEX_KINDS}")


def optimal_threshold(fitted, x=None) -> float:
    """c* on the response scale: h^{-1}(x^T xi + t*(delta(x))).

    Raises :class:`transroc.exceptions.OutOfRangeError` when the cut falls
    outside the range of h on its support.
    """
    if fitted.spec.ordinal:
        raise TypeError("ordinal models have no continuous optimal threshold")
    t = baseline_at(fitted, x) + threshold_transform(fitted.spec.link, shift_at(fitted, x))
    return fitted.transformation().invert(t)


@dataclass
class IndexEstimate:
    kind: str
    point: float | None
    lower: float | None = None
    upper: float | None = None
    level: float | None = None
    method: str = "none"
    note: str | None = None

    def __post_init__(self):
        if self.kind not in INDEX_KINDS and self.kind != "delta":
            raise ValueError(f"unknown index kind {self.kind!r}")
        if self.method not in ("score", "delta", "simulate", "none"):
            raise ValueError(f"unknown interval method {self.method!r}")
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError("interval lower limit exceeds upper limit")

    def to_dict(self):
        return {
            "index": self.kind,
            "estimate": self.point,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "method": self.method,
            "note": self.note,
        }


# --------------------------------------------------------------------------
# ordinal tests


@dataclass
class OrdinalRocPoints:
    """Operating points of an ordinal test, one per category.

    Point k classifies a subject as diseased when the category is >= k, so
    the first point is (1, 1) and both coordinates decrease with k.
    """

    categories: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    shift: float

    def to_dict(self):
        return {
            "category": self.categories.tolist(),
            "fpr": self.fpr.tolist(),
            "tpr": self.tpr.tolist(),
            "shift": self.shift,
        }


def ordinal_roc_points(fitted, x=None) -> OrdinalRocPoints:
    if not fitted.spec.ordinal:
        raise TypeError("ordinal_roc_points needs a model fitted with an ordinal basis")
    link = fitted.spec.link
    base = baseline_at(fitted, x)
    shift = shift_at(fitted, x)
    cuts = np.asarray(fitted.params.theta, dtype=float)
    fpr = np.concatenate([[1.0], link.sf(cuts - base)])
    tpr = np.concatenate([[1.0], link.sf(cuts - base - shift)])
    k = fitted.spec.basis.n_categories
    return OrdinalRocPoints(np.arange(1, k + 1), fpr, tpr, shift)
