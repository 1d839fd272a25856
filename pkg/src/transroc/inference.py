"""Confidence intervals for the shift parameter and the indices derived from it.

Three constructions are offered:

* score intervals, obtained by inverting the Rao score test of
  H0: delta = delta0 over a profile of restricted fits;
* Wald intervals for smooth functions of beta via the delta method;
* intervals from the empirical quantiles of G(beta*) with beta* drawn from the
  estimated asymptotic normal law of the MLE.

Score intervals for delta map to any index that is monotone in delta on each
side of zero by evaluating the index at the interval limits.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from . import rocmetrics as rm
from .exceptions import (
    MultimodalWarning,
    OutOfRangeError,
    SingularInformationError,
    UnboundedIntervalWarning,
)
from .fit import FitOptions, FittedModel, fit_mle, fit_restricted
from .model import Dataset, LikelihoodDesign, ModelSpec, schur_inverse_block

__all__ = [
    "IntervalEstimate",
    "SimCiConfig",
    "RocBand",
    "critical_value",
    "score_statistic",
    "score_ci",
    "transform_interval",
    "uniform_roc_band",
    "simulated_roc_band",
    "delta_method_ci",
    "simulate_ci",
    "active_set_covariance",
    "hypothesis_test_delta_zero",
    "index_interval",
    "probit_auc_gradient",
]

_MAX_SE = 20.0
_SHIFT_CLIP = 500.0


@dataclass
class IntervalEstimate:
    target: str
    point: float
    lower: float
    upper: float
    level: float
    method: str
    note: str | None = None

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if self.lower > self.upper:
            raise ValueError(f"lower limit {self.lower} exceeds upper limit {self.upper}")

    @property
    def bounded(self):
        return bool(np.isfinite(self.lower) and np.isfinite(self.upper))

    def contains(self, value):
        return bool(self.lower <= value <= self.upper)

    def to_dict(self):
        def num(v):
            return None if v is None or not np.isfinite(v) else float(v)

        return {
            "target": self.target,
            "estimate": num(self.point),
            "lower": num(self.lower),
            "upper": num(self.upper),
            "level": self.level,
            "method": self.method,
            "note": self.note,
        }


@dataclass(frozen=True)
class SimCiConfig:
    B: int = 1000
    seed: int | None = None

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 100:
            raise ValueError(f"B must be an integer >= 100, got {self.B!r}")


def critical_value(level):
    """(1 - level) upper quantile of chi^2_1, computed as Phi^{-1}(1 - alpha/2)^2."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    return float(special.ndtri(0.5 + 0.5 * level) ** 2)


# --------------------------------------------------------------------------
# score statistic and interval


def _prepare(spec, data, x):
    if isinstance(data, LikelihoodDesign):
        data = data.data
    if not isinstance(data, Dataset):
        data = Dataset.from_observations(data, spec.covariates)
    if x is not None:
        x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        if x.shape[0] != spec.n_covariates:
            raise rm.DimensionMismatchError(
                f"covariate profile has {x.shape[0]} entries, the model has "
                f"{spec.n_covariates} covariates"
            )
        data = data.centered(x)
    return LikelihoodDesign(spec, data)


def _rao(restricted):
    info = restricted.information
    a_dd = schur_inverse_block(info, 1)[0, 0]
    return float(restricted.score[0] ** 2 * a_dd)


class _Profile:
    """Restricted fits along delta0, each warm started from the nearest one done."""

    def __init__(self, design, fitted, options):
        self.design = design
        self.options = options
        self.spec = design.spec
        self.cache = {fitted.delta: fitted.start_vector}

    def restricted(self, delta0):
        near = min(self.cache, key=lambda d: abs(d - delta0))
        fit = fit_restricted(
            self.spec, self.design, delta0, self.options,
            start=self.cache[near], information="analytic",
        )
        if fit.converged:
            self.cache[float(delta0)] = fit.start_vector
        return fit

    def statistic(self, delta0):
        return _rao(self.restricted(delta0))


def score_statistic(spec: ModelSpec, data, delta0: float, x=None,
                    options: FitOptions | None = None, start=None) -> float:
    """Rao statistic R(delta0) = S_delta^2 * A_delta,delta at the restricted MLE.

    A_delta,delta is the inverse of the Schur complement of the nuisance block
    of the observed information.  With a covariate profile ``x`` the tested
    quantity is delta(x) = delta + x^T gamma.
    """
    design = _prepare(spec, data, x)
    fit = fit_restricted(spec, design, delta0, options, start=start, information="fd")
    return _rao(fit)


def _bracket_side(profile, delta_hat, se, crit, sign):
    """Step outward until R exceeds ``crit``; return the bracketing pair or None."""
    inner = delta_hat
    mult = np.sqrt(crit)
    while mult <= _MAX_SE + 1e-12:
        outer = delta_hat + sign * mult * se
        if profile.statistic(outer) >= crit:
            return inner, outer
        inner = outer
        mult = min(mult * 1.35, _MAX_SE) if mult < _MAX_SE else np.inf
    return None


def _scan(profile, delta_hat, se, crit, n_grid=41):
    grid = delta_hat + np.linspace(-_MAX_SE, _MAX_SE, n_grid) * se
    values = np.array([profile.statistic(d) for d in grid])
    above = values >= crit
    crossings = int(np.sum(above[1:] != above[:-1]))
    return grid, values, crossings


def score_ci(spec: ModelSpec, data, level=0.95, x=None, fitted: FittedModel | None = None,
             options: FitOptions | None = None, scan=False, xtol=1e-7) -> IntervalEstimate:
    """Invert the score test: {delta0 : R(delta0) < chi^2_1(level)}.

    The search steps outward from the MLE in multiples of the Wald standard
    error and refines each crossing with Brent's method.  Without a crossing
    within 20 standard errors the limit is infinite and an
    :class:`UnboundedIntervalWarning` is issued.  ``scan=True`` also evaluates
    R on a 41-point grid; with more than two crossings the widest bracketing
    pair is used and a :class:`MultimodalWarning` is issued.
    """
    options = options or FitOptions()
    design = _prepare(spec, data, x)
    if fitted is None or x is not None:
        fitted = fit_mle(spec, design, options)
    if fitted.vcov_beta is None:
        raise SingularInformationError("no variance estimate for delta at the MLE")
    delta_hat = fitted.delta
    se = float(np.sqrt(fitted.vcov_beta[0, 0]))
    crit = critical_value(level)
    profile = _Profile(design, fitted, options)

    def f(d):
        return profile.statistic(d) - crit

    limits = []
    open_sides = []
    for sign in (-1.0, 1.0):
        pair = _bracket_side(profile, delta_hat, se, crit, sign)
        if pair is None:
            limits.append(sign * np.inf)
            open_sides.append("lower" if sign < 0 else "upper")
            continue
        a, b = sorted(pair)
        limits.append(optimize.brentq(f, a, b, xtol=xtol))
    note = None
    if open_sides:
        note = f"no crossing within {_MAX_SE:g} standard errors ({', '.join(open_sides)} side)"
        warnings.warn(f"score interval is unbounded: {note}", UnboundedIntervalWarning, stacklevel=2)
    if scan:
        grid, values, crossings = _scan(profile, delta_hat, se, crit)
        if crossings > 2:
            above = values >= crit
            idx = np.flatnonzero(above[1:] != above[:-1])
            lo_pair = grid[idx[0]], grid[idx[0] + 1]
            hi_pair = grid[idx[-1]], grid[idx[-1] + 1]
            if lo_pair[1] <= delta_hat:
                limits[0] = min(limits[0], optimize.brentq(f, *lo_pair, xtol=xtol))
            if hi_pair[0] >= delta_hat:
                limits[1] = max(limits[1], optimize.brentq(f, *hi_pair, xtol=xtol))
            note = f"score statistic crosses the critical value {crossings} times"
            warnings.warn(note, MultimodalWarning, stacklevel=2)
    target = "delta" if x is None else "delta(x)"
    return IntervalEstimate(target, delta_hat, limits[0], limits[1], level, "score", note)


def hypothesis_test_delta_zero(spec: ModelSpec, data, x=None, options=None):
    """Score test of delta = 0; returns (R(0), p-value)."""
    r = score_statistic(spec, data, 0.0, x=x, options=options)
    return r, float(1.0 - (2.0 * special.ndtr(np.sqrt(r)) - 1.0))


# --------------------------------------------------------------------------
# mapping intervals through index functions


def transform_interval(interval: IntervalEstimate, G, target=None) -> IntervalEstimate:
    """Image of a delta interval under ``G``, monotone on each side of zero.

    Monotone G gives (G(l), G(u)).  For an index of |delta| such as the
    Youden index an interval that straddles zero has lower limit G(0) and
    upper limit G(max(|l|, |u|)).  Both cases are the range of G over the
    candidates l, u and (when straddled) zero from either side.
    """
    lo = float(np.clip(interval.lower, -_SHIFT_CLIP, _SHIFT_CLIP))
    hi = float(np.clip(interval.upper, -_SHIFT_CLIP, _SHIFT_CLIP))
    pt = float(np.clip(interval.point, -_SHIFT_CLIP, _SHIFT_CLIP))
    cands = [lo, hi]
    if lo < 0 < hi or lo == 0 or hi == 0:
        cands += [0.0, -1e-12]
    values = np.array([float(G(c)) for c in cands])
    return IntervalEstimate(
        target or interval.target, float(G(pt)), float(values.min()), float(values.max()),
        interval.level, interval.method, interval.note,
    )


@dataclass
class RocBand:
    p: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    method: str

    def to_dict(self):
        return {
            "p": self.p.tolist(),
            "roc": self.estimate.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "level": self.level,
            "method": self.method,
        }


def uniform_roc_band(link, interval: IntervalEstimate, p=None) -> RocBand:
    """ROC curves at the two limits of a delta interval.

    ROC(p) increases with delta for every p, so the band holds the whole
    curve exactly when delta lies in the interval.
    """
    p = rm.DEFAULT_GRID if p is None else np.asarray(p, dtype=float)
    lo = float(np.clip(interval.lower, -_SHIFT_CLIP, _SHIFT_CLIP))
    hi = float(np.clip(interval.upper, -_SHIFT_CLIP, _SHIFT_CLIP))
    return RocBand(
        p,
        np.asarray(rm.roc_eval(link, interval.point, p)),
        np.asarray(rm.roc_eval(link, lo, p)),
        np.asarray(rm.roc_eval(link, hi, p)),
        interval.level,
        interval.method,
    )


def simulated_roc_band(fitted: FittedModel, x=None, p=None, config=None, level=0.95) -> RocBand:
    """Pointwise type-7 quantile band of ROC(p) over draws of beta."""
    config = config or SimCiConfig()
    if fitted.vcov_beta is None:
        raise SingularInformationError("no variance estimate for beta at the MLE")
    p = rm.DEFAULT_GRID if p is None else np.asarray(p, dtype=float)
    link = fitted.spec.link
    cs = _shift_contrast(fitted.spec, x)
    point = rm.shift_at(fitted, x)
    draws = _draws(fitted.beta, fitted.vcov_beta, config)
    est = np.asarray(rm.roc_eval(link, point, p))
    if draws is None:
        return RocBand(p, est, est.copy(), est.copy(), level, "simulate")
    shifts = draws @ cs
    curves = np.array([rm.roc_eval(link, s, p) for s in shifts])
    alpha = 1.0 - level
    lo, hi = np.quantile(curves, [alpha / 2, 1 - alpha / 2], axis=0, method="linear")
    return RocBand(p, est, np.minimum(lo, est), np.maximum(hi, est), level, "simulate")


# --------------------------------------------------------------------------
# delta method and simulation


def probit_auc_gradient(beta, spec: ModelSpec, x=None):
    """Gradient of Phi((delta + x^T gamma) / sqrt 2) with respect to beta."""
    beta = np.asarray(beta, dtype=float)
    p = spec.n_covariates
    x = np.zeros(p) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    gamma = beta[1 + p: 1 + 2 * p] if spec.interactions else np.zeros(p)
    c = np.exp(-0.25 * (beta[0] + x @ gamma) ** 2) / np.sqrt(2.0 * np.pi)
    grad = np.zeros_like(beta)
    grad[0] = c / np.sqrt(2.0)
    if spec.interactions:
        grad[1 + p: 1 + 2 * p] = x * c / np.sqrt(2.0)
    return grad


def _numeric_gradient(G, beta):
    beta = np.asarray(beta, dtype=float)
    grad = np.empty_like(beta)
    eps = np.cbrt(np.finfo(float).eps)
    for i in range(beta.shape[0]):
        step = eps * (1.0 + abs(beta[i]))
        up = beta.copy()
        dn = beta.copy()
        up[i] += step
        dn[i] -= step
        grad[i] = (G(up) - G(dn)) / (2.0 * step)
    return grad


def delta_method_ci(fitted: FittedModel, G, grad=None, level=0.95, target="G(beta)",
                    bounds=None) -> IntervalEstimate:
    """G(beta_hat) -/+ z * sqrt(grad^T A_beta,beta grad).

    ``grad`` is a callable returning the gradient of G; central differences are
    used when it is omitted.  ``bounds`` optionally clips the limits to the
    range of G.
    """
    if fitted.vcov_beta is None:
        raise SingularInformationError("no variance estimate for beta at the MLE")
    beta = fitted.beta
    g = grad(beta) if grad is not None else _numeric_gradient(G, beta)
    var = float(g @ fitted.vcov_beta @ g)
    half = special.ndtri(0.5 + 0.5 * level) * np.sqrt(max(var, 0.0))
    point = float(G(beta))
    lo, hi = point - half, point + half
    if bounds is not None:
        lo, hi = max(lo, bounds[0]), min(hi, bounds[1])
    return IntervalEstimate(target, point, lo, hi, level, "delta")


def mvn_factor(cov):
    """A with A A^T = cov: Cholesky, or the eigen-factor with negative
    eigenvalues clipped when cov is only positive semidefinite."""
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def active_set_covariance(fitted: FittedModel, rtol=1e-6):
    """Inverse information of (beta, vartheta) with tied Bernstein coefficients merged.

    Increments below ``rtol`` times the range of vartheta are treated as
    active monotonicity constraints: each run of tied coefficients shares one
    parameter, and the covariance is P (P^T I P)^{-1} P^T.  Without this the
    unconstrained inverse assigns huge variances to coefficients of flat,
    data-poor stretches of h.
    """
    info = fitted.information
    if info is None:
        raise SingularInformationError("no information matrix stored with the fit")
    nb = fitted.spec.n_beta
    theta = np.asarray(fitted.theta, dtype=float)
    span = max(theta[-1] - theta[0], 1.0) if theta.size > 1 else 1.0
    group = np.r_[0, np.cumsum(np.diff(theta) > rtol * span)]
    P = np.zeros((info.shape[0], nb + group[-1] + 1))
    P[np.arange(nb), np.arange(nb)] = 1.0
    P[nb + np.arange(theta.size), nb + group] = 1.0
    try:
        reduced = np.linalg.inv(P.T @ info @ P)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError(str(exc)) from None
    return P @ reduced @ P.T


def _draws(mean, cov, config):
    rng = np.random.default_rng(config.seed)
    if not np.any(cov):
        return None
    factor = mvn_factor(cov)
    z = rng.standard_normal((config.B, mean.shape[0]))
    return mean + z @ factor.T


def simulate_ci(fitted: FittedModel, G, config: SimCiConfig | None = None, level=0.95,
                target="G(beta)", vectorized=False, block="beta") -> IntervalEstimate:
    """Type-7 empirical quantiles of G over draws from the asymptotic normal law.

    ``block="beta"`` draws beta from N(beta_hat, A_beta,beta); ``block="all"``
    draws the full (beta, vartheta) vector from N(theta_hat, I^{-1}), with
    tied coefficients moving together (see :func:`active_set_covariance`).  With
    ``vectorized=True`` G receives the (B, k) array of draws at once.
    A zero covariance yields the point interval.
    """
    config = config or SimCiConfig()
    if block == "beta":
        if fitted.vcov_beta is None:
            raise SingularInformationError("no variance estimate for beta at the MLE")
        mean, cov = fitted.beta, fitted.vcov_beta
    elif block == "all":
        if fitted.information is None:
            raise SingularInformationError("no information matrix stored with the fit")
        mean = fitted.params.vector
        cov = active_set_covariance(fitted)
    else:
        raise ValueError(f"unknown block {block!r}")
    point = float(G(mean[None, :])[0]) if vectorized else float(G(mean))
    draws = _draws(np.asarray(mean, dtype=float), np.asarray(cov, dtype=float), config)
    if draws is None:
        return IntervalEstimate(target, point, point, point, level, "simulate",
                                "zero covariance: point interval")
    values = G(draws) if vectorized else np.array([G(row) for row in draws])
    values = np.asarray(values, dtype=float)
    alpha = 1.0 - level
    lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0], method="linear")
    return IntervalEstimate(target, point, float(min(lo, point)), float(max(hi, point)),
                            level, "simulate")


# --------------------------------------------------------------------------
# convenience: an index of a fitted model with an interval


def _shift_contrast(spec, x):
    p = spec.n_covariates
    c = np.zeros(spec.n_beta)
    c[0] = 1.0
    if spec.interactions and p:
        c[1 + p: 1 + 2 * p] = np.zeros(p) if x is None else np.asarray(x, dtype=float)
    return c


def _baseline_contrast(spec, x):
    p = spec.n_covariates
    c = np.zeros(spec.n_beta)
    if p and x is not None:
        c[1: 1 + p] = np.asarray(x, dtype=float)
    return c


def _threshold_G(fitted, x):
    from .bernstein import TransformationFunction

    spec = fitted.spec
    link = spec.link
    nb = spec.n_beta
    cs = _shift_contrast(spec, x)
    cb = _baseline_contrast(spec, x)

    def G(theta):
        theta = np.asarray(theta, dtype=float)
        coef = np.sort(theta[nb:])
        h = TransformationFunction(spec.basis, coef)
        t = float(theta[:nb] @ cb + rm.threshold_transform(link, float(theta[:nb] @ cs)))
        lo, hi = spec.basis.support
        return h.invert(float(np.clip(t, h.eval(lo), h.eval(hi))))

    return G


def index_interval(fitted: FittedModel, kind: str, method="score", level=0.95, x=None,
                   data=None, config: SimCiConfig | None = None,
                   delta_interval: IntervalEstimate | None = None) -> rm.IndexEstimate:
    """Point estimate and interval for index ``kind`` at covariate profile ``x``.

    ``method`` is "score" (needs ``data`` unless ``delta_interval`` is given),
    "delta" or "simulate".  Thresholds support "simulate" and "delta"; both
    account for the uncertainty in h.
    """
    spec = fitted.spec
    link = spec.link
    if x is not None:
        rm._profile(fitted, x)
    shift = rm.shift_at(fitted, x)
    note = None
    if kind == "threshold":
        try:
            point = rm.optimal_threshold(fitted, x)
        except OutOfRangeError as exc:
            return rm.IndexEstimate(kind, None, method=method, level=level, note=str(exc))
        if method == "score":
            raise ValueError("score intervals are not available for the threshold; "
                             "use 'simulate' or 'delta'")
        G = _threshold_G(fitted, x)
        if method == "simulate":
            est = simulate_ci(fitted, G, config, level, target=kind, block="all")
        else:
            theta = fitted.params.vector
            g = _numeric_gradient(G, theta)
            var = float(g @ active_set_covariance(fitted) @ g)
            half = special.ndtri(0.5 + 0.5 * level) * np.sqrt(max(var, 0.0))
            est = IntervalEstimate(kind, point, point - half, point + half, level, "delta")
        return rm.IndexEstimate(kind, point, est.lower, est.upper, level, est.method, est.note)

    if kind == "delta":
        def Gs(d):
            return d
        bounds = None
    else:
        def Gs(d):
            return rm.index_value(kind, link, d)
        bounds = (0.0, 1.0)
    point = float(Gs(shift))
    if shift < 0 and kind in ("youden", "ovl", "sens", "spec"):
        note = "negative shift: test polarity reversed"
    cs = _shift_contrast(spec, x)
    if method == "score":
        if delta_interval is None:
            if data is None:
                raise ValueError("score intervals need the data the model was fitted to")
            delta_interval = score_ci(spec, data, level, x=x,
                                      fitted=fitted if x is None else None)
        est = transform_interval(delta_interval, Gs, target=kind)
    elif method == "delta":
        if kind == "auc" and link.name == "probit":
            grad = lambda b: probit_auc_gradient(b, spec, x)  # noqa: E731
        else:
            grad = None
        est = delta_method_ci(fitted, lambda b: Gs(float(b @ cs)), grad, level,
                              target=kind, bounds=bounds)
    elif method == "simulate":
        def Gv(draws):
            return np.asarray(Gs(np.asarray(draws) @ cs), dtype=float)
        est = simulate_ci(fitted, Gv, config, level, target=kind, vectorized=True)
    else:
        raise ValueError(f"unknown interval method {method!r}")
    return rm.IndexEstimate(kind, point, est.lower, est.upper, level, est.method,
                            note or est.note)
