"""Censoring-aware likelihood of the shift transformation model.

The model is P(Y <= y | D = d, X = x) = F_Z(h(y) - mu_d(x)) with shift term

    mu_d(x) = delta * d + x^T xi + d * x^T gamma.

Parameters are stacked as theta = (beta, vartheta) with beta = (delta, xi,
gamma) and vartheta the coefficients of h.  Every observation contributes
either a density (exact response) or a probability of the censoring interval.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bernstein import BernsteinBasis, OrdinalBasis
from .exceptions import NonFiniteLikelihoodError, SingularInformationError
from .links import Link, _log1mexp_neg, get_link

__all__ = [
    "Observation",
    "Dataset",
    "ModelSpec",
    "ParameterVector",
    "LikelihoodDesign",
    "loglik_contribution",
    "loglik",
    "score",
    "observed_information",
    "schur_inverse_block",
]

# floor applied to probabilities before taking logs
_LOG_TINY = np.log(1e-300)


@dataclass(frozen=True)
class Observation:
    """One subject: response interval (lower, upper], disease status, covariates.

    ``lower == upper`` is an exact response, ``lower = -inf`` left censoring
    (e.g. below a limit of detection), ``upper = +inf`` right censoring.
    """

    lower: float
    upper: float
    disease: int
    covariates: tuple = ()

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if np.isnan(lo) or np.isnan(hi):
            raise ValueError("censoring bounds must not be NaN")
        if lo > hi:
            raise ValueError(f"lower bound {lo} exceeds upper bound {hi}")
        if lo == hi and not np.isfinite(lo):
            raise ValueError("an exact response must be finite")
        if self.disease not in (0, 1):
            raise ValueError(f"disease must be 0 or 1, got {self.disease!r}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "covariates", tuple(float(v) for v in self.covariates))

    @classmethod
    def exact(cls, y, disease, covariates=()):
        return cls(y, y, disease, covariates)

    @classmethod
    def left_censored(cls, upper, disease, covariates=()):
        return cls(-np.inf, upper, disease, covariates)

    @classmethod
    def right_censored(cls, lower, disease, covariates=()):
        return cls(lower, np.inf, disease, covariates)

    @classmethod
    def interval(cls, lower, upper, disease, covariates=()):
        if not lower < upper:
            raise ValueError("an interval-censored response needs lower < upper")
        return cls(lower, upper, disease, covariates)

    @property
    def kind(self):
        if self.lower == self.upper:
            return "exact"
        if self.lower == -np.inf:
            return "left"
        if self.upper == np.inf:
            return "right"
        return "interval"


@dataclass
class Dataset:
    """Column-oriented collection of observations."""

    lower: np.ndarray
    upper: np.ndarray
    disease: np.ndarray
    X: np.ndarray
    covariate_names: tuple = ()

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        self.disease = np.asarray(self.disease).ravel()
        n = self.lower.shape[0]
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(n, -1) if X.size else np.zeros((n, 0))
        self.X = X
        if not (self.upper.shape[0] == n == self.disease.shape[0] == X.shape[0]):
            raise ValueError("response, disease and covariates differ in length")
        if not np.all(np.isin(self.disease, (0, 1))):
            raise ValueError("disease indicator must be coded 0/1")
        self.disease = self.disease.astype(int)
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("censoring bounds must not be NaN (use -inf/inf)")
        if np.any(self.lower > self.upper):
            bad = np.flatnonzero(self.lower > self.upper)[:5]
            raise ValueError(f"lower bound exceeds upper bound in rows {bad.tolist()}")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        if not self.covariate_names:
            self.covariate_names = tuple(f"x{i}" for i in range(X.shape[1]))
        elif len(self.covariate_names) != X.shape[1]:
            raise ValueError("covariate_names does not match the number of columns of X")
        self.covariate_names = tuple(self.covariate_names)

    @classmethod
    def from_arrays(cls, y, disease, X=None, covariate_names=()):
        """``y`` is a vector of exact values or an (n, 2) array of bounds.

        In the two-column form NaN bounds are read as unbounded.
        """
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            lower = upper = y
            if not np.all(np.isfinite(y)):
                raise ValueError("exact responses must be finite")
        elif y.ndim == 2 and y.shape[1] == 2:
            lower = np.where(np.isnan(y[:, 0]), -np.inf, y[:, 0])
            upper = np.where(np.isnan(y[:, 1]), np.inf, y[:, 1])
        else:
            raise ValueError("y must be 1-D or have two columns (lower, upper)")
        n = lower.shape[0]
        X = np.zeros((n, 0)) if X is None else X
        return cls(lower, upper, disease, X, tuple(covariate_names))

    @classmethod
    def from_observations(cls, observations, covariate_names=()):
        observations = list(observations)
        if not observations:
            raise ValueError("no observations")
        p = len(observations[0].covariates)
        if any(len(o.covariates) != p for o in observations):
            raise ValueError("observations have differing numbers of covariates")
        return cls(
            [o.lower for o in observations],
            [o.upper for o in observations],
            [o.disease for o in observations],
            np.array([o.covariates for o in observations], dtype=float).reshape(len(observations), p),
            tuple(covariate_names),
        )

    def __len__(self):
        return self.lower.shape[0]

    @property
    def exact(self):
        return self.lower == self.upper

    @property
    def n_per_group(self):
        return (int(np.sum(self.disease == 0)), int(np.sum(self.disease == 1)))

    def finite_values(self):
        vals = np.concatenate([self.lower, self.upper])
        return vals[np.isfinite(vals)]

    def subset(self, index):
        return Dataset(
            self.lower[index], self.upper[index], self.disease[index], self.X[index],
            self.covariate_names,
        )

    def centered(self, x0):
        """Copy with covariates shifted so that ``x0`` becomes the origin."""
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        return Dataset(self.lower, self.upper, self.disease, self.X - x0, self.covariate_names)


@dataclass(frozen=True)
class ModelSpec:
    """Link, basis for h and the layout of the shift term."""

    link: Link
    basis: BernsteinBasis | OrdinalBasis
    covariates: tuple = ()
    interactions: bool = True

    def __post_init__(self):
        object.__setattr__(self, "link", get_link(self.link))
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @property
    def n_covariates(self):
        return len(self.covariates)

    @property
    def n_beta(self):
        p = self.n_covariates
        return 1 + p + (p if self.interactions else 0)

    @property
    def n_theta(self):
        return self.basis.n_coef

    @property
    def n_params(self):
        return self.n_beta + self.n_theta

    @property
    def ordinal(self):
        return isinstance(self.basis, OrdinalBasis)

    @property
    def beta_names(self):
        names = ["delta"] + [f"xi[{c}]" for c in self.covariates]
        if self.interactions:
            names += [f"gamma[{c}]" for c in self.covariates]
        return names

    def shift_design(self, disease, X):
        """Rows (d, x, d * x) such that mu = rows @ beta."""
        d = np.asarray(disease, dtype=float).reshape(-1, 1)
        X = np.asarray(X, dtype=float).reshape(d.shape[0], -1)
        if X.shape[1] != self.n_covariates:
            raise ValueError(
                f"expected {self.n_covariates} covariates, got {X.shape[1]}"
            )
        cols = [d, X]
        if self.interactions:
            cols.append(d * X)
        return np.hstack(cols)

    def to_dict(self):
        return {
            "link": self.link.name,
            "basis": self.basis.to_dict(),
            "covariates": list(self.covariates),
            "interactions": self.interactions,
        }

    @classmethod
    def from_dict(cls, d):
        b = d["basis"]
        if b["type"] == "ordinal":
            basis = OrdinalBasis(b["n_categories"])
        else:
            basis = BernsteinBasis(b["order"], tuple(b["support"]))
        return cls(d["link"], basis, tuple(d.get("covariates", ())), bool(d.get("interactions", True)))


@dataclass
class ParameterVector:
    beta: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))

    @property
    def vector(self):
        return np.concatenate([self.beta, self.theta])

    @property
    def delta(self):
        return float(self.beta[0])

    @classmethod
    def from_vector(cls, spec, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {vec.shape}")
        return cls(vec[: spec.n_beta], vec[spec.n_beta:])


def _as_vector(spec, params):
    if isinstance(params, ParameterVector):
        vec = params.vector
    else:
        vec = np.asarray(params, dtype=float)
    if vec.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got shape {vec.shape}")
    return vec


@dataclass
class _Block:
    # z = A @ theta for the relevant bound of each observation in the block
    index: np.ndarray
    A_up: np.ndarray | None = None
    A_lo: np.ndarray | None = None
    A_deriv: np.ndarray | None = None


class LikelihoodDesign:
    """Data and model specification compiled to dense design matrices.

    All likelihood quantities are functions of the stacked parameter vector
    theta = (beta, vartheta).
    """

    def __init__(self, spec: ModelSpec, data: Dataset):
        self.spec = spec
        self.data = data
        self.n = len(data)
        link = spec.link
        self.link = link
        m = spec.shift_design(data.disease, data.X)
        lo, hi = data.lower, data.upper
        exact = lo == hi
        left = ~exact & (lo == -np.inf) & np.isfinite(hi)
        right = ~exact & (hi == np.inf) & np.isfinite(lo)
        both = ~exact & np.isfinite(lo) & np.isfinite(hi)
        if spec.ordinal and np.any(exact):
            raise ValueError("ordinal models take interval-coded responses only")
        nb = spec.n_beta

        def rows(idx, y):
            return np.hstack([-m[idx], spec.basis.basis(y[idx])])

        self.exact = _Block(np.flatnonzero(exact))
        if self.exact.index.size:
            i = self.exact.index
            self.exact.A_up = rows(i, hi)
            self.exact.A_deriv = np.hstack([np.zeros((i.size, nb)), spec.basis.deriv(hi[i])])
        self.left = _Block(np.flatnonzero(left))
        if self.left.index.size:
            self.left.A_up = rows(self.left.index, hi)
        self.right = _Block(np.flatnonzero(right))
        if self.right.index.size:
            self.right.A_lo = rows(self.right.index, lo)
        self.interval = _Block(np.flatnonzero(both))
        if self.interval.index.size:
            self.interval.A_up = rows(self.interval.index, hi)
            self.interval.A_lo = rows(self.interval.index, lo)

    # -- contributions -------------------------------------------------------
    def contributions(self, theta):
        """Per-observation log-likelihood contributions (length n)."""
        out = np.zeros(self.n)
        link = self.link
        with np.errstate(all="ignore"):
            b = self.exact
            if b.index.size:
                hp = b.A_deriv @ theta
                out[b.index] = link.logpdf(b.A_up @ theta) + np.where(hp > 0, np.log(np.abs(hp)), -np.inf)
            b = self.left
            if b.index.size:
                out[b.index] = np.maximum(link.logcdf(b.A_up @ theta), _LOG_TINY)
            b = self.right
            if b.index.size:
                out[b.index] = np.maximum(link.logsf(b.A_lo @ theta), _LOG_TINY)
            b = self.interval
            if b.index.size:
                out[b.index] = self._interval_logp(b.A_lo @ theta, b.A_up @ theta)
        return out

    def _interval_logp(self, zl, zu):
        link = self.link
        use_sf = link.cdf(zl) > 0.5
        lcu, lcl = link.logcdf(zu), link.logcdf(zl)
        lsl, lsu = link.logsf(zl), link.logsf(zu)
        via_cdf = lcu + _log1mexp_neg(lcu - lcl)
        via_sf = lsl + _log1mexp_neg(lsl - lsu)
        logp = np.where(use_sf, via_sf, via_cdf)
        logp = np.where(zu > zl, logp, np.where(zu == zl, -np.inf, np.nan))
        return np.maximum(logp, _LOG_TINY)

    def loglik(self, theta):
        return float(np.sum(self.contributions(theta)))

    def evaluate(self, theta, hessian=False):
        """Log-likelihood, score and (optionally) analytic Hessian at ``theta``."""
        link = self.link
        k = theta.shape[0]
        ll = 0.0
        grad = np.zeros(k)
        hess = np.zeros((k, k)) if hessian else None
        with np.errstate(all="ignore"):
            b = self.exact
            if b.index.size:
                z = b.A_up @ theta
                hp = b.A_deriv @ theta
                ll += np.sum(link.logpdf(z)) + np.sum(np.where(hp > 0, np.log(np.abs(hp)), -np.inf))
                g1 = link.dlogpdf(z)
                inv_hp = 1.0 / hp
                grad += b.A_up.T @ g1 + b.A_deriv.T @ inv_hp
                if hessian:
                    hess += (b.A_up.T * link.d2logpdf(z)) @ b.A_up
                    hess -= (b.A_deriv.T * inv_hp**2) @ b.A_deriv
            b = self.left
            if b.index.size:
                zu = b.A_up @ theta
                lc = link.logcdf(zu)
                ll += np.sum(np.maximum(lc, _LOG_TINY))
                gu = np.exp(link.logpdf(zu) - np.maximum(lc, _LOG_TINY))
                grad += b.A_up.T @ gu
                if hessian:
                    hess += (b.A_up.T * (gu * link.dlogpdf(zu) - gu * gu)) @ b.A_up
            b = self.right
            if b.index.size:
                zl = b.A_lo @ theta
                ls = link.logsf(zl)
                ll += np.sum(np.maximum(ls, _LOG_TINY))
                gl = np.exp(link.logpdf(zl) - np.maximum(ls, _LOG_TINY))
                grad -= b.A_lo.T @ gl
                if hessian:
                    hess += (b.A_lo.T * (-gl * link.dlogpdf(zl) - gl * gl)) @ b.A_lo
            b = self.interval
            if b.index.size:
                zl = b.A_lo @ theta
                zu = b.A_up @ theta
                logp = self._interval_logp(zl, zu)
                ll += np.sum(logp)
                gu = np.exp(link.logpdf(zu) - logp)
                gl = np.exp(link.logpdf(zl) - logp)
                grad += b.A_up.T @ gu - b.A_lo.T @ gl
                if hessian:
                    huu = gu * link.dlogpdf(zu) - gu * gu
                    hll = -gl * link.dlogpdf(zl) - gl * gl
                    hul = gu * gl
                    hess += (b.A_up.T * huu) @ b.A_up + (b.A_lo.T * hll) @ b.A_lo
                    cross = (b.A_up.T * hul) @ b.A_lo
                    hess += cross + cross.T
        return float(ll), grad, hess

    def score(self, theta):
        return self.evaluate(theta)[1]

    def hessian(self, theta):
        return self.evaluate(theta, hessian=True)[2]

    def information(self, theta, method="fd"):
        """Observed information -d score / d theta.

        ``method="fd"`` differentiates the analytic score by central
        differences with step cbrt(eps) * (1 + |theta_i|); ``"analytic"``
        uses the closed-form Hessian.
        """
        theta = np.asarray(theta, dtype=float)
        if method == "analytic":
            info = -self.hessian(theta)
        elif method == "fd":
            k = theta.shape[0]
            info = np.empty((k, k))
            eps = np.cbrt(np.finfo(float).eps)
            for i in range(k):
                step = eps * (1.0 + abs(theta[i]))
                up = theta.copy()
                dn = theta.copy()
                up[i] += step
                dn[i] -= step
                info[:, i] = -(self.score(up) - self.score(dn)) / (2.0 * step)
        else:
            raise ValueError(f"unknown information method {method!r}")
        return 0.5 * (info + info.T)


def schur_inverse_block(info, n_target):
    """Leading ``n_target`` block of ``inv(info)`` via the Schur complement.

    Returns ``inv(I_tt - I_tn inv(I_nn) I_nt)``; raises
    :class:`SingularInformationError` when the nuisance block or the
    complement cannot be inverted reliably.
    """
    info = np.asarray(info, dtype=float)
    t = slice(0, n_target)
    r = slice(n_target, None)
    i_tt, i_tn, i_nn = info[t, t], info[t, r], info[r, r]
    if i_nn.size:
        if not np.all(np.isfinite(i_nn)) or np.linalg.cond(i_nn) > 1e14:
            raise SingularInformationError("nuisance block of the information is singular")
        comp = i_tt - i_tn @ np.linalg.solve(i_nn, i_tn.T)
    else:
        comp = i_tt
    comp = 0.5 * (comp + comp.T)
    if not np.all(np.isfinite(comp)) or np.linalg.cond(comp) > 1e14:
        raise SingularInformationError("Schur complement of the information is singular")
    out = np.linalg.inv(comp)
    return 0.5 * (out + out.T)


def _design(spec, data):
    if isinstance(data, LikelihoodDesign):
        return data
    if not isinstance(data, Dataset):
        data = Dataset.from_observations(data, spec.covariates)
    return LikelihoodDesign(spec, data)


def loglik_contribution(spec, params, obs):
    """Log-likelihood contribution of a single :class:`Observation`."""
    design = _design(spec, [obs])
    value = design.contributions(_as_vector(spec, params))[0]
    if not np.isfinite(value):
        raise NonFiniteLikelihoodError("likelihood contribution is not finite")
    return float(value)


def loglik(spec, params, data):
    value = _design(spec, data).loglik(_as_vector(spec, params))
    if not np.isfinite(value):
        raise NonFiniteLikelihoodError("log-likelihood is not finite")
    return value


def score(spec, params, data):
    """Analytic gradient of the log-likelihood, ordered (beta, vartheta)."""
    ll, grad, _ = _design(spec, data).evaluate(_as_vector(spec, params))
    if not np.isfinite(ll):
        raise NonFiniteLikelihoodError("log-likelihood is not finite")
    return grad


def observed_information(spec, params, data, method="fd"):
    design = _design(spec, data)
    vec = _as_vector(spec, params)
    info = design.information(vec, method=method)
    if not np.all(np.isfinite(info)):
        raise NonFiniteLikelihoodError("observed information is not finite")
    nb = spec.n_beta
    i_nn = info[nb:, nb:]
    if np.linalg.cond(i_nn) > 1e14:
        raise SingularInformationError("the vartheta block of the information is singular")
    return info
