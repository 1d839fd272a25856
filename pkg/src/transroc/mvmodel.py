"""Joint probit transformation model for correlated test results.

Each test j has its own monotone transformation h_j and shift term mu_j.  The
vector z = (h_j(y_j) - mu_j(d, x))_j is multivariate normal with covariance
Sigma = Lambda^{-1} Lambda^{-T}, where Lambda is unit lower triangular with
free entries lambda (row-major order below the diagonal).  Because
det(Lambda) = 1 the log-likelihood is

    sum_j log phi((Lambda z)_j) + sum_j log h_j'(y_j).

Marginally test j follows a probit model with standardised shift
delta_j(x) / sqrt(Sigma_jj), which feeds the closed-form ROC indices.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import rocmetrics as rm
from .exceptions import SingularInformationError
from .fit import FitOptions, fit_mle
from .inference import IntervalEstimate, SimCiConfig, mvn_factor
from .links import PROBIT
from .model import Dataset, LikelihoodDesign, ModelSpec, ParameterVector

__all__ = [
    "JointSpec",
    "JointData",
    "JointParams",
    "JointFittedModel",
    "Comparison",
    "lambda_matrix",
    "sigma_from_lambda",
    "joint_loglik",
    "joint_loglik_grad",
    "fit_joint",
    "marginal_roc_param",
    "compare_tests",
]

_LAMBDA_BOUND = 100.0
_MIN_INCREMENT = 1e-8


@dataclass(frozen=True)
class JointSpec:
    names: tuple
    specs: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "specs", tuple(self.specs))
        if len(self.names) != len(self.specs) or len(self.specs) < 2:
            raise ValueError("a joint model needs at least two tests, one spec per name")
        if any(s.link != PROBIT for s in self.specs):
            raise ValueError("joint models support the probit link only")
        if any(s.ordinal for s in self.specs):
            raise ValueError("joint models need continuous (Bernstein) transformations")
        cov = self.specs[0].covariates
        if any(s.covariates != cov for s in self.specs):
            raise ValueError("all tests must share the same covariates")

    @property
    def n_tests(self):
        return len(self.specs)

    @property
    def n_lambda(self):
        j = self.n_tests
        return j * (j - 1) // 2

    @property
    def sizes(self):
        return [s.n_params for s in self.specs]

    @property
    def n_params(self):
        return sum(self.sizes) + self.n_lambda

    def index(self, j):
        """Position of test ``j`` given as an integer or a name."""
        if isinstance(j, str):
            if j not in self.names:
                raise IndexError(f"no test named {j!r}")
            return self.names.index(j)
        j = int(j)
        if not 0 <= j < self.n_tests:
            raise IndexError(f"test index {j} out of range 0..{self.n_tests - 1}")
        return j

    def to_dict(self):
        return {"names": list(self.names), "specs": [s.to_dict() for s in self.specs]}


@dataclass
class JointData:
    """Exact responses of J tests on the same subjects."""

    Y: np.ndarray
    disease: np.ndarray
    X: np.ndarray | None = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim != 2:
            raise ValueError("Y must be an (n, J) array")
        if not np.all(np.isfinite(self.Y)):
            raise ValueError("joint models take exact (finite) responses only")
        n = self.Y.shape[0]
        self.X = np.zeros((n, 0)) if self.X is None else np.asarray(self.X, dtype=float).reshape(n, -1)
        self.disease = np.asarray(self.disease).ravel()

    def marginal(self, j):
        return Dataset.from_arrays(self.Y[:, j], self.disease, self.X)

    @property
    def n_per_group(self):
        d = self.disease
        return (int(np.sum(d == 0)), int(np.sum(d == 1)))


@dataclass
class JointParams:
    thetas: list
    lam: np.ndarray

    def __post_init__(self):
        self.thetas = [np.asarray(t, dtype=float) for t in self.thetas]
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))

    @property
    def vector(self):
        return np.concatenate(self.thetas + [self.lam])

    @classmethod
    def from_vector(cls, spec: JointSpec, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {vec.shape}")
        out, pos = [], 0
        for k in spec.sizes:
            out.append(vec[pos: pos + k])
            pos += k
        return cls(out, vec[pos:])


def lambda_matrix(lam, n_tests):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    out = np.eye(n_tests)
    rows, cols = np.tril_indices(n_tests, -1)
    out[rows, cols] = lam
    return out


def sigma_from_lambda(lam, n_tests):
    inv = np.linalg.inv(lambda_matrix(lam, n_tests))
    return inv @ inv.T


class _JointDesign:
    def __init__(self, spec: JointSpec, data: JointData):
        if data.Y.shape[1] != spec.n_tests:
            raise ValueError(f"expected {spec.n_tests} response columns, got {data.Y.shape[1]}")
        self.spec = spec
        self.data = data
        self.margins = [LikelihoodDesign(s, data.marginal(j)) for j, s in enumerate(spec.specs)]
        self.rows, self.cols = np.tril_indices(spec.n_tests, -1)

    def evaluate(self, vec):
        spec = self.spec
        p = JointParams.from_vector(spec, vec)
        lam_m = lambda_matrix(p.lam, spec.n_tests)
        Z = np.column_stack([m.exact.A_up @ t for m, t in zip(self.margins, p.thetas)])
        HP = np.column_stack([m.exact.A_deriv @ t for m, t in zip(self.margins, p.thetas)])
        if np.any(HP <= 0):
            return -np.inf, np.zeros_like(vec)
        W = Z @ lam_m.T
        n = Z.shape[0]
        ll = -0.5 * np.sum(W * W) - 0.5 * n * spec.n_tests * np.log(2 * np.pi) + np.sum(np.log(HP))
        G = -W @ lam_m
        grads = [
            m.exact.A_up.T @ G[:, j] + m.exact.A_deriv.T @ (1.0 / HP[:, j])
            for j, m in enumerate(self.margins)
        ]
        g_lam = -np.einsum("ij,ij->j", W[:, self.rows], Z[:, self.cols])
        return float(ll), np.concatenate(grads + [g_lam])

    def residuals(self, vec):
        p = JointParams.from_vector(self.spec, vec)
        return np.column_stack([m.exact.A_up @ t for m, t in zip(self.margins, p.thetas)])


def joint_loglik(spec: JointSpec, params, data: JointData) -> float:
    vec = params.vector if isinstance(params, JointParams) else np.asarray(params, dtype=float)
    return _JointDesign(spec, data).evaluate(vec)[0]


def joint_loglik_grad(spec: JointSpec, params, data: JointData):
    vec = params.vector if isinstance(params, JointParams) else np.asarray(params, dtype=float)
    return _JointDesign(spec, data).evaluate(vec)[1]


@dataclass
class JointFittedModel:
    spec: JointSpec
    params: JointParams
    loglik: float
    information: np.ndarray | None
    vcov: np.ndarray | None
    converged: bool
    n_iter: int
    n_per_group: tuple
    notes: list = field(default_factory=list)

    @property
    def lam(self):
        return self.params.lam

    @property
    def Lambda(self):
        return lambda_matrix(self.lam, self.spec.n_tests)

    @property
    def Sigma(self):
        return sigma_from_lambda(self.lam, self.spec.n_tests)

    @property
    def scales(self):
        """Marginal latent standard deviations sqrt(Sigma_jj); the first is 1."""
        return np.sqrt(np.diag(self.Sigma))

    @property
    def correlation(self):
        s = self.Sigma
        d = np.sqrt(np.diag(s))
        return s / np.outer(d, d)

    @property
    def at_bound(self):
        return bool(np.any(np.abs(self.lam) >= _LAMBDA_BOUND * (1 - 1e-6)))

    def marginal_params(self, j):
        j = self.spec.index(j)
        s = self.spec.specs[j]
        t = self.params.thetas[j]
        return ParameterVector(t[: s.n_beta], t[s.n_beta:])

    def lambda_se(self):
        if self.vcov is None:
            return None
        k = self.spec.n_lambda
        return np.sqrt(np.clip(np.diag(self.vcov)[-k:], 0, None))

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "thetas": [t.tolist() for t in self.params.thetas],
            "lambda": self.lam.tolist(),
            "Sigma": self.Sigma.tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.n_iter,
            "n_per_group": list(self.n_per_group),
            "notes": list(self.notes),
        }


def _pack(spec, thetas, lam):
    # (beta, theta_0, increments) per test, then lambda
    parts = []
    for s, t in zip(spec.specs, thetas):
        nb = s.n_beta
        parts += [t[: nb + 1], np.maximum(np.diff(t[nb:]), _MIN_INCREMENT)]
    parts.append(np.asarray(lam, dtype=float))
    return np.concatenate(parts)


def _unpack_jacobian(spec):
    """Linear map u -> vec (original coordinates); vec = T @ u."""
    n = spec.n_params
    T = np.zeros((n, n))
    pos = 0
    for s in spec.specs:
        nb, k = s.n_beta, s.n_theta
        T[pos: pos + nb, pos: pos + nb] = np.eye(nb)
        T[pos + nb: pos + nb + k, pos + nb: pos + nb + k] = np.tril(np.ones((k, k)))
        pos += nb + k
    T[pos:, pos:] = np.eye(spec.n_lambda)
    return T


def _bounds(spec):
    out = []
    for s in spec.specs:
        out += [(None, None)] * (s.n_beta + 1) + [(_MIN_INCREMENT, None)] * (s.n_theta - 1)
    out += [(-_LAMBDA_BOUND, _LAMBDA_BOUND)] * spec.n_lambda
    return out


def _initial(spec, design, options):
    thetas = []
    for s, m in zip(spec.specs, design.margins):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                fit = fit_mle(s, m, options)
            except Exception as exc:  # partial fits are fine as a start
                fit = getattr(exc, "result", None)
                if fit is None:
                    raise
        thetas.append(fit.params.vector)
    Z = np.column_stack([m.exact.A_up @ t for m, t in zip(design.margins, thetas)])
    R = np.corrcoef(Z, rowvar=False)
    R = 0.99 * R + 0.01 * np.eye(R.shape[0])
    L = np.linalg.cholesky(R)
    S = np.diag(1.0 / np.diag(L))
    lam_m = np.linalg.inv(S @ L)
    rows, cols = np.tril_indices(spec.n_tests, -1)
    lam = np.clip(lam_m[rows, cols], -_LAMBDA_BOUND / 2, _LAMBDA_BOUND / 2)
    scales = np.diag(S)
    thetas = [t * sc for t, sc in zip(thetas, scales)]
    return thetas, lam


def _fd_information(design, vec):
    k = vec.shape[0]
    info = np.empty((k, k))
    eps = np.cbrt(np.finfo(float).eps)
    for i in range(k):
        step = eps * (1.0 + abs(vec[i]))
        up, dn = vec.copy(), vec.copy()
        up[i] += step
        dn[i] -= step
        info[:, i] = -(design.evaluate(up)[1] - design.evaluate(dn)[1]) / (2 * step)
    return 0.5 * (info + info.T)


def fit_joint(spec: JointSpec, data: JointData, options: FitOptions | None = None) -> JointFittedModel:
    """Maximum likelihood over all marginal parameters and lambda.

    Marginal parameters start from separate univariate probit fits and lambda
    from their residual correlation.  lambda is confined to [-100, 100]; a
    fit on that bound (e.g. two identical columns) is flagged in ``notes``.
    """
    options = options or FitOptions()
    n0, n1 = data.n_per_group
    if n0 == 0 or n1 == 0:
        raise ValueError("disease group empty: both groups need at least one observation")
    design = _JointDesign(spec, data)
    thetas, lam = _initial(spec, design, options)
    T = _unpack_jacobian(spec)
    n = data.Y.shape[0]

    def fun(u):
        ll, g = design.evaluate(T @ u)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(u)
        return -ll / n, -(T.T @ g) / n

    bounds = _bounds(spec)
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])

    def solve(u0):
        res = optimize.minimize(
            fun, u0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": max(options.max_iter, 2000), "ftol": 1e-15,
                     "gtol": options.tol, "maxcor": 30},
        )
        f, gu = fun(res.x)
        # projected gradient in the bounded coordinates
        pg = np.where((res.x <= lo + 1e-12) & (gu > 0), 0.0, gu)
        pg = np.where((res.x >= hi - 1e-12) & (pg < 0), 0.0, pg)
        return res, f, bool(np.max(np.abs(pg)) <= max(10 * options.tol, 1e-6))

    res, f, converged = solve(_pack(spec, thetas, lam))
    if not converged:
        # Nearly collinear responses drive |lambda| outwards very slowly;
        # retry from the bound with the marginal scales kept fixed.
        start = JointParams.from_vector(spec, T @ res.x)
        big = np.abs(start.lam) > 5.0
        if np.any(big):
            lam2 = np.where(big, np.sign(start.lam) * _LAMBDA_BOUND, start.lam)
            ratio = np.sqrt(np.diag(sigma_from_lambda(lam2, spec.n_tests))
                            / np.diag(sigma_from_lambda(start.lam, spec.n_tests)))
            thetas2 = [t * r for t, r in zip(start.thetas, ratio)]
            res2, f2, conv2 = solve(_pack(spec, thetas2, lam2))
            if f2 < f:
                res, f, converged = res2, f2, conv2
    vec = T @ res.x
    ll, g = design.evaluate(vec)
    params = JointParams.from_vector(spec, vec)
    notes = []
    if np.any(np.abs(params.lam) >= _LAMBDA_BOUND * (1 - 1e-6)):
        notes.append("dependence parameter at its bound: responses nearly collinear")
    info = _fd_information(design, vec)
    vcov = None
    try:
        if np.linalg.cond(info) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        vcov = np.linalg.inv(info)
        vcov = 0.5 * (vcov + vcov.T)
    except np.linalg.LinAlgError:
        notes.append("joint information singular: no variance estimate")
    return JointFittedModel(spec, params, ll, info, vcov, converged, int(res.nit),
                            data.n_per_group, notes)


# --------------------------------------------------------------------------
# marginal summaries and comparison


def _marginal_shift_vec(spec: JointSpec, vecs, j, x):
    """Standardised marginal shift of test j for each row of ``vecs``."""
    vecs = np.atleast_2d(vecs)
    offsets = np.concatenate([[0], np.cumsum(spec.sizes)])
    s = spec.specs[j]
    p = s.n_covariates
    beta = vecs[:, offsets[j]: offsets[j] + s.n_beta]
    shift = beta[:, 0].copy()
    if s.interactions and p and x is not None:
        shift += beta[:, 1 + p: 1 + 2 * p] @ np.asarray(x, dtype=float)
    lam = vecs[:, offsets[-1]:]
    J = spec.n_tests
    scales = np.array([np.sqrt(sigma_from_lambda(row, J)[j, j]) for row in lam])
    return shift / scales


def _check_x(spec, x):
    p = spec.specs[0].n_covariates
    if x is None:
        return None
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if x.shape[0] != p:
        raise rm.DimensionMismatchError(f"covariate profile has {x.shape[0]} entries, expected {p}")
    return x


def marginal_roc_param(joint: JointFittedModel, j, x=None) -> float:
    """(delta_j + x^T gamma_j) / sqrt(Sigma_jj) for test ``j`` (index or name)."""
    j = joint.spec.index(j)
    x = _check_x(joint.spec, x)
    return float(_marginal_shift_vec(joint.spec, joint.params.vector, j, x)[0])


@dataclass
class Comparison:
    tests: tuple
    shift: tuple
    auc: tuple
    youden: tuple
    shift_difference: IntervalEstimate
    auc_difference: IntervalEstimate
    youden_difference: IntervalEstimate
    p_value: float
    correlation: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "tests": list(self.tests),
            "shift": [e.to_dict() for e in self.shift],
            "auc": [e.to_dict() for e in self.auc],
            "youden": [e.to_dict() for e in self.youden],
            "difference": {
                "shift": self.shift_difference.to_dict(),
                "auc": self.auc_difference.to_dict(),
                "youden": self.youden_difference.to_dict(),
            },
            "p_value": self.p_value,
            "correlation": self.correlation,
            "notes": list(self.notes),
        }


def compare_tests(joint: JointFittedModel, j, k, x=None, config: SimCiConfig | None = None,
                  level=0.95) -> Comparison:
    """Marginal indices of tests j and k and their differences.

    Intervals are type-7 quantiles over draws from N(theta_hat, I^{-1}); the
    p-value for equal shifts uses a normal approximation with the simulated
    standard deviation of the difference.
    """
    config = config or SimCiConfig()
    spec = joint.spec
    j, k = spec.index(j), spec.index(k)
    x = _check_x(spec, x)
    if joint.vcov is None:
        raise SingularInformationError("the joint fit has no variance estimate")
    rng = np.random.default_rng(config.seed)
    mean = joint.params.vector
    factor = mvn_factor(joint.vcov)
    draws = mean + rng.standard_normal((config.B, mean.shape[0])) @ factor.T
    alpha = 1.0 - level
    qs = [alpha / 2, 1 - alpha / 2]

    def interval(name, point, values):
        lo, hi = np.quantile(values, qs, method="linear")
        return IntervalEstimate(name, float(point), float(min(lo, point)), float(max(hi, point)),
                                level, "simulate")

    sj = _marginal_shift_vec(spec, draws, j, x)
    sk = _marginal_shift_vec(spec, draws, k, x)
    pj = marginal_roc_param(joint, j, x)
    pk = marginal_roc_param(joint, k, x)
    link = PROBIT
    per = {}
    for name, fn in (("shift", lambda s: s), ("auc", lambda s: rm.auc(link, s)),
                     ("youden", lambda s: rm.youden(link, s))):
        per[name] = (
            interval(f"{name}[{spec.names[j]}]", fn(pj), fn(sj)),
            interval(f"{name}[{spec.names[k]}]", fn(pk), fn(sk)),
            interval(f"{name} difference", fn(pj) - fn(pk), fn(sj) - fn(sk)),
        )
    notes = list(joint.notes)
    if j == k:
        p_value = 1.0
    else:
        sd = float(np.std(sj - sk, ddof=1))
        if sd == 0:
            p_value = 1.0 if pj == pk else 0.0
        else:
            p_value = float(2.0 * special.ndtr(-abs(pj - pk) / sd))
    corr = float(joint.correlation[j, k])
    return Comparison(
        (spec.names[j], spec.names[k]),
        per["shift"][:2], per["auc"][:2], per["youden"][:2],
        per["shift"][2], per["auc"][2], per["youden"][2],
        p_value, corr, notes,
    )
