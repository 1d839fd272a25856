"""Maximum likelihood estimation under the monotonicity constraint.

The coefficients of h are optimized in the unconstrained parameterization of
:func:`transroc.bernstein.reparam_to_monotone`.  A damped Newton iteration with
the analytic Hessian does most of the work; when it stalls, BFGS restarts the
search and Newton polishes the result.

When some increments of the coefficient vector collapse to zero the optimum
sits on the boundary of the monotone cone.  The gradient in the original
coordinates is then nonzero along the collapsed directions (paired entries of
opposite sign), so convergence is judged in the free coordinates.  Restricted fits (shift parameter
held fixed) reuse the same machinery and are usually warm started.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .bernstein import monotone_to_reparam, reparam_jacobian, reparam_to_monotone
from .exceptions import (
    FlatTransformationWarning,
    NotConvergedError,
    SeparationError,
    SingularInformationError,
)
from .model import Dataset, LikelihoodDesign, ModelSpec, ParameterVector, schur_inverse_block

__all__ = ["FitOptions", "FittedModel", "RestrictedFit", "fit_mle", "fit_restricted"]


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings.

    ``tol`` bounds max |d loglik / d parameter| / n in the unconstrained
    parameterization.  ``init`` is ``"linear"`` (h affine between the 1% and
    99% quantiles of F_Z over the support) or ``"empirical"`` (ordinal
    models: cut points at the marginal cumulative proportions).
    """

    max_iter: int = 500
    tol: float = 1e-7
    init: str = "auto"
    information: str = "fd"

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")
        if self.init not in ("auto", "linear", "empirical"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.information not in ("fd", "analytic"):
            raise ValueError(f"unknown information method {self.information!r}")


@dataclass
class FittedModel:
    spec: ModelSpec
    params: ParameterVector
    loglik: float
    information: np.ndarray | None
    vcov_beta: np.ndarray | None
    converged: bool
    n_iter: int
    grad_norm: float  # max |gradient| / n in the free coordinates
    n_per_group: tuple
    eta: np.ndarray | None = None
    design: LikelihoodDesign | None = field(default=None, repr=False)
    notes: list = field(default_factory=list)

    @property
    def delta(self):
        return self.params.delta

    @property
    def beta(self):
        return self.params.beta

    @property
    def theta(self):
        return self.params.theta

    @property
    def se_beta(self):
        if self.vcov_beta is None:
            return None
        return np.sqrt(np.clip(np.diag(self.vcov_beta), 0.0, None))

    @property
    def start_vector(self):
        """(beta, eta) vector for warm-starting related fits."""
        if self.eta is None:
            return None
        return np.concatenate([self.params.beta, self.eta])

    @property
    def n(self):
        return int(sum(self.n_per_group))

    def transformation(self):
        from .bernstein import TransformationFunction

        if self.spec.ordinal:
            raise TypeError("ordinal models have no continuous transformation function")
        return TransformationFunction(self.spec.basis, self.params.theta)

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "estimates": {
                "beta": self.params.beta.tolist(),
                "beta_names": self.spec.beta_names,
                "theta": self.params.theta.tolist(),
            },
            "vcov_beta": None if self.vcov_beta is None else self.vcov_beta.tolist(),
            "loglik": self.loglik,
            "convergence": {
                "converged": self.converged,
                "iterations": self.n_iter,
                "gradient_norm": self.grad_norm,
            },
            "n_per_group": list(self.n_per_group),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d):
        spec = ModelSpec.from_dict(d["spec"])
        est = d["estimates"]
        vcov = d.get("vcov_beta")
        conv = d.get("convergence", {})
        return cls(
            spec=spec,
            params=ParameterVector(est["beta"], est["theta"]),
            loglik=float(d.get("loglik", np.nan)),
            information=None,
            vcov_beta=None if vcov is None else np.asarray(vcov, dtype=float),
            converged=bool(conv.get("converged", True)),
            n_iter=int(conv.get("iterations", 0)),
            grad_norm=float(conv.get("gradient_norm", np.nan)),
            n_per_group=tuple(d.get("n_per_group", (0, 0))),
            notes=list(d.get("notes", [])),
        )


@dataclass
class RestrictedFit:
    """Maximizer of the log-likelihood with the shift parameter fixed at ``delta0``."""

    delta0: float
    params: ParameterVector
    loglik: float
    score: np.ndarray
    information: np.ndarray | None
    converged: bool
    n_iter: int
    start_vector: np.ndarray = field(repr=False, default=None)


class _Problem:
    """Negative mean log-likelihood in the unconstrained coordinates.

    x = (free beta, eta); when ``delta0`` is given the first beta entry is
    fixed at that value and removed from x.
    """

    def __init__(self, design: LikelihoodDesign, delta0=None):
        self.design = design
        self.nb = design.spec.n_beta
        self.delta0 = delta0
        self.n = max(design.n, 1)

    def split(self, x):
        if self.delta0 is None:
            beta = x[: self.nb]
            eta = x[self.nb:]
        else:
            beta = np.concatenate([[self.delta0], x[: self.nb - 1]])
            eta = x[self.nb - 1:]
        return beta, eta

    def theta(self, x):
        beta, eta = self.split(x)
        return np.concatenate([beta, reparam_to_monotone(eta)])

    def _free(self, full):
        return full if self.delta0 is None else full[1:]

    def fun_grad(self, x):
        beta, eta = self.split(x)
        theta = np.concatenate([beta, reparam_to_monotone(eta)])
        ll, g, _ = self.design.evaluate(theta)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(x)
        g_eta = reparam_jacobian(eta).T @ g[self.nb:]
        gx = np.concatenate([self._free(g[: self.nb]), g_eta])
        return -ll / self.n, -gx / self.n

    def fun(self, x):
        beta, eta = self.split(x)
        ll = self.design.loglik(np.concatenate([beta, reparam_to_monotone(eta)]))
        return -ll / self.n if np.isfinite(ll) else np.inf

    def collapsed_violations(self, x, tol):
        """Collapsed increments whose growth would still raise the likelihood.

        At a collapsed increment exp(eta_k) ~ 0 also zeroes the eta-gradient,
        so a converged eta can hide a violated optimality condition in the
        original coordinates: sum_{m >= k} d loglik / d vartheta_m must be <= 0.
        """
        beta, eta = self.split(x)
        theta = np.concatenate([beta, reparam_to_monotone(eta)])
        _, g, _ = self.design.evaluate(theta)
        tail = np.cumsum(g[self.nb:][::-1])[::-1][1:] / self.n
        flat = np.exp(eta[1:]) < 1e-6
        return np.flatnonzero(flat & (tail > tol))

    # the same problem in u = (free beta, vartheta_0, increments >= 0)

    def u_from_x(self, x):
        beta, eta = self.split(x)
        return np.concatenate([self._free(beta), eta[:1], np.exp(eta[1:])])

    def x_from_u(self, u):
        k = u.shape[0] - self.design.spec.n_theta
        eta = np.concatenate([u[k:k + 1], np.log(np.maximum(u[k + 1:], 1e-300))])
        return np.concatenate([u[:k], eta])

    def fun_grad_u(self, u):
        k = u.shape[0] - self.design.spec.n_theta
        beta = u[:k] if self.delta0 is None else np.concatenate([[self.delta0], u[:k]])
        theta = np.concatenate([beta, u[k] + np.concatenate([[0.0], np.cumsum(u[k + 1:])])])
        ll, g, _ = self.design.evaluate(theta)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(u)
        g_t = g[self.nb:]
        tail = np.cumsum(g_t[::-1])[::-1]
        gu = np.concatenate([self._free(g[: self.nb]), tail])
        return -ll / self.n, -gu / self.n

    def fun_grad_hess_u(self, u):
        k = u.shape[0] - self.design.spec.n_theta
        beta = u[:k] if self.delta0 is None else np.concatenate([[self.delta0], u[:k]])
        L = np.tril(np.ones((self.design.spec.n_theta,) * 2))
        theta = np.concatenate([beta, L @ u[k:]])
        ll, g, h = self.design.evaluate(theta, hessian=True)
        if not np.isfinite(ll):
            return np.inf, None, None
        nb = self.nb
        T = np.zeros((theta.shape[0], u.shape[0]))
        T[nb - k: nb, :k] = np.eye(k)
        T[nb:, k:] = L
        return -ll / self.n, -(T.T @ g) / self.n, -(T.T @ h @ T) / self.n

    def fun_grad_hess(self, x):
        beta, eta = self.split(x)
        theta = np.concatenate([beta, reparam_to_monotone(eta)])
        ll, g, h = self.design.evaluate(theta, hessian=True)
        if not np.isfinite(ll):
            return np.inf, None, None
        nb = self.nb
        jac = reparam_jacobian(eta)
        g_t = g[nb:]
        extra = np.zeros(eta.shape[0])
        extra[1:] = np.exp(eta[1:]) * np.cumsum(g_t[::-1])[::-1][1:]
        h_bb = h[:nb, :nb]
        h_bt = h[:nb, nb:] @ jac
        h_tt = jac.T @ h[nb:, nb:] @ jac + np.diag(extra)
        hx = np.block([[h_bb, h_bt], [h_bt.T, h_tt]])
        gx = np.concatenate([g[:nb], jac.T @ g_t])
        if self.delta0 is not None:
            hx = hx[1:, 1:]
            gx = gx[1:]
        return -ll / self.n, -gx / self.n, -hx / self.n


def _newton(problem, x, tol, max_iter):
    """Damped Newton with Levenberg regularisation and backtracking."""
    f, g, h = problem.fun_grad_hess(x)
    if g is None:
        return x, False, 0
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= tol:
            return x, True, it - 1
        lam = 0.0
        step = None
        scale = max(1e-12, np.max(np.abs(np.diag(h))))
        for _ in range(30):
            try:
                c = linalg.cho_factor(h + lam * np.eye(h.shape[0]))
                step = -linalg.cho_solve(c, g)
                break
            except (linalg.LinAlgError, ValueError):
                lam = max(2.0 * lam, 1e-8 * scale)
                lam *= 10.0
        if step is None or not np.all(np.isfinite(step)):
            return x, False, it
        # cap huge steps in eta to keep exp() finite
        big = np.max(np.abs(step))
        if big > 10.0:
            step *= 10.0 / big
        slope = g @ step
        t = 1.0
        accepted = False
        for _ in range(40):
            x_new = x + t * step
            f_new = problem.fun(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no decrease possible: accept if already near stationarity
            return x, bool(np.max(np.abs(g)) <= 100 * tol), it
        x = x_new
        f, g, h = problem.fun_grad_hess(x)
        if g is None:
            return x, False, it
    return x, bool(np.max(np.abs(g)) <= tol), it


def _release(problem, x, tol):
    """Reopen collapsed increments that violate the optimality condition."""
    bad = problem.collapsed_violations(x, 10 * tol)
    if bad.size == 0:
        return None
    _, eta = problem.split(x)
    theta = reparam_to_monotone(eta)
    scale = max(theta[-1] - theta[0], 1e-3) / max(len(eta) - 1, 1)
    x = x.copy()
    offset = x.shape[0] - eta.shape[0]
    x[offset + 1 + bad] = np.log(1e-2 * scale)
    return x


def _newton_kkt(problem, x, tol, max_iter):
    x, ok, n_iter = _newton(problem, x, tol, max_iter)
    for _ in range(5):
        if not ok:
            break
        x_new = _release(problem, x, tol)
        if x_new is None:
            break
        x, ok, it = _newton(problem, x_new, tol, max_iter)
        n_iter += it
    return x, ok, n_iter


def _projected_newton(problem, u, k, tol, max_iter):
    """Newton steps in u with the increments kept nonnegative.

    The negative log-likelihood is convex in u for log-concave F_Z, so this
    is the method of choice once eta-Newton stalls on a badly conditioned
    problem.  Increments at zero whose gradient points outward are held fixed.
    """
    u = u.copy()
    u[k + 1:] = np.maximum(u[k + 1:], 0.0)
    f, g, h = problem.fun_grad_hess_u(u)
    if g is None:
        return u, False, 0
    for it in range(1, max_iter + 1):
        fixed = np.zeros(u.shape[0], dtype=bool)
        fixed[k + 1:] = (u[k + 1:] <= 1e-12) & (g[k + 1:] > 0)
        pg = np.where(fixed, 0.0, g)
        if np.max(np.abs(pg)) <= tol:
            return u, True, it - 1
        free = ~fixed
        hf = h[np.ix_(free, free)]
        ridge = 0.0
        while True:
            try:
                c = linalg.cho_factor(hf + ridge * np.eye(hf.shape[0]))
                break
            except linalg.LinAlgError:
                ridge = max(10 * ridge, 1e-10 * max(np.max(np.abs(np.diag(hf))), 1.0))
        step = np.zeros_like(u)
        step[free] = -linalg.cho_solve(c, g[free])
        neg = step[k + 1:] < 0
        t_max = 1.0
        if np.any(neg):
            t_max = min(1.0, float(np.min(-u[k + 1:][neg] / step[k + 1:][neg])))
        t = t_max
        slope = float(g @ step)
        while t > 1e-12:
            u_new = u + t * step
            u_new[k + 1:] = np.maximum(u_new[k + 1:], 0.0)
            f_new = problem.fun_grad_u(u_new)[0]
            if f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return u, bool(np.max(np.abs(pg)) <= 100 * tol), it
        u = u_new
        f, g, h = problem.fun_grad_hess_u(u)
        if g is None:
            return u, False, it
    fixed = np.zeros(u.shape[0], dtype=bool)
    fixed[k + 1:] = (u[k + 1:] <= 1e-12) & (g[k + 1:] > 0)
    return u, bool(np.max(np.abs(np.where(fixed, 0.0, g))) <= tol), max_iter


def _bounded(problem, x, tol, max_iter):
    """Bound-constrained quasi-Newton in (vartheta_0, increments >= 0).

    Used when Newton in eta stalls: optima with several exactly flat
    segments sit at eta = -inf, where the eta parameterization is singular.
    """
    u0 = problem.u_from_x(x)
    k = u0.shape[0] - problem.design.spec.n_theta
    u_n, ok, n_newton = _projected_newton(problem, u0, k, tol, max(max_iter // 20, 1))
    if ok:
        return problem.x_from_u(u_n), True, n_newton
    if problem.fun_grad_u(u_n)[0] <= problem.fun_grad_u(u0)[0]:
        u0 = u_n
    bounds = [(None, None)] * (k + 1) + [(0.0, None)] * (u0.shape[0] - k - 1)

    def fg(u):
        f, g = problem.fun_grad_u(u)
        return (f, g) if np.isfinite(f) else (1e10, np.zeros_like(u))

    res = optimize.minimize(fg, u0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": max_iter, "ftol": 1e-15, "gtol": tol / 10,
                                     "maxcor": 30})
    f, g = problem.fun_grad_u(res.x)
    at_zero = np.zeros_like(g, dtype=bool)
    at_zero[k + 1:] = res.x[k + 1:] <= 0.0
    pg = np.where(at_zero & (g > 0), 0.0, g)
    ok = bool(np.isfinite(f) and np.max(np.abs(pg)) <= tol)
    return problem.x_from_u(res.x), ok, n_newton + int(res.nit)


def _minimize(problem, x0, options, warm=False):
    tol = options.tol
    x, ok, n_iter = _newton_kkt(problem, x0, tol, min(options.max_iter, 100 if warm else 200))
    if ok:
        return x, True, n_iter
    res = optimize.minimize(
        problem.fun_grad, x0, jac=True, method="BFGS",
        options={"maxiter": options.max_iter, "gtol": 10 * tol},
    )
    n_iter += int(res.nit)
    x = res.x if np.isfinite(res.fun) else x0
    x, ok, it = _newton_kkt(problem, x, tol, max(options.max_iter - n_iter, 20))
    n_iter += it
    if not ok:
        x_b, ok_b, it = _bounded(problem, x, tol, 4 * options.max_iter)
        if problem.fun(x_b) <= problem.fun(x):
            x, ok = x_b, ok_b
        n_iter += it
    return x, ok, n_iter


def _initial_eta(spec, design, options):
    link = spec.link
    k = spec.n_theta
    init = options.init
    if init == "auto":
        init = "empirical" if spec.ordinal else "linear"
    if init == "empirical" and spec.ordinal:
        data = design.data
        codes = np.where(np.isfinite(data.upper), data.upper, spec.basis.n_categories)
        counts = np.bincount(codes.astype(int), minlength=spec.basis.n_categories + 1)[1:]
        cum = np.cumsum(counts)[:-1] / max(counts.sum(), 1)
        cum = np.clip(cum, 0.5 / max(counts.sum(), 1), 1 - 0.5 / max(counts.sum(), 1))
        theta = link.quantile(cum)
        theta = np.maximum.accumulate(theta + 1e-3 * np.arange(k))
        return monotone_to_reparam(theta, floor=1e-3)
    a, b = float(link.quantile(0.01)), float(link.quantile(0.99))
    if k == 1:
        return np.array([0.5 * (a + b)])
    theta = a + (b - a) * np.arange(k) / (k - 1)
    return monotone_to_reparam(theta)


def _check_groups(data):
    n0, n1 = data.n_per_group
    if n0 == 0 or n1 == 0:
        raise ValueError("disease group empty: both groups need at least one observation")


def _as_design(spec, data):
    if isinstance(data, LikelihoodDesign):
        return data
    if not isinstance(data, Dataset):
        data = Dataset.from_observations(data, spec.covariates)
    return LikelihoodDesign(spec, data)


def fit_mle(spec: ModelSpec, data, options: FitOptions | None = None, start=None) -> FittedModel:
    """Unrestricted maximum likelihood estimate of (beta, vartheta).

    ``start`` optionally gives a starting (beta, eta) vector.  Raises
    :class:`NotConvergedError` (with the partial fit in ``.result``) when the
    gradient tolerance is not met, and :class:`SeparationError` when the
    shift parameter runs away.
    """
    options = options or FitOptions()
    design = _as_design(spec, data)
    _check_groups(design.data)
    problem = _Problem(design)
    if start is None:
        x0 = np.concatenate([np.zeros(spec.n_beta), _initial_eta(spec, design, options)])
        warm = False
    else:
        x0 = np.asarray(start, dtype=float)
        warm = True
    x, ok, n_iter = _minimize(problem, x0, options, warm=warm)
    theta = problem.theta(x)
    ll, _, _ = design.evaluate(theta)
    _, gx = problem.fun_grad(x)
    beta, eta = problem.split(x)
    notes = []
    if np.any(np.exp(eta[1:]) < 1e-8):
        msg = "some Bernstein coefficient increments are below 1e-8 (flat segments in h)"
        warnings.warn(msg, FlatTransformationWarning, stacklevel=2)
        notes.append(msg)
    info = vcov = None
    try:
        info = design.information(theta, method=options.information)
        vcov = schur_inverse_block(info, spec.n_beta)
    except SingularInformationError as exc:
        notes.append(f"information singular: {exc}")
    fitted = FittedModel(
        spec=spec,
        params=ParameterVector(theta[: spec.n_beta], theta[spec.n_beta:]),
        loglik=ll,
        information=info,
        vcov_beta=vcov,
        converged=bool(ok),
        n_iter=int(n_iter),
        grad_norm=float(np.max(np.abs(gx))),
        n_per_group=design.data.n_per_group,
        eta=eta,
        design=design,
        notes=notes,
    )
    if abs(beta[0]) > 50 and np.max(np.abs(gx)) > 1e-10:
        raise SeparationError(
            f"shift estimate {beta[0]:.3g} diverges; groups look perfectly separated",
            result=fitted,
        )
    if not ok:
        raise NotConvergedError(
            f"optimizer stopped after {n_iter} iterations with max |gradient|/n = "
            f"{np.max(np.abs(gx)):.3g}",
            result=fitted,
        )
    return fitted


def fit_restricted(spec: ModelSpec, data, delta0: float, options: FitOptions | None = None,
                   start=None, information=None) -> RestrictedFit:
    """Maximize the log-likelihood over all parameters except delta = ``delta0``.

    ``start`` is a (beta, eta) vector, typically the unrestricted estimate or
    the restricted estimate at a neighbouring ``delta0``; its delta entry is
    ignored.  ``information`` selects ``"fd"``, ``"analytic"`` or ``None``
    (skip computing the information matrix).
    """
    options = options or FitOptions()
    design = _as_design(spec, data)
    problem = _Problem(design, delta0=float(delta0))
    if start is None:
        x0 = np.concatenate([np.zeros(spec.n_beta - 1), _initial_eta(spec, design, options)])
        warm = False
    else:
        start = np.asarray(start, dtype=float)
        x0 = np.concatenate([start[1: spec.n_beta], start[spec.n_beta:]])
        warm = True
    x, ok, n_iter = _minimize(problem, x0, options, warm=warm)
    theta = problem.theta(x)
    ll, grad, _ = design.evaluate(theta)
    info = None if information is None else design.information(theta, method=information)
    beta, eta = problem.split(x)
    return RestrictedFit(
        delta0=float(delta0),
        params=ParameterVector(theta[: spec.n_beta], theta[spec.n_beta:]),
        loglik=ll,
        score=grad,
        information=info,
        converged=bool(ok),
        n_iter=int(n_iter),
        start_vector=np.concatenate([beta, eta]),
    )
