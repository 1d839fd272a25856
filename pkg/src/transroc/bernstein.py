"""Monotone transformation functions in Bernstein form.

h(y) = sum_m theta_m b_m(y), with b_m the Bernstein basis polynomials of order M
on a support interval [l, u].  Nondecreasing coefficients give a nondecreasing
h.  The unconstrained parameterization used by the optimizer is

    theta_0 = eta_0,    theta_m = theta_{m-1} + exp(eta_m)   (m >= 1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import OutOfRangeError

__all__ = [
    "BernsteinBasis",
    "OrdinalBasis",
    "TransformationFunction",
    "reparam_to_monotone",
    "reparam_jacobian",
    "monotone_to_reparam",
    "default_support",
]


def _bernstein_matrix(t, order):
    """Basis values for t in [0, 1] by repeated convex combination.

    Builds the degree-k basis from the degree-(k-1) one, which keeps every
    intermediate quantity in [0, 1].
    """
    t = np.asarray(t, dtype=float)[:, None]
    s = 1.0 - t
    out = np.ones((t.shape[0], 1))
    for _ in range(order):
        nxt = np.empty((t.shape[0], out.shape[1] + 1))
        nxt[:, :-1] = s * out
        nxt[:, -1] = 0.0
        nxt[:, 1:] += t * out
        out = nxt
    return out


@dataclass(frozen=True)
class BernsteinBasis:
    """Bernstein polynomials of order ``order`` on ``support = (l, u)``."""

    order: int
    support: tuple

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be an integer >= 1, got {self.order!r}")
        lo, hi = (float(v) for v in self.support)
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"support must be finite with l < u, got {self.support!r}")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "support", (lo, hi))

    @property
    def n_coef(self):
        return self.order + 1

    def _scaled(self, y):
        lo, hi = self.support
        y = np.clip(np.atleast_1d(np.asarray(y, dtype=float)), lo, hi)
        return (y - lo) / (hi - lo)

    def basis(self, y):
        """Matrix of basis values, one row per element of ``y``."""
        return _bernstein_matrix(self._scaled(y), self.order)

    def deriv(self, y):
        """Matrix of basis derivatives d b_m / dy."""
        lo, hi = self.support
        lower = _bernstein_matrix(self._scaled(y), self.order - 1)
        out = np.zeros((lower.shape[0], self.order + 1))
        out[:, 1:] += lower
        out[:, :-1] -= lower
        return out * (self.order / (hi - lo))

    def to_dict(self):
        return {"type": "bernstein", "order": self.order, "support": list(self.support)}


@dataclass(frozen=True)
class OrdinalBasis:
    """One coefficient per category cut point: h(y_k) = theta_k, k = 1..K-1.

    Category codes run from 1 to ``n_categories``.  Only interval-type
    responses are meaningful; the last category has an implicit +inf cut.
    """

    n_categories: int

    def __post_init__(self):
        if int(self.n_categories) != self.n_categories or self.n_categories < 2:
            raise ValueError("an ordinal response needs at least 2 categories")
        object.__setattr__(self, "n_categories", int(self.n_categories))

    @property
    def n_coef(self):
        return self.n_categories - 1

    @property
    def order(self):
        return self.n_categories - 2

    def basis(self, y):
        k = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any((k < 1) | (k > self.n_coef) | (k != np.round(k))):
            raise ValueError("ordinal cut points must be integer codes in 1..K-1")
        out = np.zeros((k.shape[0], self.n_coef))
        out[np.arange(k.shape[0]), k.astype(int) - 1] = 1.0
        return out

    def deriv(self, y):
        raise TypeError("ordinal transformation functions have no derivative")

    def to_dict(self):
        return {"type": "ordinal", "n_categories": self.n_categories}


def reparam_to_monotone(eta):
    """Map unconstrained ``eta`` to nondecreasing coefficients."""
    eta = np.asarray(eta, dtype=float)
    theta = np.empty_like(eta)
    theta[0] = eta[0]
    theta[1:] = eta[0] + np.cumsum(np.exp(eta[1:]))
    return theta


def reparam_jacobian(eta):
    """d theta / d eta; lower triangular with first column ones."""
    eta = np.asarray(eta, dtype=float)
    k = eta.shape[0]
    jac = np.tril(np.ones((k, k)))
    jac[:, 1:] *= np.exp(eta[1:])[None, :]
    return np.tril(jac)


def monotone_to_reparam(theta, floor=1e-12):
    """Inverse of :func:`reparam_to_monotone`; ties are lifted to ``floor``."""
    theta = np.asarray(theta, dtype=float)
    eta = np.empty_like(theta)
    eta[0] = theta[0]
    eta[1:] = np.log(np.maximum(np.diff(theta), floor))
    return eta


def default_support(values, widen=0.05):
    """Range of the finite ``values`` widened by ``widen`` of the range per side."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise ValueError("no finite response values to derive a support from")
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span <= 0:
        span = max(abs(lo), 1.0)
    return (lo - widen * span, hi + widen * span)


@dataclass(frozen=True)
class TransformationFunction:
    """h(y | theta) = b(y)^T theta for a :class:`BernsteinBasis`."""

    basis: BernsteinBasis
    coef: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        if coef.shape != (self.basis.n_coef,):
            raise ValueError(
                f"expected {self.basis.n_coef} coefficients, got shape {coef.shape}"
            )
        object.__setattr__(self, "coef", coef)

    @property
    def is_monotone(self):
        return bool(np.all(np.diff(self.coef) >= 0))

    def __call__(self, y):
        return self.eval(y)

    def eval(self, y):
        out = self.basis.basis(y) @ self.coef
        return out if np.ndim(y) else float(out[0])

    def eval_deriv(self, y):
        out = self.basis.deriv(y) @ self.coef
        return out if np.ndim(y) else float(out[0])

    def invert(self, t, rtol=1e-10):
        """Solve h(y) = t on the support by bisection.

        Raises :class:`OutOfRangeError` when ``t`` lies outside [h(l), h(u)].
        """
        lo, hi = self.basis.support
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        h_lo, h_hi = self.eval(lo), self.eval(hi)
        if np.any(t_arr < h_lo) or np.any(t_arr > h_hi) or np.any(np.isnan(t_arr)):
            raise OutOfRangeError(
                f"value(s) outside the range [{h_lo:.6g}, {h_hi:.6g}] of h on its support"
            )
        a = np.full_like(t_arr, lo)
        b = np.full_like(t_arr, hi)
        tol = rtol * (hi - lo)
        while np.max(b - a) > tol:
            mid = 0.5 * (a + b)
            below = self.basis.basis(mid) @ self.coef < t_arr
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
        out = 0.5 * (a + b)
        out = np.where(t_arr == h_hi, hi, np.where(t_arr == h_lo, lo, out))
        return out if np.ndim(t) else float(out[0])
