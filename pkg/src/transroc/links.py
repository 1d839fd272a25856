"""Latent distributions for linear transformation models.

Each link is a log-concave distribution function F_Z on the real line.  The
choice selects the parametric family of the induced ROC curve:

    probit   standard normal            binormal ROC
    logit    standard logistic          bilogistic ROC
    cloglog  minimum extreme value      proportional hazards ROC
    loglog   maximum extreme value      reverse proportional hazards ROC

All methods are vectorised over numpy arrays.  Log-scale versions of the
distribution and survivor functions are provided so that likelihood code never
has to take the log of a probability that underflowed.
"""
from __future__ import annotations

import numpy as np
from scipy import special

__all__ = [
    "Link",
    "Probit",
    "Logit",
    "Cloglog",
    "Loglog",
    "PROBIT",
    "LOGIT",
    "CLOGLOG",
    "LOGLOG",
    "LINKS",
    "get_link",
]

_LOG_2PI = np.log(2.0 * np.pi)


def _log1mexp_neg(t):
    # log(1 - exp(-t)) for t >= 0
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t > np.log(2.0), np.log1p(-np.exp(-t)), np.log(-np.expm1(-t)))


class Link:
    """Base class; subclasses implement the distribution of Z."""

    name: str = ""

    def cdf(self, z):
        raise NotImplementedError

    def sf(self, z):
        raise NotImplementedError

    def logcdf(self, z):
        raise NotImplementedError

    def logsf(self, z):
        raise NotImplementedError

    def logpdf(self, z):
        raise NotImplementedError

    def pdf(self, z):
        return np.exp(self.logpdf(z))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
            raise ValueError(f"{self.name} quantile requires probabilities in (0, 1)")
        return self._quantile(p)

    def _quantile(self, p):
        raise NotImplementedError

    def dlogpdf(self, z):
        """f'(z) / f(z)."""
        raise NotImplementedError

    def d2logpdf(self, z):
        """Second derivative of log f(z); non-positive by log-concavity."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return isinstance(other, Link) and other.name == self.name

    def __hash__(self):
        return hash(self.name)


class Probit(Link):
    name = "probit"

    def cdf(self, z):
        return special.ndtr(z)

    def sf(self, z):
        return special.ndtr(-np.asarray(z, dtype=float))

    def logcdf(self, z):
        return special.log_ndtr(z)

    def logsf(self, z):
        return special.log_ndtr(-np.asarray(z, dtype=float))

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return -0.5 * (z * z + _LOG_2PI)

    def _quantile(self, p):
        return special.ndtri(p)

    def dlogpdf(self, z):
        return -np.asarray(z, dtype=float)

    def d2logpdf(self, z):
        return np.full_like(np.asarray(z, dtype=float), -1.0)


class Logit(Link):
    name = "logit"

    def cdf(self, z):
        return special.expit(z)

    def sf(self, z):
        return special.expit(-np.asarray(z, dtype=float))

    def logcdf(self, z):
        return -np.logaddexp(0.0, -np.asarray(z, dtype=float))

    def logsf(self, z):
        return -np.logaddexp(0.0, np.asarray(z, dtype=float))

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return -np.abs(z) - 2.0 * np.log1p(np.exp(-np.abs(z)))

    def _quantile(self, p):
        return special.logit(p)

    def dlogpdf(self, z):
        return -np.tanh(0.5 * np.asarray(z, dtype=float))

    def d2logpdf(self, z):
        return -2.0 * self.pdf(z)


class Cloglog(Link):
    """Minimum extreme value: F(z) = 1 - exp(-exp(z))."""

    name = "cloglog"

    def cdf(self, z):
        return -np.expm1(-np.exp(z))

    def sf(self, z):
        return np.exp(-np.exp(z))

    def logcdf(self, z):
        return _log1mexp_neg(np.exp(z))

    def logsf(self, z):
        return -np.exp(z)

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return z - np.exp(z)

    def _quantile(self, p):
        return np.log(-np.log1p(-p))

    def dlogpdf(self, z):
        return 1.0 - np.exp(z)

    def d2logpdf(self, z):
        return -np.exp(z)


class Loglog(Link):
    """Maximum extreme value: F(z) = exp(-exp(-z))."""

    name = "loglog"

    def cdf(self, z):
        return np.exp(-np.exp(-np.asarray(z, dtype=float)))

    def sf(self, z):
        return -np.expm1(-np.exp(-np.asarray(z, dtype=float)))

    def logcdf(self, z):
        return -np.exp(-np.asarray(z, dtype=float))

    def logsf(self, z):
        return _log1mexp_neg(np.exp(-np.asarray(z, dtype=float)))

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return -z - np.exp(-z)

    def _quantile(self, p):
        return -np.log(-np.log(p))

    def dlogpdf(self, z):
        return np.exp(-np.asarray(z, dtype=float)) - 1.0

    def d2logpdf(self, z):
        return -np.exp(-np.asarray(z, dtype=float))


PROBIT = Probit()
LOGIT = Logit()
CLOGLOG = Cloglog()
LOGLOG = Loglog()

LINKS = {link.name: link for link in (PROBIT, LOGIT, CLOGLOG, LOGLOG)}


def get_link(link) -> Link:
    """Resolve a link name ("probit", "logit", "cloglog", "loglog") or instance."""
    if isinstance(link, Link):
        return link
    try:
        return LINKS[str(link).lower()]
    except KeyError:
        raise ValueError(
            f"unknown link {link!r}; expected one of {sorted(LINKS)}"
        ) from None
