"""Input checks shared by the estimator and the command-line front end."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .model import Dataset


def check_level(level):
    if not isinstance(level, numbers.Real) or not 0 < level < 1:
        raise ValueError(f"confidence level must lie in (0, 1), got {level!r}")
    return float(level)


def check_disease(disease, n=None):
    d = np.asarray(disease).ravel()
    if n is not None and d.shape[0] != n:
        raise ValueError(f"disease has {d.shape[0]} entries, expected {n}")
    bad = ~np.isin(d, (0, 1))
    if np.any(bad):
        rows = np.flatnonzero(bad)[:5].tolist()
        raise ValueError(f"disease indicator must be 0/1; offending rows {rows}")
    d = d.astype(int)
    if d.min() == d.max():
        raise ValueError("disease group empty: both groups need at least one observation")
    return d


def check_response(y):
    """Exact responses (1-D) or (n, 2) censoring bounds with NaN = unbounded."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y.ravel()
    if y.ndim == 1:
        if not np.all(np.isfinite(y)):
            rows = np.flatnonzero(~np.isfinite(y))[:5].tolist()
            raise ValueError(f"exact responses must be finite; offending rows {rows}")
        return y
    if y.ndim != 2 or y.shape[1] != 2:
        raise ValueError("y must be 1-D or an (n, 2) array of censoring bounds")
    lo = np.where(np.isnan(y[:, 0]), -np.inf, y[:, 0])
    hi = np.where(np.isnan(y[:, 1]), np.inf, y[:, 1])
    bad = (lo > hi) | (~np.isfinite(lo) & ~np.isfinite(hi))
    if np.any(bad):
        rows = np.flatnonzero(bad)[:5].tolist()
        raise ValueError(f"invalid censoring bounds (lower > upper or both open) in rows {rows}")
    return np.column_stack([lo, hi])


def check_covariates(X, n):
    if X is None:
        return np.zeros((n, 0))
    X = check_array(X, ensure_2d=False, dtype=float, ensure_min_features=0)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows, expected {n}")
    return X


def ordinal_bounds(codes, n_categories=None):
    """Interval coding (k-1, k] of integer category codes 1..K."""
    codes = np.asarray(codes, dtype=float).ravel()
    if np.any(codes != np.round(codes)) or np.any(codes < 1):
        rows = np.flatnonzero((codes != np.round(codes)) | (codes < 1))[:5].tolist()
        raise ValueError(f"ordinal responses must be integer codes >= 1; offending rows {rows}")
    k = int(codes.max()) if n_categories is None else int(n_categories)
    if k < 2:
        raise ValueError("an ordinal response needs at least 2 categories")
    if np.any(codes > k):
        raise ValueError(f"category codes exceed n_categories = {k}")
    lower = np.where(codes == 1, -np.inf, codes - 1)
    upper = np.where(codes == k, np.inf, codes)
    return np.column_stack([lower, upper]), k


def make_dataset(y, disease, X=None, covariate_names=(), ordinal=False, n_categories=None):
    """Validated :class:`Dataset` (and the number of categories for ordinal data)."""
    if ordinal:
        y, k = ordinal_bounds(y, n_categories)
    else:
        y, k = check_response(y), None
    n = y.shape[0]
    d = check_disease(disease, n)
    X = check_covariates(X, n)
    names = tuple(covariate_names) if covariate_names else tuple(f"x{i}" for i in range(X.shape[1]))
    return Dataset.from_arrays(y, d, X, names), k
