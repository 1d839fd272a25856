"""Simulation studies for the transformation-model ROC estimators.

Non-diseased responses are standard normal.  Diseased responses follow
F_1(y) = F_Z(F_Z^{-1}(Phi(y)) - delta) and are drawn by inversion,
y = Phi^{-1}(F_Z(F_Z^{-1}(U) + delta)).  The shift is chosen so that the
true AUC (or Youden index) has a requested value.

Every replication draws from its own counter-based stream keyed by
(seed, cell, replication), so serial and parallel runs agree exactly.
"""
from __future__ import annotations

import csv
import io
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import special

from . import rocmetrics as rm
from .bernstein import BernsteinBasis, default_support
from .exceptions import NoRootError, TransRocError
from .fit import FitOptions, fit_mle
from .inference import score_ci, score_statistic, transform_interval
from .links import get_link
from .model import Dataset, ModelSpec, Observation

__all__ = [
    "ESTIMATOR_ALIASES",
    "DgpConfig",
    "CellResult",
    "StudyResult",
    "solve_delta",
    "replication_rng",
    "sample_dataset",
    "apply_lod",
    "run_replication",
    "run_study",
    "load_study_config",
]

# conventional names of the estimators with these links
ESTIMATOR_ALIASES = {"boxcox": "probit", "colr": "logit", "coxph": "cloglog", "lehmann": "loglog"}

CSV_COLUMNS = ("dgp_link", "estimator_link", "target_auc", "n", "bias", "rmse",
               "coverage", "mean_width", "R", "failures")


def _estimator_link(name):
    key = str(name).lower()
    return get_link(ESTIMATOR_ALIASES.get(key, key))


def solve_delta(link, target="auc", value=0.8, tol=1e-10) -> float:
    """Nonnegative shift at which the index ``target`` equals ``value``.

    Bisection until the index is within ``tol`` of ``value``.
    """
    link = get_link(link)
    if target == "auc":
        if not 0.5 <= value < 1.0:
            raise NoRootError(f"AUC target must lie in [0.5, 1), got {value}")
        fn = rm.auc
        base = 0.5
    elif target == "youden":
        if not 0.0 <= value < 1.0:
            raise NoRootError(f"Youden target must lie in [0, 1), got {value}")
        fn = rm.youden
        base = 0.0
    else:
        raise ValueError(f"unknown target {target!r}; expected 'auc' or 'youden'")
    if value == base:
        return 0.0
    lo, hi = 0.0, 1.0
    while fn(link, hi) < value:
        hi *= 2.0
        if hi > 1e3:
            raise NoRootError(f"no shift reaches {target} = {value}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = fn(link, mid) - value
        if abs(f) < tol:
            return mid
        if f < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DgpConfig:
    link: str = "probit"
    target: str = "auc"
    value: float = 0.8
    n0: int = 50
    n1: int = 50
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "link", get_link(self.link).name)
        if self.target not in ("auc", "youden"):
            raise ValueError(f"unknown target {self.target!r}")
        lo = 0.5 if self.target == "auc" else 0.0
        if not lo <= self.value < 1.0:
            raise ValueError(f"{self.target} target {self.value} outside [{lo}, 1)")
        if self.n0 < 1 or self.n1 < 1:
            raise ValueError("both groups need at least one subject")

    @property
    def delta(self):
        return solve_delta(self.link, self.target, self.value)

    @property
    def true_auc(self):
        return float(rm.auc(self.link, self.delta))


def replication_rng(seed, cell, rep):
    ss = np.random.SeedSequence(0 if seed is None else seed, spawn_key=(int(cell), int(rep)))
    return np.random.Generator(np.random.Philox(ss))


def sample_dataset(config: DgpConfig, rng=None, as_observations=False):
    """Draw one two-sample data set; ``rng`` defaults to ``config.seed``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    link = get_link(config.link)
    delta = config.delta
    y0 = rng.standard_normal(config.n0)
    u = rng.uniform(size=config.n1)
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    surv = np.clip(link.sf(link.quantile(u) + delta), 1e-300, 1.0)
    y1 = -special.ndtri(surv)
    y = np.concatenate([y0, y1])
    d = np.concatenate([np.zeros(config.n0, dtype=int), np.ones(config.n1, dtype=int)])
    if as_observations:
        return [Observation.exact(v, int(k)) for v, k in zip(y, d)]
    return Dataset.from_arrays(y, d)


def apply_lod(data: Dataset, quantile=0.2, groups="nondiseased"):
    """Left-censor responses below the empirical ``quantile`` of the chosen group.

    The limit of detection is the empirical quantile of the exact responses
    in ``groups`` ("nondiseased", "diseased" or "all"); responses of that
    group at or below it become (-inf, lod].
    """
    sel = {"nondiseased": data.disease == 0, "diseased": data.disease == 1,
           "all": np.ones(len(data), dtype=bool)}[groups]
    lod = float(np.quantile(data.upper[sel], quantile))
    cens = sel & (data.upper <= lod)
    lower = np.where(cens, -np.inf, data.lower)
    upper = np.where(cens, lod, data.upper)
    return Dataset(lower, upper, data.disease, data.X, data.covariate_names), lod


def run_replication(cell: DgpConfig, estimators, level, seed, cell_id, rep, order=6,
                    lod=None, null_test=False):
    """Fit every estimator to one simulated data set.

    Returns one dict per estimator with the AUC estimate, the score interval
    for the AUC, and (optionally) the p-value of the score test of delta = 0.
    """
    rng = replication_rng(seed, cell_id, rep)
    data = sample_dataset(cell, rng)
    if lod is not None:
        data, _ = apply_lod(data, lod)
    support = default_support(data.finite_values())
    out = []
    for name in estimators:
        link = _estimator_link(name)
        spec = ModelSpec(link, BernsteinBasis(order, support))
        rec = {"estimator": link.name, "ok": False}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fitted = fit_mle(spec, data, FitOptions(information="analytic"))
                ci = score_ci(spec, data, level, fitted=fitted)
                auc_ci = transform_interval(ci, lambda d: rm.auc(link, d))
                rec.update(ok=True, delta=fitted.delta, auc=auc_ci.point,
                           lower=auc_ci.lower, upper=auc_ci.upper)
                if null_test:
                    r0 = score_statistic(spec, data, 0.0, start=fitted.start_vector)
                    rec["p_value"] = float(2.0 * special.ndtr(-np.sqrt(r0)))
        except (TransRocError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            rec["error"] = type(exc).__name__
        out.append(rec)
    return out


@dataclass
class CellResult:
    dgp_link: str
    estimator_link: str
    target_auc: float
    n0: int
    n1: int
    bias: float
    rmse: float
    coverage: float
    mean_width: float
    R: int
    failures: int
    estimates: np.ndarray = field(default=None, repr=False)
    covered: np.ndarray = field(default=None, repr=False)
    p_values: np.ndarray = field(default=None, repr=False)

    def row(self):
        n = str(self.n0) if self.n0 == self.n1 else f"{self.n0}/{self.n1}"
        return {
            "dgp_link": self.dgp_link,
            "estimator_link": self.estimator_link,
            "target_auc": repr(float(self.target_auc)),
            "n": n,
            "bias": repr(float(self.bias)),
            "rmse": repr(float(self.rmse)),
            "coverage": repr(float(self.coverage)),
            "mean_width": repr(float(self.mean_width)),
            "R": self.R,
            "failures": self.failures,
        }


@dataclass
class StudyResult:
    cells: list
    level: float
    seed: int | None

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for c in self.cells:
            writer.writerow(c.row())
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def find(self, dgp_link, estimator_link, target_auc=None):
        for c in self.cells:
            if c.dgp_link == dgp_link and c.estimator_link == _estimator_link(estimator_link).name:
                if target_auc is None or abs(c.target_auc - target_auc) < 1e-9:
                    return c
        raise KeyError((dgp_link, estimator_link, target_auc))


def _aggregate(cell, link_name, records, truth, R):
    good = [r for r in records if r["ok"]]
    est = np.array([r["auc"] for r in good])
    lo = np.array([r["lower"] for r in good])
    hi = np.array([r["upper"] for r in good])
    covered = (lo <= truth) & (truth <= hi)
    pv = np.array([r["p_value"] for r in good if "p_value" in r])
    nan = float("nan")
    return CellResult(
        dgp_link=cell.link,
        estimator_link=link_name,
        target_auc=float(cell.value) if cell.target == "auc" else truth,
        n0=cell.n0,
        n1=cell.n1,
        bias=float(est.mean() - truth) if est.size else nan,
        rmse=float(np.sqrt(np.mean((est - truth) ** 2))) if est.size else nan,
        coverage=float(covered.mean()) if est.size else nan,
        mean_width=float(np.mean(hi - lo)) if est.size else nan,
        R=R,
        failures=R - len(good),
        estimates=est,
        covered=covered,
        p_values=pv if pv.size else None,
    )


def run_study(cells, estimators, R=1000, level=0.9, seed=0, n_jobs=1, order=6, lod=None,
              null_test=False, progress=False) -> StudyResult:
    """Replicate every cell ``R`` times and summarise the AUC estimators.

    Bias, RMSE, coverage and mean width refer to the AUC.  Replications in
    which a fit or interval fails are excluded and counted in ``failures``.
    """
    if R < 100:
        raise ValueError("a study needs at least 100 replications")
    cells = [c if isinstance(c, DgpConfig) else DgpConfig(**c) for c in cells]
    names = [_estimator_link(e).name for e in estimators]
    results = []
    for cell_id, cell in enumerate(cells):
        jobs = (
            delayed(run_replication)(cell, names, level, seed, cell_id, rep, order, lod, null_test)
            for rep in range(R)
        )
        reps = Parallel(n_jobs=n_jobs)(jobs)
        truth = cell.true_auc
        for k, name in enumerate(names):
            results.append(_aggregate(cell, name, [r[k] for r in reps], truth, R))
        if progress:
            print(f"cell {cell_id + 1}/{len(cells)} done ({cell.link}, "
                  f"{cell.target}={cell.value}, n={cell.n0}/{cell.n1})", file=sys.stderr)
    return StudyResult(results, level, seed)


def load_study_config(path_or_dict):
    """Read a study description (JSON file or dict).

    Keys: ``cells`` (list of DgpConfig fields: link, target, value, n0, n1),
    ``estimators``, ``replications``, ``level``, ``seed``, ``order``, ``lod``.
    """
    if isinstance(path_or_dict, dict):
        cfg = dict(path_or_dict)
    else:
        with open(path_or_dict) as fh:
            cfg = json.load(fh)
    if not isinstance(cfg.get("cells"), list) or not cfg["cells"]:
        raise ValueError("study config needs a non-empty 'cells' list")
    allowed = set(DgpConfig.__dataclass_fields__)
    cells = []
    for i, c in enumerate(cfg["cells"]):
        unknown = set(c) - allowed
        if unknown:
            raise ValueError(f"cell {i}: unknown keys {sorted(unknown)}")
        cells.append(DgpConfig(**c))
    estimators = cfg.get("estimators", ["probit", "logit", "cloglog"])
    for e in estimators:
        _estimator_link(e)
    return {
        "cells": cells,
        "estimators": estimators,
        "R": int(cfg.get("replications", 1000)),
        "level": float(cfg.get("level", 0.9)),
        "seed": cfg.get("seed", 0),
        "order": int(cfg.get("order", 6)),
        "lod": cfg.get("lod"),
    }


def cell_summary(cell: CellResult):
    return {k: v for k, v in asdict(cell).items() if k not in ("estimates", "covered", "p_values")}
