"""Command-line interface: ``transroc {fit,roc,indices,compare,simulate}``.

Exit status is 0 on success, 1 for invalid input and 2 when the optimizer
did not converge (the output file is still written and flagged).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import inference as inf
from . import rocmetrics as rm
from ._validation import check_level, make_dataset
from .bernstein import BernsteinBasis, OrdinalBasis, default_support
from .exceptions import NotConvergedError, OutOfRangeError, TransRocError
from .fit import FitOptions, FittedModel, fit_mle
from .model import ModelSpec

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2
MAX_JOINT_TESTS = 4


class InputError(Exception):
    """Malformed input; reported on standard error with exit status 1."""


# --------------------------------------------------------------------------
# reading data


def _parse_float(text, row, column):
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise InputError(f"row {row}, column '{column}': not a number: {text!r}") from None


def read_table(path, delimiter=None):
    """Header plus rows of a delimited text file; delimiter sniffed when omitted."""
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not text.strip():
        raise InputError(f"{path} is empty")
    if delimiter is None:
        first = text.splitlines()[0]
        delimiter = "\t" if "\t" in first else (";" if ";" in first and "," not in first else ",")
    reader = csv.reader(text.splitlines(), delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    rows = [r for r in reader if any(cell.strip() for cell in r)]
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise InputError(f"row {i}: expected {len(header)} fields, found {len(r)}")
    return header, rows


def _column(header, rows, name, required=True):
    if name not in header:
        if required:
            raise InputError(f"column '{name}' not found; available: {', '.join(header)}")
        return None
    j = header.index(name)
    return [r[j] for r in rows]


def _numeric(header, rows, name, allow_missing=False, allow_inf=False):
    raw = _column(header, rows, name)
    out = np.array([_parse_float(v, i + 2, name) for i, v in enumerate(raw)])
    if not allow_missing and np.any(np.isnan(out)):
        bad = (np.flatnonzero(np.isnan(out))[:5] + 2).tolist()
        raise InputError(f"column '{name}': missing values in rows {bad}")
    if not allow_inf and np.any(np.isinf(out)):
        bad = (np.flatnonzero(np.isinf(out))[:5] + 2).tolist()
        raise InputError(f"column '{name}': infinite values in rows {bad}")
    return out


def load_dataset(path, disease="d", covariates=(), ordinal=False, response="y"):
    """Read a two-sample (or covariate) data file.

    The response is column ``y`` (exact) or the pair ``y_lo``/``y_hi``
    (empty or -inf lower bound: left censored; empty or inf upper bound:
    right censored).
    """
    header, rows = read_table(path)
    if not rows:
        raise InputError(f"{path} has no data rows")
    d = _numeric(header, rows, disease)
    bad = ~np.isin(d, (0, 1))
    if np.any(bad):
        rows_bad = (np.flatnonzero(bad)[:5] + 2).tolist()
        raise InputError(f"column '{disease}': values must be 0 or 1 (rows {rows_bad})")
    if response in header:
        y = _numeric(header, rows, response)
    elif f"{response}_lo" in header and f"{response}_hi" in header:
        lo = _numeric(header, rows, f"{response}_lo", allow_missing=True, allow_inf=True)
        hi = _numeric(header, rows, f"{response}_hi", allow_missing=True, allow_inf=True)
        lo = np.where(np.isnan(lo), -np.inf, lo)
        hi = np.where(np.isnan(hi), np.inf, hi)
        both = np.isneginf(lo) & np.isposinf(hi)
        if np.any(both):
            raise InputError(f"rows {(np.flatnonzero(both)[:5] + 2).tolist()}: "
                             "both censoring bounds are open")
        bad = lo > hi
        if np.any(bad):
            raise InputError(f"rows {(np.flatnonzero(bad)[:5] + 2).tolist()}: "
                             f"'{response}_lo' exceeds '{response}_hi'")
        y = np.column_stack([lo, hi])
    else:
        raise InputError(f"need column '{response}' or columns '{response}_lo' and '{response}_hi'")
    X = np.column_stack([_numeric(header, rows, c) for c in covariates]) if covariates else None
    try:
        return make_dataset(y, d, X, tuple(covariates), ordinal)
    except ValueError as exc:
        raise InputError(str(exc)) from None


# --------------------------------------------------------------------------
# model files


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dump_json(obj, path):
    # repr of a float is the shortest string that reads back to the same value
    text = json.dumps(_jsonable(obj), indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def model_document(fitted: FittedModel, data_info):
    doc = fitted.to_dict()
    doc["tool"] = {"name": "transroc", "version": __version__}
    doc["data"] = data_info
    doc["defaults"] = {"link": "logit", "order": 6, "support": "range widened by 5% per side"}
    return doc


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
        fitted = FittedModel.from_dict(doc)
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path} is not a valid model file: {exc}") from None
    return fitted, doc


def _refit_for_inference(fitted, doc, data_path):
    """Reload the data of a model file and recompute the information matrix."""
    info = doc.get("data") or {}
    path = data_path or info.get("path")
    if not path:
        raise InputError("this interval method needs the data; pass --data")
    data, _ = load_dataset(path, info.get("disease", "d"), tuple(fitted.spec.covariates),
                           fitted.spec.ordinal)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            refit = fit_mle(fitted.spec, data, start=None)
        except NotConvergedError as exc:
            refit = exc.result
    return refit, data


def parse_profile(text, names):
    """``--at`` value: "a=1,b=2" or positional "1,2"."""
    if text is None:
        return None
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if all("=" in p for p in parts):
        vals = {}
        for p in parts:
            k, v = p.split("=", 1)
            vals[k.strip()] = v
        unknown = set(vals) - set(names)
        missing = set(names) - set(vals)
        if unknown or missing:
            raise InputError(f"--at must give every covariate ({', '.join(names) or 'none'}); "
                             f"unknown: {sorted(unknown)}, missing: {sorted(missing)}")
        parts = [vals[n] for n in names]
    if len(parts) != len(names):
        raise InputError(f"--at has {len(parts)} values, the model has {len(names)} covariates")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise InputError(f"--at values must be numbers: {text!r}") from None


# --------------------------------------------------------------------------
# commands


def cmd_fit(args):
    covs = tuple(c for c in (args.covariates or "").split(",") if c)
    data, k = load_dataset(args.data, args.disease, covs, args.ordinal)
    if args.ordinal:
        basis = OrdinalBasis(k)
    else:
        if args.support == "auto":
            support = default_support(data.finite_values())
        else:
            try:
                support = tuple(float(v) for v in args.support.split(","))
                basis_check = BernsteinBasis(args.order, support)
                del basis_check
            except ValueError as exc:
                raise InputError(f"--support: {exc}") from None
        basis = BernsteinBasis(args.order, support)
    spec = ModelSpec(args.link, basis, covs, args.interactions)
    status = EXIT_OK
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            fitted = fit_mle(spec, data, FitOptions(max_iter=args.max_iter))
        except NotConvergedError as exc:
            fitted = exc.result
            status = EXIT_NOT_CONVERGED
            print(f"warning: {exc}", file=sys.stderr)
    for w in caught:
        fitted.notes.append(str(w.message))
    info = {"path": os.path.abspath(args.data), "disease": args.disease, "n": len(data)}
    dump_json(model_document(fitted, info), args.out)
    return status


def cmd_roc(args):
    fitted, doc = load_model(args.model)
    names = tuple(fitted.spec.covariates)
    x = parse_profile(args.at, names)
    level = check_level(args.conf_level)
    p = rm.DEFAULT_GRID
    if args.band == "score":
        refit, data = _refit_for_inference(fitted, doc, args.data)
        ci = inf.score_ci(fitted.spec, data, level, x=x, fitted=refit if x is None else None)
        band = inf.uniform_roc_band(fitted.spec.link, ci, p)
        band.estimate = np.asarray(rm.roc_eval(fitted.spec.link, rm.shift_at(fitted, x), p))
        band.lower = np.minimum(band.lower, band.estimate)
        band.upper = np.maximum(band.upper, band.estimate)
    else:
        band = inf.simulated_roc_band(fitted, x, p, inf.SimCiConfig(args.B, args.seed), level)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["p", "roc", "lower", "upper"])
        for row in zip(band.p, band.estimate, band.lower, band.upper):
            w.writerow([repr(float(v)) for v in row])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_indices(args):
    fitted, doc = load_model(args.model)
    names = tuple(fitted.spec.covariates)
    x = parse_profile(args.at, names)
    level = check_level(args.conf_level)
    which = [w.strip() for w in args.which.split(",") if w.strip()]
    for w in which:
        if w not in rm.INDEX_KINDS:
            raise InputError(f"--which: unknown index {w!r}; choose from {', '.join(rm.INDEX_KINDS)}")
    config = inf.SimCiConfig(args.B, args.seed)
    cache = {}

    def refit():
        # the information matrix is not stored in model files
        if not cache:
            cache["fit"], cache["data"] = _refit_for_inference(fitted, doc, args.data)
            fitted.information = cache["fit"].information
        return cache["fit"], cache["data"]

    delta_ci = None
    if args.ci == "score" and any(w != "threshold" for w in which):
        full, data = refit()
        delta_ci = inf.score_ci(fitted.spec, data, level, x=x, fitted=full if x is None else None)
    shift = rm.shift_at(fitted, x)
    report = {
        "model": os.path.abspath(args.model),
        "link": fitted.spec.link.name,
        "profile": None if x is None else dict(zip(names, x.tolist())),
        "shift": shift,
        "polarity_reversed": bool(shift < 0),
        "indices": [],
    }
    if delta_ci is not None:
        report["shift_interval"] = delta_ci.to_dict()
    for kind in which:
        method = args.ci
        fallback = kind == "threshold" and method == "score"
        if fallback:
            method = "simulate"
        try:
            if kind == "threshold":
                rm.optimal_threshold(fitted, x)
                refit()
            est = inf.index_interval(fitted, kind, method, level, x, data=cache.get("data"),
                                     config=config, delta_interval=delta_ci)
            if fallback:
                est.note = "no score interval for the threshold; simulated instead"
        except OutOfRangeError as exc:
            est = rm.IndexEstimate(kind, None, level=level, method=method,
                                   note=f"threshold not reported: {exc}")
        report["indices"].append(est.to_dict())
    dump_json(report, args.out)
    return EXIT_OK


def cmd_compare(args):
    from .mvmodel import JointData, JointSpec, compare_tests, fit_joint

    if args.link != "probit":
        raise InputError("compare supports --link probit only")
    tests = [t for t in args.tests.split(",") if t]
    if not 2 <= len(tests) <= MAX_JOINT_TESTS:
        raise InputError(f"--tests needs between 2 and {MAX_JOINT_TESTS} response columns")
    covs = tuple(c for c in (args.covariates or "").split(",") if c)
    header, rows = read_table(args.data)
    d = _numeric(header, rows, args.disease)
    if np.any(~np.isin(d, (0, 1))):
        raise InputError(f"column '{args.disease}': values must be 0 or 1")
    if d.min() == d.max():
        raise InputError("disease group empty: both groups need at least one observation")
    Y = np.column_stack([_numeric(header, rows, t) for t in tests])
    X = np.column_stack([_numeric(header, rows, c) for c in covs]) if covs else None
    specs = [ModelSpec("probit", BernsteinBasis(args.order, default_support(Y[:, j])), covs,
                       args.interactions) for j in range(len(tests))]
    jspec = JointSpec(tuple(tests), tuple(specs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        joint = fit_joint(jspec, JointData(Y, d, X), FitOptions(max_iter=args.max_iter))
    x = parse_profile(args.at, covs)
    config = inf.SimCiConfig(args.B, args.seed)
    level = check_level(args.conf_level)
    comps = []
    for a in range(len(tests)):
        for b in range(a + 1, len(tests)):
            comps.append(compare_tests(joint, a, b, x, config, level).to_dict())
    report = {
        "link": "probit",
        "tests": tests,
        "lambda": joint.lam.tolist(),
        "Sigma": joint.Sigma.tolist(),
        "marginal_shift": [float(v) for v in
                           (joint_shift(joint, j, x) for j in range(len(tests)))],
        "converged": joint.converged,
        "notes": joint.notes,
        "comparisons": comps,
    }
    dump_json(report, args.out)
    return EXIT_OK if joint.converged else EXIT_NOT_CONVERGED


def joint_shift(joint, j, x):
    from .mvmodel import marginal_roc_param

    return marginal_roc_param(joint, j, x)


def cmd_simulate(args):
    from .simlab import load_study_config, run_study

    try:
        cfg = load_study_config(args.config)
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc.strerror}") from None
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"invalid study config: {exc}") from None
    R = args.reps if args.reps is not None else cfg["R"]
    seed = args.seed if args.seed is not None else cfg["seed"]
    lod = args.lod if args.lod is not None else cfg["lod"]
    jobs = args.jobs if args.jobs is not None else int(os.environ.get("TRANSROC_JOBS", "1"))
    try:
        result = run_study(cfg["cells"], cfg["estimators"], R=R, level=cfg["level"], seed=seed,
                           n_jobs=jobs, order=cfg["order"], lod=lod, progress=True)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    text = result.to_csv()
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="transroc", description="ROC analysis with linear transformation models."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model and write it as JSON")
    f.add_argument("--data", required=True, help="delimited file with a header row")
    f.add_argument("--out", default="-", help="model file (default: standard output)")
    f.add_argument("--disease", default="d", help="name of the 0/1 disease column")
    f.add_argument("--link", default="logit", choices=["logit", "probit", "cloglog", "loglog"])
    f.add_argument("--order", type=int, default=6, help="Bernstein polynomial order")
    f.add_argument("--support", default="auto", help="'auto' or 'l,u'")
    f.add_argument("--covariates", default="", help="comma separated covariate columns")
    f.add_argument("--interactions", action="store_true",
                   help="let covariates change the ROC curve (disease x covariate terms)")
    f.add_argument("--ordinal", action="store_true", help="y holds category codes 1..K")
    f.add_argument("--max-iter", type=int, default=500)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("roc", help="ROC curve with a confidence band on a 0.001 grid")
    r.add_argument("--model", required=True)
    r.add_argument("--data", help="data file (default: the one recorded in the model)")
    r.add_argument("--at", help="covariate profile, e.g. 'age=40,sex=0'")
    r.add_argument("--band", default="score", choices=["score", "wald-sim"])
    r.add_argument("--conf-level", type=float, default=0.95)
    r.add_argument("--B", type=int, default=1000)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default="-")
    r.set_defaults(func=cmd_roc)

    i = sub.add_parser("indices", help="summary indices with intervals as JSON")
    i.add_argument("--model", required=True)
    i.add_argument("--data")
    i.add_argument("--which", default="auc,youden,threshold,sens,spec,ovl")
    i.add_argument("--ci", default="score", choices=["score", "delta", "simulate"])
    i.add_argument("--conf-level", type=float, default=0.95)
    i.add_argument("--at")
    i.add_argument("--B", type=int, default=1000)
    i.add_argument("--seed", type=int, default=None)
    i.add_argument("--out", default="-")
    i.set_defaults(func=cmd_indices)

    c = sub.add_parser("compare", help="compare correlated tests with a joint probit model")
    c.add_argument("--data", required=True)
    c.add_argument("--tests", required=True, help="comma separated response columns (2 to 4)")
    c.add_argument("--disease", default="d")
    c.add_argument("--covariates", default="")
    c.add_argument("--interactions", action="store_true")
    c.add_argument("--link", default="probit")
    c.add_argument("--order", type=int, default=6)
    c.add_argument("--at")
    c.add_argument("--conf-level", type=float, default=0.95)
    c.add_argument("--B", type=int, default=1000)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--max-iter", type=int, default=500)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("simulate", help="run a simulation study from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--jobs", type=int, default=None,
                   help="parallel workers (default: $TRANSROC_JOBS or 1)")
    s.add_argument("--lod", type=float, default=None,
                   help="left-censor the non-diseased group below this quantile")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_simulate)
    return parser


def _format_warning(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def main(argv=None):
    warnings.formatwarning = _format_warning
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, TransRocError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
