import csv
import json

import numpy as np
import pytest

from transroc import rocmetrics as rm
from transroc.cli import main
from transroc.fit import FittedModel, fit_mle
from transroc.inference import index_interval, score_ci
from transroc.model import Dataset

from conftest import make_spec, two_sample

pytestmark = pytest.mark.filterwarnings("ignore::transroc.exceptions.FlatTransformationWarning")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


@pytest.fixture
def two_file(tmp_path):
    y, d = two_sample(400, 400, 1.492, seed=3)
    x = np.random.default_rng(3).normal(size=y.size)
    return write_csv(tmp_path / "two.csv", ["y", "d", "age"], zip(y, d, x)), y, d


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_fit_recovers_shift(two_file, tmp_path, capsys):
    path, y, d = two_file
    model = tmp_path / "m.json"
    code, _, _ = run(["fit", "--data", path, "--link", "probit", "--out", model], capsys)
    assert code == 0
    doc = json.loads(model.read_text())
    se = np.sqrt(doc["vcov_beta"][0][0])
    assert abs(doc["estimates"]["beta"][0] - 1.492) < 3 * se
    assert doc["spec"]["link"] == "probit" and doc["spec"]["basis"]["order"] == 6
    assert doc["convergence"]["converged"] is True
    assert doc["tool"]["name"] == "transroc" and doc["tool"]["version"]


def test_fit_default_link_is_logit_and_output_is_deterministic(two_file, tmp_path, capsys):
    path, _, _ = two_file
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["fit", "--data", path, "--out", a], capsys)
    run(["fit", "--data", path, "--out", b], capsys)
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["spec"]["link"] == "logit"


def test_ordinal_binary_fit_is_log_odds_ratio(tmp_path, capsys):
    rng = np.random.default_rng(0)
    d = np.r_[np.zeros(300, int), np.ones(250, int)]
    y = np.where(rng.uniform(size=d.size) < np.where(d == 1, 0.7, 0.35), 2, 1)
    path = write_csv(tmp_path / "ord.csv", ["y", "d"], zip(y, d))
    model = tmp_path / "o.json"
    assert run(["fit", "--data", path, "--ordinal", "--out", model], capsys)[0] == 0
    n11 = np.sum((y == 2) & (d == 1)); n10 = np.sum((y == 1) & (d == 1))
    n01 = np.sum((y == 2) & (d == 0)); n00 = np.sum((y == 1) & (d == 0))
    log_or = np.log(n11 * n00 / (n10 * n01))
    assert json.loads(model.read_text())["estimates"]["beta"][0] == pytest.approx(log_or, abs=1e-6)


def test_censored_response_columns(tmp_path, capsys):
    y, d = two_sample(200, 200, 1.0, seed=1)
    lo = np.where(y < -1, "", y.astype(str))
    hi = np.where(y < -1, "-1", y.astype(str))
    hi[y > 2] = "inf"
    path = write_csv(tmp_path / "c.csv", ["y_lo", "y_hi", "d"], zip(lo, hi, d))
    assert run(["fit", "--data", path, "--out", tmp_path / "c.json"], capsys)[0] == 0


@pytest.mark.parametrize(
    "header, rows, message",
    [(["y", "d"], [[1, 0], [2, 0], [3, 0]], "disease group empty"),
     (["y", "d"], [[1, 0], ["x", 1], [2, 1]], "row 3, column 'y'"),
     (["y", "d", "age"], [[1, 0, 2], [2, 1, ""], [3, 1, 1]], "column 'age': missing values in rows [3]"),
     (["y", "d"], [[1, 0], [2, 3]], "column 'd'"),
     (["z", "d"], [[1, 0], [2, 1]], "need column 'y'")],
)
def test_malformed_input_exits_with_one(tmp_path, capsys, header, rows, message):
    path = write_csv(tmp_path / "bad.csv", header, rows)
    covs = ["--covariates", "age"] if "age" in header else []
    code, _, err = run(["fit", "--data", path, *covs], capsys)
    assert code == 1 and message in err


def test_not_converged_exit_two_still_writes(two_file, tmp_path, capsys):
    path, _, _ = two_file
    model = tmp_path / "m.json"
    code, _, _ = run(["fit", "--data", path, "--max-iter", "1", "--out", model], capsys)
    assert code == 2
    assert json.loads(model.read_text())["convergence"]["converged"] is False


def fixture_model(tmp_path, beta, link="logit", covariates=(), vcov=None):
    order = 6
    doc = {
        "spec": {"link": link, "basis": {"type": "bernstein", "order": order, "support": [-10, 10]},
                 "covariates": list(covariates), "interactions": True},
        "estimates": {"beta": list(beta), "theta": list(np.linspace(-10, 10, order + 1))},
        "vcov_beta": vcov if vcov is not None else (0.01 * np.eye(len(beta))).tolist(),
    }
    path = tmp_path / "fixture.json"
    path.write_text(json.dumps(doc))
    return path


def read_grid(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("p", "roc", "lower", "upper")}


def test_roc_zero_shift_is_diagonal(tmp_path, capsys):
    model = fixture_model(tmp_path, [0.0])
    out = tmp_path / "roc.csv"
    assert run(["roc", "--model", model, "--band", "wald-sim", "--seed", 1, "--out", out], capsys)[0] == 0
    grid = read_grid(out)
    np.testing.assert_array_equal(grid["roc"], grid["p"])
    assert grid["p"].size == 1001 and grid["p"][1] == 0.001


def test_roc_score_band_contains_curve(two_file, tmp_path, capsys):
    path, _, _ = two_file
    model, out = tmp_path / "m.json", tmp_path / "roc.csv"
    run(["fit", "--data", path, "--out", model], capsys)
    assert run(["roc", "--model", model, "--out", out], capsys)[0] == 0
    g = read_grid(out)
    assert np.all((g["lower"] <= g["roc"]) & (g["roc"] <= g["upper"]))


def test_logit_fixture_auc(tmp_path, capsys):
    model = fixture_model(tmp_path, [2.785])
    code, out, _ = run(["indices", "--model", model, "--which", "auc,youden", "--ci", "delta"], capsys)
    assert code == 0
    report = {e["index"]: e for e in json.loads(out)["indices"]}
    assert f"{report['auc']['estimate']:.3f}" == "0.871"
    assert f"{report['youden']['estimate']:.3f}" == "0.602"


def test_indices_report_and_roundtrip(two_file, tmp_path, capsys):
    path, y, d = two_file
    model = tmp_path / "m.json"
    run(["fit", "--data", path, "--link", "cloglog", "--out", model], capsys)
    code, out, _ = run(["indices", "--model", model], capsys)
    assert code == 0
    report = {e["index"]: e for e in json.loads(out)["indices"]}
    assert set(report) == set(rm.INDEX_KINDS)
    assert report["ovl"]["estimate"] == pytest.approx(1 - report["youden"]["estimate"], abs=1e-15)
    assert report["ovl"]["lower"] == pytest.approx(1 - report["youden"]["upper"], abs=1e-15)
    assert report["threshold"]["method"] == "simulate"
    assert "simulated instead" in report["threshold"]["note"]
    # the same numbers straight from the library
    data = Dataset.from_arrays(y, d)
    direct = fit_mle(FittedModel.from_dict(json.loads(model.read_text())).spec, data)
    ci = score_ci(direct.spec, data, 0.95, fitted=direct)
    est = index_interval(direct, "auc", "score", 0.95, delta_interval=ci)
    assert report["auc"]["estimate"] == est.point
    assert (report["auc"]["lower"], report["auc"]["upper"]) == pytest.approx((est.lower, est.upper), abs=1e-6)


def test_simulate_method_is_byte_reproducible(two_file, tmp_path, capsys):
    path, _, _ = two_file
    model = tmp_path / "m.json"
    run(["fit", "--data", path, "--out", model], capsys)
    argv = ["indices", "--model", model, "--ci", "simulate", "--seed", 5, "--B", 500]
    assert run(argv, capsys)[1] == run(argv, capsys)[1]


def test_threshold_outside_support_reported_as_null(tmp_path, capsys):
    model = fixture_model(tmp_path, [1.0, 1.0, 0.0], covariates=("age",))
    code, out, _ = run(["indices", "--model", model, "--which", "threshold", "--ci", "simulate",
                        "--at", "age=50", "--seed", 1], capsys)
    assert code == 0
    entry = json.loads(out)["indices"][0]
    assert entry["estimate"] is None and "outside" in entry["note"]


def test_profile_mismatch_exits_with_one(tmp_path, capsys):
    model = fixture_model(tmp_path, [1.0, 0.5, 0.2], covariates=("age",))
    code, _, err = run(["indices", "--model", model, "--at", "sex=1", "--ci", "delta"], capsys)
    assert code == 1 and "--at" in err
    code, _, _ = run(["roc", "--model", model, "--at", "1,2", "--band", "wald-sim"], capsys)
    assert code == 1


def joint_file(tmp_path, lam_corr, seed=0, duplicate=False):
    rng = np.random.default_rng(seed)
    n = 600
    d = np.r_[np.zeros(n), np.ones(n)].astype(int)
    z = rng.multivariate_normal([0, 0], [[1, lam_corr], [lam_corr, 1]], size=2 * n)
    t1 = z[:, 0] + 1.2 * d
    t2 = t1 if duplicate else z[:, 1] + 0.7 * d
    return write_csv(tmp_path / "joint.csv", ["t1", "t2", "d"], zip(t1, t2, d))


def test_compare_independent_tests(tmp_path, capsys):
    path = joint_file(tmp_path, 0.0)
    code, out, _ = run(["compare", "--data", path, "--tests", "t1,t2", "--seed", 1], capsys)
    assert code == 0
    report = json.loads(out)
    cmp = report["comparisons"][0]
    assert report["tests"] == ["t1", "t2"]
    assert abs(cmp["correlation"]) < 3 * (1 / np.sqrt(1200))
    assert cmp["difference"]["auc"]["lower"] > 0


def test_compare_duplicated_column(tmp_path, capsys):
    path = joint_file(tmp_path, 0.0, duplicate=True)
    code, out, _ = run(["compare", "--data", path, "--tests", "t1,t2", "--seed", 1], capsys)
    cmp = json.loads(out)["comparisons"][0]
    assert abs(cmp["difference"]["auc"]["estimate"]) < 1e-3
    assert any("bound" in note for note in cmp["notes"])


def test_compare_requires_probit(tmp_path, capsys):
    path = joint_file(tmp_path, 0.0)
    code, _, err = run(["compare", "--data", path, "--tests", "t1,t2", "--link", "logit"], capsys)
    assert code == 1 and "probit" in err


def study_config(tmp_path, **extra):
    cfg = {"cells": [{"link": "probit", "target": "auc", "value": 0.8, "n0": 15, "n1": 15}],
           "estimators": ["boxcox"], "replications": 100, "seed": 2, **extra}
    path = tmp_path / "study.json"
    path.write_text(json.dumps(cfg))
    return path


def test_simulate_smoke_and_parallel_identity(tmp_path, capsys):
    cfg = study_config(tmp_path)
    code, serial, err = run(["simulate", "--config", cfg, "--jobs", 1], capsys)
    assert code == 0 and "cell 1/1" in err
    rows = list(csv.DictReader(serial.splitlines()))
    assert len(rows) == 1 and rows[0]["failures"] == "0" and rows[0]["R"] == "100"
    code, parallel, _ = run(["simulate", "--config", cfg, "--jobs", 8], capsys)
    assert parallel == serial


def test_simulate_invalid_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"cells": [{"link": "probit", "value": 2}]}')
    assert run(["simulate", "--config", path], capsys)[0] == 1
    path.write_text("not json")
    assert run(["simulate", "--config", path], capsys)[0] == 1
