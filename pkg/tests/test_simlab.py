import json
import math

import numpy as np
import pytest
from scipy import special, stats

from transroc import rocmetrics as rm
from transroc.exceptions import NoRootError
from transroc.simlab import (
    CSV_COLUMNS,
    DgpConfig,
    apply_lod,
    load_study_config,
    replication_rng,
    run_replication,
    run_study,
    sample_dataset,
    solve_delta,
)

from conftest import LINK_NAMES


@pytest.mark.parametrize("link", LINK_NAMES)
def test_solve_delta_at_chance(link):
    assert solve_delta(link, "auc", 0.5) == 0.0
    assert solve_delta(link, "youden", 0.0) == 0.0


def test_solve_delta_closed_forms():
    assert solve_delta("probit", "auc", 0.8) == pytest.approx(math.sqrt(2) * special.ndtri(0.8), abs=1e-9)
    assert solve_delta("probit", "auc", 0.8) == pytest.approx(1.19024, abs=1e-5)
    assert solve_delta("cloglog", "auc", 0.8) == pytest.approx(math.log(4), abs=1e-9)


@pytest.mark.parametrize("link", LINK_NAMES)
@pytest.mark.parametrize("target, value", [("auc", 0.6), ("auc", 0.95), ("youden", 0.3), ("youden", 0.8)])
def test_solve_delta_inverts_index(link, target, value):
    delta = solve_delta(link, target, value)
    assert rm.index_value(target, link, delta) == pytest.approx(value, abs=1e-9)


def test_solve_delta_out_of_range():
    with pytest.raises(NoRootError):
        solve_delta("logit", "auc", 1.2)
    with pytest.raises(ValueError):
        DgpConfig("probit", "auc", 0.3)


def test_null_dgp_gives_standard_normal_diseased():
    cfg = DgpConfig("logit", "auc", 0.5, 10, 10_000)
    data = sample_dataset(cfg, replication_rng(5, 0, 0))
    assert stats.kstest(data.upper[data.disease == 1], "norm").pvalue > 0.01


@pytest.mark.parametrize("link", LINK_NAMES)
def test_sample_auc_matches_target(link):
    cfg = DgpConfig(link, "auc", 0.8, 100_000, 100_000)
    data = sample_dataset(cfg, replication_rng(1, 0, 0))
    y0, y1 = data.upper[data.disease == 0], data.upper[data.disease == 1]
    mww = stats.mannwhitneyu(y1, y0).statistic / (y0.size * y1.size)
    assert mww == pytest.approx(0.8, abs=0.003)


def test_cloglog_arm_is_right_skewed():
    cfg = DgpConfig("cloglog", "auc", 0.95, 10, 20_000)
    data = sample_dataset(cfg, replication_rng(2, 0, 0))
    assert stats.skew(data.upper[data.disease == 1]) > 0


def test_streams_are_keyed_by_cell_and_replication():
    a = replication_rng(3, 1, 7).standard_normal(5)
    np.testing.assert_array_equal(a, replication_rng(3, 1, 7).standard_normal(5))
    assert not np.array_equal(a, replication_rng(3, 1, 8).standard_normal(5))
    assert not np.array_equal(a, replication_rng(3, 2, 7).standard_normal(5))


def test_observation_form_matches_arrays():
    cfg = DgpConfig("probit", "auc", 0.7, 5, 6)
    obs = sample_dataset(cfg, replication_rng(0, 0, 0), as_observations=True)
    data = sample_dataset(cfg, replication_rng(0, 0, 0))
    assert [o.upper for o in obs] == data.upper.tolist()


def test_lod_censors_the_lowest_fifth_of_nondiseased():
    cfg = DgpConfig("probit", "auc", 0.8, 1000, 1000)
    data = sample_dataset(cfg, replication_rng(0, 0, 0))
    cens, lod = apply_lod(data, 0.2)
    left = np.isneginf(cens.lower)
    assert left.sum() == 200 and not np.any(left & (cens.disease == 1))
    assert np.all(cens.upper[left] == lod)


def test_replication_records_estimates_and_failures():
    cfg = DgpConfig("probit", "auc", 0.8, 50, 50)
    recs = run_replication(cfg, ["probit", "logit"], 0.9, 0, 0, 0, null_test=True)
    for r in recs:
        assert r["ok"] and r["lower"] <= r["auc"] <= r["upper"] and 0 <= r["p_value"] <= 1


def test_study_is_identical_serial_and_parallel():
    cells = [DgpConfig("probit", "auc", 0.8, 20, 20)]
    a = run_study(cells, ["boxcox"], R=100, seed=9, n_jobs=1).to_csv()
    b = run_study(cells, ["boxcox"], R=100, seed=9, n_jobs=2).to_csv()
    assert a == b
    header, row = a.strip().split("\n")
    assert tuple(header.split(",")) == CSV_COLUMNS
    assert row.startswith("probit,probit,0.8,20,")


def test_study_config_validation(tmp_path):
    good = {"cells": [{"link": "probit", "target": "auc", "value": 0.8, "n0": 50, "n1": 50}],
            "estimators": ["colr"], "replications": 200}
    path = tmp_path / "study.json"
    path.write_text(json.dumps(good))
    cfg = load_study_config(str(path))
    assert cfg["R"] == 200 and cfg["cells"][0].delta == pytest.approx(solve_delta("probit", "auc", 0.8))
    for bad in ({"cells": []}, {"cells": [{"link": "probit", "size": 3}]},
                {"cells": good["cells"], "estimators": ["weibull"]}):
        with pytest.raises(ValueError):
            load_study_config(bad)
    with pytest.raises(ValueError):
        run_study(good["cells"], ["probit"], R=10)
