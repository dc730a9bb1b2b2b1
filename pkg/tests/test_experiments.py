import csv
import json
import math

import pytest

from multifilter.experiments import (
    EXPERIMENTS,
    ExperimentSpec,
    binomial_se,
    run_experiment,
    sim_seed,
    spec_from_dict,
)

FAST = dict(n_sims=100, q_sims=1000)


def test_spec_validation():
    with pytest.raises(ValueError, match="valid names"):
        ExperimentSpec("nope")
    with pytest.raises(ValueError, match="100"):
        ExperimentSpec("detection", n_sims=99)
    with pytest.raises(ValueError, match="100"):
        ExperimentSpec("detection", n_sims=1000, scale=0.05)
    with pytest.raises(ValueError):
        ExperimentSpec("detection", means=())
    with pytest.raises(ValueError):
        ExperimentSpec("detection", alpha=1.0)
    assert ExperimentSpec("sigLevelConstantRate").experiment == "sig-level-constant"
    assert ExperimentSpec("detection", n_sims=1000, scale=5).sims == 5000


def test_spec_from_dict_lists():
    spec = spec_from_dict({"experiment": "fig3", "means": [0.25, 0.5], "n_sims": 200})
    assert spec.means == (0.25, 0.5) and spec.sims == 200


def test_sim_seed_is_stable_and_distinct():
    assert sim_seed(0, 1, 2) == sim_seed(0, 1, 2)
    assert len({sim_seed(0, c, i) for c in range(5) for i in range(200)}) == 1000


def test_binomial_se():
    assert binomial_se(0.5, 100) == 0.05
    assert binomial_se(0.0, 10) == 0.0
    assert math.isnan(binomial_se(0.1, 0))


def test_sig_level_alpha_zero_never_rejects():
    rep = run_experiment(ExperimentSpec("sig-level-constant", alpha=0.0, **FAST))
    assert rep.rows[0]["rate"] == 0.0 and rep.rows[0]["Q"] == math.inf


def test_sig_level_rows(tmp_path):
    spec = ExperimentSpec("sig-level-constant", means=(0.25, 0.5), sds=(0.125,), **FAST)
    rep = run_experiment(spec)
    assert len(rep.rows) == 2
    for r in rep.rows:
        assert 0 <= r["rate"] <= 1
        assert r["se"] == pytest.approx(binomial_se(r["rate"], r["n_sims"]))
        assert r["rejections"] == round(r["rate"] * r["n_sims"])
    paths = rep.write(tmp_path)
    names = {p.name for p in paths}
    assert names == {"sig-level-constant.csv", "sig-level-constant.json", "sig-level-constant.svg"}
    rows = list(csv.DictReader(open(tmp_path / "sig-level-constant.csv")))
    assert [float(r["mu"]) for r in rows] == [0.25, 0.5]
    side = json.loads((tmp_path / "sig-level-constant.json").read_text())
    assert side["config"]["n_sims"] == 100 and "runtime" not in side


def test_reports_are_worker_independent(tmp_path):
    spec = ExperimentSpec("sig-level-random", **FAST)
    a = run_experiment(spec, workers=1)
    b = run_experiment(spec, workers=3)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for name in ("sig-level-random.csv", "sig-level-random.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_only_within_noise():
    a = run_experiment(ExperimentSpec("ablation", seed=0, **FAST))
    b = run_experiment(ExperimentSpec("ablation", seed=1, **FAST))
    for ra, rb in zip(a.rows, b.rows):
        assert abs(ra["rate"] - rb["rate"]) <= 4 * math.hypot(ra["se"], rb["se"]) + 0.02


def test_detection_rows_and_monotonicity():
    rep = run_experiment(ExperimentSpec("detection", n_sims=200, q_sims=1000))
    alls = [r for r in rep.rows if r["factor"] == "all"]
    assert {r["design"] for r in alls} == {"homogeneous", "inhomogeneous"}
    for r in rep.rows:
        assert 0 <= r["rate"] <= 1 and r["n_detected"] <= r["n_true"]
    homog = {r["factor"]: r for r in rep.rows if r["design"] == "homogeneous"}
    # a doubling of the variance is found more often than a 1.4-fold change
    assert homog["2"]["rate"] > homog["1.4"]["rate"]
    total = sum(r["n_true"] for r in rep.rows if r["design"] == "homogeneous" and r["factor"] != "all")
    assert total == homog["all"]["n_true"]


def test_detection_zero_magnitude_control():
    spec = ExperimentSpec("detection", variance_factors=(1.0, 1.0, 1.0, 1.0), **FAST)
    rep = run_experiment(spec)
    homog = next(r for r in rep.rows if r["design"] == "homogeneous" and r["factor"] == "all")
    assert homog["n_true"] > 0
    assert homog["rate"] < 0.1


def test_fig3_report(tmp_path):
    rep = run_experiment(ExperimentSpec("fig3", **FAST))
    assert len(rep.rows) == 100
    assert sorted(r["n_rate"] for r in rep.rows)[50] == 2
    paths = rep.write(tmp_path)
    assert (tmp_path / "fig3.svg").read_text().startswith("<?xml")


def test_limit_comparison_small(tmp_path):
    spec = ExperimentSpec("limit-comparison", q_sims=1000)
    from multifilter.experiments import run_limit_comparison
    rep = run_limit_comparison(spec, cov_sims=500)
    assert [r["set"] for r in rep.rows] == ["A", "B"]
    cov = rep.tables["covariance"][1]
    at_zero = [r for r in cov if r["offset"] == 0.0]
    for r in at_zero:
        assert r["cov_L"] == pytest.approx(1.0, abs=0.15)
    far = [r for r in cov if abs(r["offset"]) >= 200.0]
    assert all(abs(r["cov_L"]) < 0.15 for r in far)
    rep.write(tmp_path)
    assert (tmp_path / "limit-comparison_covariance.csv").exists()


def test_every_experiment_is_registered():
    from multifilter.experiments import RUNNERS
    assert set(RUNNERS) == set(EXPERIMENTS)
