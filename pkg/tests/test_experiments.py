import csv
import json

import numpy as np
import pytest

from frechetlab import experiments
from frechetlab.experiments import WsnConfig, required_region_size, run_study, run_wsn_experiment
from frechetlab.rng import StreamFactory


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_wsn_config_validation():
    with pytest.raises(ValueError):
        WsnConfig(radii=(10, 5))
    with pytest.raises(ValueError):
        WsnConfig(reliable_fraction=1.5)


def test_wsn_small_run_shape():
    table = run_wsn_experiment(WsnConfig(trials=60, radii=(5.0, 10.0)), StreamFactory(1))
    assert [r.radius for r in table.rows] == [5.0, 10.0]
    for r in table.rows:
        assert r.frechet_mse < r.euclidean_mse
        assert 0 <= r.win_rate <= 1


def test_wsn_all_reliable_gives_equal_estimators():
    cfg = WsnConfig(trials=30, radii=(5.0, 10.0, 15.0), reliable_fraction=1.0)
    for r in run_wsn_experiment(cfg, StreamFactory(2)).rows:
        assert r.frechet_mse == pytest.approx(r.euclidean_mse, rel=1e-9)


def test_required_region_size():
    assert required_region_size(2.0, 0.1, 0.05) == pytest.approx(400.0)
    with pytest.raises(ValueError):
        required_region_size(2.0, 0.1, 0.0)


def test_run_study_writes_outputs(tmp_path):
    entry = run_study("wsn", tmp_path, 7, trials=20)
    assert entry["ok"] and entry["study"] == "wsn"
    rows = read_csv(tmp_path / "wsn_mse.csv")
    assert [float(r["R"]) for r in rows] == [5, 10, 15, 20]
    assert json.loads((tmp_path / "wsn_summary.json").read_text())["rows"][0]["trials"] == 20


def test_bandit_study_outputs(tmp_path):
    entry = run_study("bandit", tmp_path, 3, trials=2, params={"horizon": 60})
    for name in ("classical_ucb", "frechet_ucb"):
        rows = read_csv(tmp_path / f"bandit_{name}.csv")
        assert len(rows) == 60 and list(rows[0]) == ["round", "mean_cum_regret", "ci95"]
        meta = json.loads((tmp_path / f"bandit_{name}.json").read_text())
        assert meta["seed"] == 3 and meta["env"]["horizon"] == 60 and meta["policy"] == name
    manifest = experiments.write_manifest(tmp_path, 3, [entry])
    assert [s["study"] for s in manifest["studies"]] == ["bandit_classical_ucb", "bandit_frechet_ucb"]


def test_studies_are_deterministic(tmp_path):
    for name, params in (("semantic", {"fractions": [0.5]}), ("bounds", None)):
        a, b = tmp_path / f"{name}a", tmp_path / f"{name}b"
        run_study(name, a, 11, trials=50, params=params)
        run_study(name, b, 11, trials=50, params=params)
        for f in sorted(a.iterdir()):
            assert f.read_bytes() == (b / f.name).read_bytes()


def test_seed_changes_output(tmp_path):
    run_study("wsn", tmp_path / "a", 1, trials=20)
    run_study("wsn", tmp_path / "b", 2, trials=20)
    assert (tmp_path / "a/wsn_mse.csv").read_bytes() != (tmp_path / "b/wsn_mse.csv").read_bytes()


def test_palm_study_small(tmp_path):
    summary = run_study("palm", tmp_path, 5, trials=200, params={"palm_draws": 2000})["summary"]
    assert len(summary["pairs"]) == 2
    assert (tmp_path / "palm.csv").exists()
    errs = summary["pairs"][0]["typical_relative_errors"]
    assert set(errs) == {"fisher_rao", "wasserstein2"}


def test_reproduce_all_small(tmp_path):
    params = {"palm": {"palm_draws": 200}, "bandit": {"horizon": 30}, "semantic": {"fractions": [0.5]}}
    out, manifest, entries = experiments.reproduce_all(1, tmp_path, trials=20, params=params)
    assert len(entries) == 6 and len(manifest["studies"]) == 7
    assert {"seed", "created", "versions", "studies"} <= set(manifest)
    assert (out / "clt" / "clt_mse.csv").exists()
    assert np.isfinite(manifest["studies"][0]["wall_clock_s"])
