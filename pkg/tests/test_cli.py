import json
import os

import numpy as np
import pytest

from pilotmatch import cli, core
from pilotmatch.cli import main
from pilotmatch.datagen import generate, make_spec


@pytest.fixture
def base_csv(tmp_path):
    path = tmp_path / "base.csv"
    core.write_csv(generate(make_spec("base", 0.5, n=400, c=2.2), seed=3), path)
    return path


class TestGenerate:
    def test_writes_dataset(self, tmp_path):
        out = tmp_path / "ds.csv"
        assert main(["generate", "--seed", "4", "--out", str(out)]) == 0
        ds = core.read_csv(out)
        assert ds.n == 2000 and ds.p == 10

    def test_same_seed_identical_files(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["generate", "--seed", "4", "--out", str(a)])
        main(["generate", "--seed", "4", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_rho_exits_2(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"rho": 1.5}))
        assert main(["generate", "--config", str(cfg),
                     "--out", str(tmp_path / "x.csv")]) == 2

    def test_unknown_config_key_exits_2(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"rno": 0.5}))
        assert main(["generate", "--config", str(cfg),
                     "--out", str(tmp_path / "x.csv")]) == 2

    def test_env_seed_used_when_no_flag(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        monkeypatch.setenv("PILOTMATCH_SEED", "77")
        main(["generate", "--out", str(a)])
        monkeypatch.delenv("PILOTMATCH_SEED")
        main(["generate", "--seed", "77", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        monkeypatch.setenv("PILOTMATCH_SEED", "1")
        main(["generate", "--seed", "2", "--out", str(a)])
        monkeypatch.delenv("PILOTMATCH_SEED")
        main(["generate", "--seed", "2", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestMatch:
    def test_four_artifacts(self, tmp_path, base_csv):
        prefix = str(tmp_path / "run")
        assert main(["match", str(base_csv), "--method", "pilot", "--k", "1",
                     "--seed", "5", "--out-prefix", prefix]) == 0
        for suffix in (".matching.csv", ".estimate.json", ".ac.csv", ".ac.svg"):
            assert os.path.exists(prefix + suffix)
        doc = json.loads(open(prefix + ".estimate.json").read())
        assert np.isfinite(doc["tau_hat"])

    def test_propensity_six_unit_fixture_matches_oracle(self, tmp_path):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(6, 2))
        T = np.array([1, 1, 0, 0, 0, 0])
        Y = rng.normal(size=6)
        ds = core.Dataset(X=X, T=T, Y=Y)
        path = tmp_path / "hand.csv"
        core.write_csv(ds, path)
        prefix = str(tmp_path / "hand")
        assert main(["match", str(path), "--method", "propensity", "--k", "1",
                     "--seed", "1", "--out-prefix", prefix]) == 0
        m = core.read_matching_csv(prefix + ".matching.csv")

        # independent oracle: refit the logit, brute-force the 1:1 optimum
        from pilotmatch import models
        from pilotmatch.distance import build_distances
        from pilotmatch.matching import brute_force_match
        phi = models.predict_linear(models.fit_logistic(X, T), X)
        dm = build_distances(ds, core.PROPENSITY_SCALAR, phi)
        oracle = brute_force_match(dm, 1)
        by_treated = {s.treated: s.controls[0] for s in m.sets}
        total = sum(dm.d[list(dm.rows).index(t), list(dm.cols).index(c)]
                    for t, c in by_treated.items())
        oracle_total = sum(s.set_distance for s in oracle.sets)
        assert total == pytest.approx(oracle_total, abs=1e-9)

    def test_infeasible_k_exits_3(self, tmp_path, base_csv):
        assert main(["match", str(base_csv), "--method", "mahalanobis",
                     "--k", "999", "--seed", "1",
                     "--out-prefix", str(tmp_path / "x")]) == 3

    def test_bad_k_exits_2(self, tmp_path, base_csv):
        assert main(["match", str(base_csv), "--method", "pilot", "--k", "zero",
                     "--seed", "1", "--out-prefix", str(tmp_path / "x")]) == 2

    def test_missing_dataset_exits_4(self, tmp_path):
        assert main(["match", str(tmp_path / "absent.csv"), "--method", "pilot",
                     "--k", "1", "--seed", "1",
                     "--out-prefix", str(tmp_path / "x")]) == 4


class TestSimulate:
    def test_smoke_run(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({
            "scenario": "base", "methods": ["pilot"], "k_values": [1],
            "rho_values": [0.5], "replicates": 2, "base_seed": 1,
            "compute_gamma": False}))
        out = tmp_path / "out"
        assert main(["simulate", str(cfg), "--out-dir", str(out)]) == 0
        for name in ("results.csv", "aggregates.csv", "manifest.json"):
            assert (out / name).exists()

    def test_rerun_identical(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({
            "methods": ["mahalanobis"], "k_values": [1], "rho_values": [0.5],
            "replicates": 2, "base_seed": 1, "compute_gamma": False}))
        a, b = tmp_path / "a", tmp_path / "b"
        main(["simulate", str(cfg), "--out-dir", str(a)])
        main(["simulate", str(cfg), "--out-dir", str(b), "--jobs", "2"])
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()

    def test_unknown_key_exits_2(self, tmp_path):
        cfg = tmp_path / "sim.json"
        cfg.write_text(json.dumps({"replicates": 1, "mystery": True}))
        assert main(["simulate", str(cfg),
                     "--out-dir", str(tmp_path / "o")]) == 2


class TestSensitivity:
    def test_matches_library_call(self, tmp_path, base_csv):
        prefix = str(tmp_path / "run")
        main(["match", str(base_csv), "--method", "pilot", "--k", "1",
              "--seed", "5", "--out-prefix", prefix])
        assert main(["sensitivity", prefix + ".matching.csv", str(base_csv),
                     "--curve", str(tmp_path / "curve.json")]) == 0
        doc = json.loads((tmp_path / "curve.json").read_text())
        est = json.loads(open(prefix + ".estimate.json").read())
        assert doc["gamma_star"] == pytest.approx(est["gamma_star"])

    def test_bad_alpha_exits_2(self, tmp_path, base_csv):
        prefix = str(tmp_path / "run")
        main(["match", str(base_csv), "--method", "pilot", "--k", "1",
              "--seed", "5", "--out-prefix", prefix])
        assert main(["sensitivity", prefix + ".matching.csv", str(base_csv),
                     "--alpha", "2.0"]) == 2


class TestAcplot:
    def test_render_from_csv(self, tmp_path, base_csv):
        prefix = str(tmp_path / "run")
        main(["match", str(base_csv), "--method", "mahalanobis", "--k", "1",
              "--seed", "5", "--out-prefix", prefix])
        out = tmp_path / "plot.svg"
        assert main(["acplot", prefix + ".ac.csv", "--out", str(out)]) == 0
        assert out.read_text().startswith("<svg")


def test_version_reports_rng(capsys):
    code = main(["--version"])
    assert code == 0
    out = capsys.readouterr().out
    assert "pilotmatch" in out and "philox" in out
