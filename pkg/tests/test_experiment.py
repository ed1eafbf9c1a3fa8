import json
import math
import os
import warnings

import jsonschema
import numpy as np
import pytest

from gtgmix import experiment as ex


def test_config_parse_and_dump_round_trip(tmp_path):
    text = """
    # ensemble
    sizes = 200, 400
    seeds = 2   # per size
    c = auto
    weights = pareto:3
    paths = off
    out = res
    """
    cfg = ex.ExperimentConfig.parse(text, base_dir=str(tmp_path))
    assert cfg.sizes == (200, 400) and cfg.seeds == 2 and cfg.c is None
    assert cfg.dist.spec() == "pareto:3" and not cfg.paths
    assert cfg.out == os.path.join(str(tmp_path), "res")
    assert ex.ExperimentConfig.parse(cfg.dump()) == cfg


@pytest.mark.parametrize("text, fragment", [
    ("seeds = 3", "sizes is required"),
    ("sizes = 100\nsizes = 200", "duplicate"),
    ("sizes = 100\ncolour = red", "unknown key"),
    ("sizes = 100\nseeds", "key=value"),
    ("sizes = 100\nseeds = many", "bad value"),
    ("sizes = 200, 100", "ascending"),
    ("sizes = 100\nc = -1", "c must"),
    ("sizes = 100\nweights = gauss", "weight"),
    ("sizes = 100\npaths = maybe", "bad value"),
    ("sizes = 100\nlaziness = 1", "laziness"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ex.ConfigError, match=fragment):
        ex.ExperimentConfig.parse(text)


def test_auto_values():
    cfg = ex.ExperimentConfig(sizes=(100,))
    assert cfg.c_value == pytest.approx(0.9 / (5 * math.e), rel=1e-12)
    assert cfg.alpha_value == pytest.approx(1 / math.e, abs=1e-6)
    assert cfg.instance_seed(100, 0) != cfg.instance_seed(200, 0)
    assert cfg.instance_seed(100, 1) == ex.ExperimentConfig(sizes=(5, 100)).instance_seed(100, 1)


def test_single_instance_record_is_valid():
    cfg = ex.ExperimentConfig(sizes=(300,), seeds=1)
    rec, timings = ex.run_instance(cfg, 300, 0)
    ex.validate_record(rec)
    assert rec["status"] == "ok" and rec["analysis"]["connected"]
    assert rec["paths"]["mode"] == "exact" and rec["paths"]["resamples"] == 0
    m = rec["mixing"]
    assert m["tau_mode"] == "exact" and m["bound_satisfied"] is True
    assert m["bound"] == pytest.approx(2 * m["bound_raw"])
    assert set(timings) == {"generate", "analyze", "paths", "mix"}
    # records are time-free so reruns compare byte for byte
    assert "time" not in json.dumps(rec)


def test_disconnected_instance_skips_walk():
    cfg = ex.ExperimentConfig(sizes=(200,), seeds=1, c=40.0)
    rec, _ = ex.run_instance(cfg, 200, 0)
    ex.validate_record(rec)
    assert not rec["analysis"]["connected"]
    assert rec["paths"] is None and rec["mixing"] is None


def test_failures_are_captured_in_record():
    # a tiny alpha leaves cubes with low nodes and no high node
    cfg = ex.ExperimentConfig(sizes=(300,), seeds=1, alpha=0.001, c=0.02)
    rec, _ = ex.run_instance(cfg, 300, 0)
    ex.validate_record(rec)
    assert rec["status"] == "error"
    assert rec["error"]["stage"] == "paths" and rec["error"]["type"] == "RepresentativeError"


def test_ensemble_outputs_and_byte_identical_rerun(tmp_path):
    cfg = ex.ExperimentConfig(sizes=(150, 250), seeds=2, out=str(tmp_path / "a"), gap=False)
    res = ex.run_ensemble(cfg)
    assert len(res.records) == 4 and res.failures == 0
    assert [r["n"] for r in res.records] == [150, 150, 250, 250]
    files = sorted(os.listdir(tmp_path / "a" / "records"))
    assert files == ["n150_s0.json", "n150_s1.json", "n250_s0.json", "n250_s1.json"]
    for name in ("config.txt", "summary.csv", "fits.json", "run.log"):
        assert (tmp_path / "a" / name).exists()
    fits = json.loads((tmp_path / "a" / "fits.json").read_text())
    assert "error" in fits["tau"]
    cfg2 = ex.ExperimentConfig(sizes=(150, 250), seeds=2, out=str(tmp_path / "b"), gap=False,
                               workers=2)
    ex.run_ensemble(cfg2)
    for name in files:
        a = (tmp_path / "a" / "records" / name).read_bytes()
        b = (tmp_path / "b" / "records" / name).read_bytes()
        assert a == b
    loaded = ex.load_records(str(tmp_path / "a"))
    assert loaded == res.records


def _fake(n, tau, gap=None, status="ok"):
    return {"n": n, "d": 2, "status": status, "mixing": {"tau": tau, "gap": gap}}


def test_fit_scaling_recovers_exact_power_laws():
    sizes = [100, 200, 400, 800]
    recs = [_fake(n, 7 * n, gap=1 / n**2) for n in sizes for _ in range(5)]
    fit = ex.fit_scaling(recs, "tau")
    assert abs(fit.exponent - 1.0) <= 1e-9 and fit.r2 == pytest.approx(1.0)
    assert fit.prediction == 1.0
    assert abs(ex.fit_scaling(recs, "relaxation").exponent - 2.0) <= 1e-9


def test_fit_scaling_uses_medians_and_skips_failures():
    recs = [_fake(n, n * f) for n in [10, 20, 40, 80] for f in (1, 1, 1, 50, 1 / 50)]
    recs += [_fake(10, 10**9, status="error")]
    assert ex.fit_scaling(recs).exponent == pytest.approx(1.0, abs=1e-12)


def test_fit_scaling_needs_data():
    with pytest.raises(ValueError, match="sizes"):
        ex.fit_scaling([_fake(n, n) for n in [10, 20, 40] for _ in range(5)])
    with pytest.raises(ValueError, match="seeds"):
        ex.fit_scaling([_fake(n, n) for n in [10, 20, 40, 80] for _ in range(4)])
    with pytest.raises(ValueError):
        ex.fit_scaling([_fake(10, 1)], metric="speed")


def test_plots(tmp_path):
    with pytest.warns(UserWarning):
        assert ex.emit_plots([], str(tmp_path / "none")) == []
    assert not (tmp_path / "none").exists()
    cfg = ex.ExperimentConfig(sizes=(150,), seeds=1, out=str(tmp_path / "one"))
    res = ex.run_ensemble(cfg, write=False)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        written = ex.emit_plots(res.records, str(tmp_path / "one"))
    names = sorted(os.path.basename(p) for p in written)
    assert names == ["degree_hist.svg", "load_hist.svg", "relaxation_vs_n.svg", "tau_vs_n.svg"]
    svg = (tmp_path / "one" / "tau_vs_n.svg").read_text()
    # one instance is too little for a fit, so no slope line is drawn
    assert "slope" not in svg


def test_schema_rejects_bad_records():
    cfg = ex.ExperimentConfig(sizes=(120,), seeds=1, paths=False, tau=False)
    rec, _ = ex.run_instance(cfg, 120, 0)
    ex.validate_record(rec)
    with pytest.raises(jsonschema.ValidationError, match="version"):
        ex.validate_record({**rec, "schema": "gtgmix.record/0"})
    with pytest.raises(jsonschema.ValidationError):
        ex.validate_record({**rec, "extra": 1})
    with pytest.raises(jsonschema.ValidationError):
        ex.validate_record({**rec, "status": "maybe"})


def test_load_records_rejects_unknown_version(tmp_path):
    cfg = ex.ExperimentConfig(sizes=(120,), seeds=1, paths=False, tau=False, gap=False,
                              out=str(tmp_path))
    ex.run_ensemble(cfg)
    path = tmp_path / "records" / "n120_s0.json"
    rec = json.loads(path.read_text())
    path.write_text(json.dumps({**rec, "schema": "gtgmix.record/2"}))
    with pytest.raises(jsonschema.ValidationError, match="unknown record version"):
        ex.load_records(str(tmp_path))
    assert ex.load_records(str(tmp_path / "missing")) == []


def test_clean_maps_nonfinite_to_null():
    out = ex._clean({"a": np.float64("nan"), "b": [np.int64(3), np.bool_(True)], "c": math.inf})
    assert out == {"a": None, "b": [3, True], "c": None}
