import json

import numpy as np
import pytest

from stratmc.cli import benchmark_histogram, cmd_run, error_table, main
from stratmc.config import RunConfig
from stratmc.errors import ConfigError, EmptyHistogramError
from stratmc.estimator import read_histogram, read_table, parse_vector, tv_distance, u_marginal, WeightedHistogram


def _final_weights(out):
    _, _, rows = read_table(out / "weights.tsv")
    return parse_vector(rows[-1][2])


# --- config ---

def test_config_roundtrip(tmp_path):
    cfg = RunConfig.load("ms_vertical5")
    cfg.save(tmp_path / "c.yaml")
    assert RunConfig.load(tmp_path / "c.yaml").to_dict() == cfg.to_dict()
    assert RunConfig.loads(cfg.dumps()) == cfg


@pytest.mark.parametrize("field,value", [("N", -1), ("M", 0), ("version", "fast"), ("threads", 0),
                                         ("runs_to_average", 0), ("laziness", 0.0)])
def test_config_validation_names_field(field, value):
    d = RunConfig().to_dict()
    d[field] = value
    with pytest.raises(ConfigError, match=field):
        RunConfig.from_dict(d)


def test_config_rejects_unknown_and_bad_eta():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="eta"):
        RunConfig.from_dict({"eta": {"lo": 0.8, "hi": 0.2}})
    with pytest.raises(ConfigError, match="strata"):
        RunConfig.from_dict({"system": {"kind": "maier_stein"}})


def test_presets_build():
    for name in ("two_state", "nine_state", "ms_vertical3", "ms_vertical5", "ms_tilted5", "ms_circles6"):
        cfg = RunConfig.load(name)
        cfg.kernel(), cfg.strata_def(), cfg.build_grid()


# --- run ---

def test_run_N0(tmp_path):
    assert main(["run", "--config", _write(tmp_path, N=0), "--out", str(tmp_path / "o")]) == 0
    out = tmp_path / "o"
    for f in ("diagnostics.tsv", "weights.tsv", "injection.tsv", "occupation_marginals.tsv", "config.yaml"):
        assert (out / f).exists()
    _, _, rows = read_table(out / "diagnostics.tsv")
    assert rows == []
    np.testing.assert_allclose(_final_weights(out), [0.5, 0.5])


def _write(tmp_path, **kw):
    cfg = RunConfig.load("two_state").with_overrides(**kw)
    p = tmp_path / "cfg.yaml"
    cfg.save(p)
    return str(p)


def test_run_two_state(tmp_path):
    assert main(["run", "--config", "two_state", "--out", str(tmp_path)]) == 0
    assert np.abs(_final_weights(tmp_path) - 0.5).max() < 0.02


def test_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, N=2, M=200)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "1", "--threads", "3"])
    a, b, c = ((tmp_path / d / "diagnostics.tsv").read_bytes() for d in "abc")
    assert a != b and a == c


def test_run_errors_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("N: -3\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "N" in capsys.readouterr().err


def test_run_small_maier_stein(tmp_path):
    cfg = RunConfig.load("ms_vertical3").with_overrides(N=2, M=30)
    files = cmd_run(cfg, tmp_path)
    assert set(files) >= {"diagnostics", "weights", "occupation", "injection"}
    _, _, rows = read_table(files["diagnostics"])
    assert len(rows) == 2


@pytest.mark.slow
def test_run_vertical3_preset(tmp_path):
    assert main(["run", "--config", "ms_vertical3", "--out", str(tmp_path)]) == 0
    for f in ("diagnostics.tsv", "weights.tsv", "occupation.tsv", "injection.tsv"):
        assert (tmp_path / f).exists()
    _, _, rows = read_table(tmp_path / "diagnostics.tsv")
    assert len(rows) == 30


# --- benchmark ---

def test_benchmark_zero_steps(tmp_path):
    cfg = RunConfig.load("ms_vertical3")
    with pytest.raises(EmptyHistogramError):
        benchmark_histogram(cfg, 0)
    assert main(["benchmark", "--config", "ms_vertical3", "--steps", "0", "--out", str(tmp_path)]) == 2


def test_benchmark_discrete_is_exact(tmp_path):
    assert main(["benchmark", "--config", "two_state", "--out", str(tmp_path)]) == 0
    np.testing.assert_allclose(read_histogram(tmp_path / "benchmark.tsv").counts, [0.5, 0.5])


@pytest.mark.slow
def test_benchmark_symmetry_and_convergence():
    cfg = RunConfig.load("ms_vertical3")
    h = u_marginal(benchmark_histogram(cfg, 1_000_000)).normalized()
    mirrored = WeightedHistogram(h.grid, h.counts[::-1])
    assert tv_distance(h, mirrored) < 0.05
    d = []
    for steps in (100_000, 1_000_000):
        a = u_marginal(benchmark_histogram(cfg.with_overrides(seed=11), steps))
        b = u_marginal(benchmark_histogram(cfg.with_overrides(seed=12), steps))
        d.append(tv_distance(a, b))
    assert d[1] < d[0]


# --- error ---

def _det_config(tmp_path, N=5):
    cfg = RunConfig.from_dict({"system": {"kind": "discrete", "P": [[0, 1], [1, 0]], "partition": [[0], [1]]},
                               "N": N, "M": 50})
    p = tmp_path / "det.yaml"
    cfg.save(p)
    return str(p)


def test_error_self_comparison_is_zero(tmp_path):
    run = tmp_path / "run"
    main(["run", "--config", _det_config(tmp_path), "--out", str(run)])
    assert main(["error", "--run", str(run), "--benchmark", str(run / "occupation.tsv")]) == 0
    _, _, rows = read_table(run / "error.tsv")
    assert len(rows) == 5
    assert all(float(r[2]) == 0.0 and float(r[3]) == 0.0 for r in rows)


def test_error_decreases_on_two_state(tmp_path):
    run = tmp_path / "run"
    main(["run", "--config", _write(tmp_path, N=10, M=2000, version="basic"), "--out", str(run)])
    main(["benchmark", "--config", "two_state", "--out", str(tmp_path)])
    rows = error_table(run, tmp_path / "benchmark.tsv")
    assert len(rows) == 10
    tv = [r[2] for r in rows]
    assert tv[-1] < tv[0]


def test_error_grid_mismatch(tmp_path, capsys):
    run = tmp_path / "run"
    main(["run", "--config", _det_config(tmp_path, 2), "--out", str(run)])
    main(["run", "--config", "nine_state", "--out", str(tmp_path / "nine")] + [])
    assert main(["error", "--run", str(run), "--benchmark", str(tmp_path / "nine" / "injection.tsv")]) == 2
    assert "grid" in capsys.readouterr().err


# --- oracle ---

def test_oracle_two_state(tmp_path, capsys):
    assert main(["oracle", "--config", "two_state", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "oracle.json").read_text())
    assert rep["c"] == 1.0
    np.testing.assert_allclose(rep["a_star"], [0.5, 0.5])
    # the exits of two strata alternate: B1 fails without laziness
    assert rep["minorization_ok"] is False and "B1" in rep["minorization_flag"]
    main(["oracle", "--config", "two_state", "--laziness", "0.5", "--out", str(tmp_path / "lazy")])
    rep = json.loads((tmp_path / "lazy" / "oracle.json").read_text())
    assert rep["minorization_ok"] and rep["m"] == 1


def test_oracle_random_deterministic(tmp_path):
    cfg = RunConfig.from_dict({"system": {"kind": "discrete", "preset": "random:5"}})
    p = tmp_path / "r.yaml"
    cfg.save(p)
    main(["oracle", "--config", str(p), "--out", str(tmp_path / "a")])
    main(["oracle", "--config", str(p), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "oracle.json").read_bytes() == (tmp_path / "b" / "oracle.json").read_bytes()
