"""Command-line front-end tests: exit codes, reproducible outputs, and the
sweep harness."""

import yaml

from tdthr import metrics
from tdthr.cli import (EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, config_hash,
                       load_config, load_sweep_spec, main)
from tdthr.simkernel import SimConfig

from helpers import mini_config


def _write_config(path, cfg: SimConfig):
    path.write_text(yaml.safe_dump(cfg.to_dict()))
    return str(path)


def _fast_cfg(**overrides):
    overrides.setdefault("duration", 22.0)
    return mini_config(**overrides)


# ---- validate ------------------------------------------------------------

def test_validate_accepts_shipped_configs(capsys):
    for name in ("configs/default.yaml", "configs/desk.yaml"):
        assert main(["validate", "--config", name]) == EXIT_OK
    echoed = yaml.safe_load(capsys.readouterr().out)
    assert echoed["network"]["node_count"] == 100  # desk echoed last


def test_validate_rejects_bad_values(tmp_path, capsys):
    cfg = _fast_cfg()
    cfg.prr_beta = 1.5
    path = _write_config(tmp_path / "bad.yaml", cfg)
    assert main(["validate", "--config", path]) == EXIT_VALIDATION
    assert "prr_beta" in capsys.readouterr().err


def test_validate_rejects_missing_and_malformed_files(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "nope.yaml")]) \
        == EXIT_VALIDATION
    garbled = tmp_path / "garbled.yaml"
    garbled.write_text("- just\n- a\n- list\n")
    assert main(["validate", "--config", str(garbled)]) == EXIT_VALIDATION
    capsys.readouterr()


# ---- run -----------------------------------------------------------------

def test_run_writes_csv_and_respects_seed_flag(tmp_path):
    path = _write_config(tmp_path / "cfg.yaml", _fast_cfg())
    out = tmp_path / "metrics.csv"
    assert main(["run", "--config", path, "--seed", "9",
                 "--out", str(out)]) == EXIT_OK
    header, row = out.read_text().splitlines()
    assert header == metrics.csv_header()
    rec = dict(zip(header.split(","), row.split(",")))
    assert rec["seed"] == "9"
    assert rec["protocol"] == "tdthr"
    assert int(rec["generated"]) > 0


def test_run_is_reproducible_byte_for_byte(tmp_path):
    path = _write_config(tmp_path / "cfg.yaml", _fast_cfg(rng_seed=3))
    outputs, traces = [], []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.csv"
        trace = tmp_path / f"{tag}.trace"
        assert main(["run", "--config", path, "--out", str(out),
                     "--trace", str(trace)]) == EXIT_OK
        outputs.append(out.read_bytes())
        traces.append(trace.read_bytes())
    assert outputs[0] == outputs[1]
    assert traces[0] == traces[1] and len(traces[0]) > 1000


def test_run_propagates_validation_failure(tmp_path, capsys):
    cfg = _fast_cfg()
    cfg.max_retries = -1
    path = _write_config(tmp_path / "bad.yaml", cfg)
    assert main(["run", "--config", path,
                 "--out", str(tmp_path / "x.csv")]) == EXIT_VALIDATION
    capsys.readouterr()


# ---- config hashing ------------------------------------------------------

def test_config_hash_tracks_content():
    a = _fast_cfg()
    b = _fast_cfg()
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 12
    b.critical_rate = 0.9
    assert config_hash(a) != config_hash(b)


def test_load_config_matches_builder(tmp_path):
    cfg = _fast_cfg(critical_rate=0.4)
    path = _write_config(tmp_path / "cfg.yaml", cfg)
    assert load_config(path) == cfg


# ---- sweep ---------------------------------------------------------------

def test_sweep_runs_grid_and_writes_outputs(tmp_path, capsys):
    base = _write_config(tmp_path / "base.yaml", _fast_cfg(duration=20.0))
    spec = tmp_path / "sweep.yaml"
    spec.write_text(yaml.safe_dump({
        "base_config": "base.yaml",
        "parameter": "critical_rate",
        "values": [0.2, 0.8],
        "seeds": 2,
        "protocols": ["tdthr", "greedy_geo"],
    }))
    out_dir = tmp_path / "out"
    assert main(["sweep", "--spec", str(spec),
                 "--out", str(out_dir)]) == EXIT_OK
    capsys.readouterr()
    lines = (out_dir / "sweep.csv").read_text().splitlines()
    assert lines[0] == metrics.csv_header()
    assert len(lines) == 1 + 2 * 2 * 2  # values x seeds x protocols
    recs = [dict(zip(lines[0].split(","), line.split(",")))
            for line in lines[1:]]
    assert {r["protocol"] for r in recs} == {"tdthr", "greedy_geo"}
    assert {r["critical_rate"] for r in recs} == {"0.2", "0.8"}
    assert {r["seed"] for r in recs} == {"1", "2"}
    assert not (out_dir / "failures.txt").exists()
    plot = (out_dir / "plot_prr_critical.csv").read_text().splitlines()
    assert plot[0] == "critical_rate,protocol,mean,min,max"
    assert len(plot) == 1 + 4  # one line per (protocol, value)


def test_sweep_spec_validation(tmp_path):
    spec = tmp_path / "spec.yaml"
    spec.write_text(yaml.safe_dump({"parameter": "critical_rate",
                                    "values": [0.1]}))
    assert main(["sweep", "--spec", str(spec),
                 "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    _write_config(tmp_path / "base.yaml", _fast_cfg())
    spec.write_text(yaml.safe_dump({"base_config": "base.yaml",
                                    "parameter": "does_not_exist",
                                    "values": [1]}))
    assert main(["sweep", "--spec", str(spec),
                 "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_sweep_reports_runtime_failures(tmp_path, capsys):
    base = _write_config(tmp_path / "base.yaml", _fast_cfg())
    spec = tmp_path / "spec.yaml"
    # sweeping the duration to a negative value fails at run time
    spec.write_text(yaml.safe_dump({"base_config": "base.yaml",
                                    "parameter": "duration",
                                    "values": [-5.0]}))
    out_dir = tmp_path / "out"
    assert main(["sweep", "--spec", str(spec),
                 "--out", str(out_dir)]) == EXIT_RUNTIME
    capsys.readouterr()
    assert "duration" in (out_dir / "failures.txt").read_text()


def test_sweep_seed_list_normalization(tmp_path):
    _write_config(tmp_path / "base.yaml", _fast_cfg())
    spec = tmp_path / "spec.yaml"
    spec.write_text(yaml.safe_dump({"base_config": "base.yaml",
                                    "parameter": "critical_rate",
                                    "values": [0.5],
                                    "seeds": [4, 8]}))
    loaded = load_sweep_spec(spec)
    assert loaded["seeds"] == [4, 8]
    spec.write_text(yaml.safe_dump({"base_config": "base.yaml",
                                    "parameter": "critical_rate",
                                    "values": [0.5],
                                    "seeds": 3}))
    assert load_sweep_spec(spec)["seeds"] == [1, 2, 3]
