import json
import subprocess
import sys

import pytest

from carl.config import load_config
from carl.harness.cli import EXIT_CONFIG, EXIT_OK, main

from conftest import small_config


@pytest.fixture
def cfg_file(tmp_path):
    cfg = small_config(**{"experiment.train_rounds": 2, "experiment.updates_per_round": 10})
    p = tmp_path / "small.json"
    p.write_text(json.dumps(cfg.to_dict()))
    return p


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_config_file_round_trips(cfg_file, capsys):
    assert main(["config", "--config", str(cfg_file)]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert load_config(cfg_file).to_dict() == printed


def test_bad_config_exits_with_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["config", "--config", str(bad)]) == EXIT_CONFIG
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"gamma": 0.9, "colour": "red"}))
    assert main(["config", "--config", str(unknown)]) == EXIT_CONFIG
    invalid = tmp_path / "invalid.json"
    invalid.write_text(json.dumps({"gamma": 1.5}))
    assert main(["config", "--config", str(invalid)]) == EXIT_CONFIG
    assert main(["config", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_with_one():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_CONFIG
    with pytest.raises(SystemExit) as e:
        main(["train", "--method", "PPO"])
    assert e.value.code == EXIT_CONFIG


def test_bad_action_and_method_lists(cfg_file, tmp_path):
    assert main(["simulate", "--config", str(cfg_file), "--hours", "0.1", "--action", "1,2",
                 "--out", str(tmp_path / "x.tsv")]) == EXIT_CONFIG
    assert main(["compare", "--config", str(cfg_file), "--methods", "CEM,PPO",
                 "--out", str(tmp_path / "c")]) == EXIT_CONFIG


def test_verify_oracle_passes():
    assert main(["verify-oracle", "--n-mdps", "20"]) == EXIT_OK


def test_module_entry_point(cfg_file):
    out = subprocess.run([sys.executable, "-m", "carl", "config", "--config", str(cfg_file)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["gamma"] == 0.9


def _twice(tmp_path, argv_for):
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        d.mkdir()
        assert main(argv_for(d)) == EXIT_OK
        outs.append(_files(d))
    assert outs[0] and outs[0] == outs[1]
    return outs[0]


def test_simulate_is_byte_deterministic(cfg_file, tmp_path):
    files = _twice(tmp_path, lambda d: ["simulate", "--config", str(cfg_file), "--hours", "12",
                                        "--router", "queue", "--out", str(d / "log.tsv"),
                                        "--telemetry", str(d / "router.csv")])
    assert files["log.tsv"].startswith(b"state\taction\treward\t")
    assert set(files) == {"log.tsv", "router.csv"}


def test_simulate_constant_action(cfg_file, tmp_path):
    _twice(tmp_path, lambda d: ["simulate", "--config", str(cfg_file), "--hours", "3",
                                "--action", "1,1,1,1,1", "--out", str(d / "log.tsv")])


def test_verify_oracle_dump_is_byte_deterministic(tmp_path):
    files = _twice(tmp_path, lambda d: ["verify-oracle", "--n-mdps", "5", "--dump", str(d)])
    assert files["exact_tables.csv"].startswith(b"t,s,a,q0,q1,lambda_a,lambda_b\n")


def test_train_is_byte_deterministic(cfg_file, tmp_path):
    files = _twice(tmp_path, lambda d: ["train", "--config", str(cfg_file), "--method", "CARL-EL",
                                        "--seed", "3", "--out", str(d)])
    assert set(files) == {"checkpoint.npz", "diagnostics.csv", "summary.json"}


def test_compare_and_plot_are_byte_deterministic(cfg_file, tmp_path):
    files = _twice(tmp_path, lambda d: ["compare", "--config", str(cfg_file), "--methods",
                                        "CEM,TD3,CARL-EL", "--seeds", "0,1", "--out", str(d)])
    assert set(files) == {"summary.csv", "runs.csv", "report.json"}
    rep = tmp_path / "a" / "report.json"
    plots = [tmp_path / "p1", tmp_path / "p2"]
    for p in plots:
        assert main(["plot", "--config", str(cfg_file), "--report", str(rep), "--out", str(p)]) == EXIT_OK
    assert _files(plots[0]) == _files(plots[1])
    assert set(_files(plots[0])) == {"load.svg", "q_curves.svg", "session_watch.svg"}
    bogus = tmp_path / "bogus.json"
    bogus.write_text("{}")
    assert main(["plot", "--report", str(bogus), "--out", str(tmp_path / "p3")]) == EXIT_CONFIG
