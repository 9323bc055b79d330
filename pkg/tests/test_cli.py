import csv
import json
import subprocess
import sys

import pytest

from nlab.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from nlab.config import ExperimentConfig
from nlab.errors import ConfigError


def test_config_round_trip_and_defaults():
    cfg = ExperimentConfig(command="theorem2").with_defaults()
    assert cfg.m == [2, 4, 8] and cfg.resolution == 256
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    rnd = ExperimentConfig(command="theorem1", family="random").with_defaults()
    assert rnd.resolution == 128 and rnd.n == [16, 64, 256]


def test_config_errors_list_every_problem():
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict({"command": "nope", "family": "x", "resolution": -1})
    assert len(e.value.problems) == 3
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"command": "lemma", "colour": 1})


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["bogus"]) == EXIT_USAGE
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"command": "theorem2", "p": [0.5]}))
    assert main(["theorem2", "--config", str(bad)]) == EXIT_USAGE
    assert "p must be" in capsys.readouterr().err
    bad.write_text(json.dumps({"command": "lemma"}))
    assert main(["theorem2", "--config", str(bad)]) == EXIT_USAGE


def test_theorem2_small_run(tmp_path, capsys):
    out = tmp_path / "t2"
    code = main(["theorem2", "--m", "2,4", "--resolution", "128", "--out", str(out)])
    assert code == EXIT_OK
    assert "PASS" in capsys.readouterr().out
    for name in ("theorem2.csv", "theorem2.json", "theorem2_nodal.svg", "theorem2_checks.json", "config.json"):
        assert (out / name).exists()
    rows = list(csv.DictReader(open(out / "theorem2.csv")))
    assert [r["n"] for r in rows] == ["4", "16"]


def test_failing_assertion_exits_1(tmp_path):
    cfg = tmp_path / "c.json"
    # an impossible tolerance must turn the run red
    cfg.write_text(json.dumps({"command": "theorem2", "m": [2, 4], "resolution": 64, "tolerances": {"h1_rel": -1}}))
    assert main(["theorem2", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_FAIL


def test_proof_chain_and_selftest(tmp_path):
    assert main(["proof-chain", "--resolution", "64", "--out", str(tmp_path / "pc")]) == EXIT_OK
    assert (tmp_path / "pc" / "proof_chain.csv").read_text().startswith("family,n,seed,p")
    assert main(["transport-selftest", "--m", "2", "--resolution", "64", "--out", str(tmp_path / "ts")]) == EXIT_OK


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "nlab", "transport-selftest", "--m", "2", "--resolution", "32", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
    assert "PASS symmetry" in r.stdout


@pytest.mark.parametrize("family, extra", [("bump", ["--seeds", "0,1"]), ("random", ["--n", "16", "--seeds", "0"])])
def test_ratio_floor_other_families(tmp_path, family, extra):
    args = ["theorem2", "--family", family, "--p", "1,2", "--resolution", "64", "--out", str(tmp_path), *extra]
    assert main(args) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "theorem2.csv")))
    assert rows and min(float(r["ratio"]) for r in rows) > 0.05
