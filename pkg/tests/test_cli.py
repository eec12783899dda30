"""Command-line interface: subcommands, outputs, manifests and exit codes."""

from __future__ import annotations

import json
import shutil
import subprocess

import pytest
import yaml

from nishimori.cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_INVALID,
    EXIT_CONFIG_UNREADABLE,
    EXIT_OK,
    EXIT_USAGE,
    main,
)

SMALL = {
    "model": "xy",
    "dims": [3, 3],
    "beta": 1.0,
    "sweeps": {"burnin": 10, "measure": 32, "thin": 1},
    "replicas": 3,
    "master_seed": 4,
    "observables": ["energy", {"name": "two_point", "x": [0, 0], "y": [2, 2]}],
}


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_lambda_zero(capsys):
    assert main(["lambda", "--model", "xy", "--beta", "0"]) == EXIT_OK
    assert capsys.readouterr().out.split("\t")[2] == "0.0"


def test_lambda_grid(capsys):
    assert main(["lambda", "--model", "su2", "--grid", "0", "2", "5"]) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 5


def test_lambda_negative_beta():
    assert main(["lambda", "--beta", "-1"]) == EXIT_CONFIG_INVALID


def test_unknown_flag():
    assert main(["lambda", "--bogus"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--output", str(tmp_path)]) == EXIT_CONFIG_UNREADABLE


def test_malformed_config(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("model: [xy\n")
    assert main(["run", "--config", str(p), "--output", str(tmp_path)]) == EXIT_CONFIG_UNREADABLE


def test_invalid_combination(tmp_path):
    cfg = write_json(tmp_path / "c.json", {**SMALL, "u": 0.3})
    assert main(["run", "--config", cfg, "--output", str(tmp_path)]) == EXIT_CONFIG_INVALID
    cfg = write_json(tmp_path / "d.json", {**SMALL, "boundary": "dirichlet"})
    assert main(["run", "--config", cfg, "--output", str(tmp_path)]) == EXIT_CONFIG_INVALID


def test_run_reproducible_and_manifest(tmp_path):
    cfg = write_json(tmp_path / "c.json", SMALL)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["run", "--config", cfg, "--output", str(a)]) == EXIT_OK
    assert main(["run", "--config", cfg, "--output", str(b)]) == EXIT_OK
    assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["master_seed"] == 4 and len(manifest["config_hash"]) == 64
    assert set(manifest["versions"]) >= {"nishimori", "numpy", "scipy", "python"}
    assert main(["run", "--manifest", str(a / "manifest.json"), "--output", str(c)]) == EXIT_OK
    assert (c / "records.csv").read_bytes() == (a / "records.csv").read_bytes()


def test_run_yaml_and_flag_override(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(SMALL))
    assert main(["run", "--config", str(p), "--beta", "2.0", "--format", "jsonl", "--output", str(tmp_path)]) == EXIT_OK
    rows = [json.loads(line) for line in (tmp_path / "records.jsonl").read_text().splitlines()]
    assert all(r["beta"] == 2.0 for r in rows)
    assert "energy_per_edge" in capsys.readouterr().out


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NISHIMORI_OUTPUT_DIR", str(tmp_path / "env"))
    monkeypatch.setenv("NISHIMORI_WORKERS", "2")
    cfg = write_json(tmp_path / "c.json", {**SMALL, "replica_block": 1})
    assert main(["run", "--config", cfg]) == EXIT_OK
    assert (tmp_path / "env" / "records.csv").exists()
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["config"]["replica_block"] == 1


def test_verify_single_check(tmp_path, capsys):
    assert main(["verify", "--check", "mmsp", "--beta", "1.0", "--output", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("PASS")
    lines = (tmp_path / "verify.jsonl").read_text().splitlines()
    assert all(json.loads(line)["passed"] for line in lines)


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    import nishimori.cli as cli
    from nishimori.estimators import HarnessRecord

    def failing(check, cfg):
        return [HarnessRecord(check, "xy", 1.0, "-", "q", None, None, 1.0, 0.0, False)]

    monkeypatch.setattr(cli, "identity_harness", failing)
    assert main(["verify", "--check", "mmsp", "--output", str(tmp_path)]) == EXIT_CHECK_FAILED


def test_eit_command(tmp_path, capsys):
    assert main(["eit", "--dim", "4", "--n", "8", "--pairs", "10000", "--output", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "eit.csv").read_text().startswith("k,count,probability,C,alpha")
    assert "alpha=" in capsys.readouterr().out


def test_reconstruct_command(tmp_path, capsys):
    args = ["reconstruct", "--n", "3", "--instances", "4", "--paths", "32", "--beta", "8", "--output", str(tmp_path)]
    assert main(args) == EXIT_OK
    assert len((tmp_path / "reconstruct.csv").read_text().splitlines()) == 5
    assert "mean alignment" in capsys.readouterr().out


def test_console_script(tmp_path):
    exe = shutil.which("nishimori")
    if exe is None:
        pytest.skip("console script not installed")
    res = subprocess.run([exe, "lambda", "--beta", "1"], capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("xy\t1\t0.44638")
    res = subprocess.run([exe, "run", "--config", str(tmp_path / "none.json")], capture_output=True, text=True, check=False)
    assert res.returncode == EXIT_CONFIG_UNREADABLE and res.stderr.count("\n") == 1
