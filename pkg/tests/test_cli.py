import json

import yaml

from qkdsim.cli import main

from conftest import REFERENCE


def test_validate_ok(capsys):
    assert main(["validate", str(REFERENCE)]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_config_error(tmp_path, capsys):
    doc = yaml.safe_load(REFERENCE.read_text())
    doc["buffer"]["threshold_bytes"] = 10**9
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(doc))
    assert main(["validate", str(bad)]) == 2
    assert "threshold_bytes" in capsys.readouterr().err


def test_missing_file_is_config_error(tmp_path):
    assert main(["validate", str(tmp_path / "none.yaml")]) == 2


def test_bad_arguments():
    assert main(["frobnicate"]) == 2


def test_run_with_out_dir(tmp_path, capsys):
    assert main(["run", str(REFERENCE), "--out-dir", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["delivered"] == 5
    assert summary["exit_status"] == 0
    assert (tmp_path / "reference.pcap").read_bytes()[:4] == bytes.fromhex("A1B2C3D4")


def test_seed_override_changes_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(REFERENCE), "--out-dir", str(a)])
    main(["run", str(REFERENCE), "--out-dir", str(b), "--seed", "99"])
    assert (a / "reference.pcap").read_bytes() != (b / "reference.pcap").read_bytes()
    assert "seed 99" in (b / "reference.trace").read_text().splitlines()[0]


def test_desync_run_exits_one(tmp_path, capsys):
    desync = REFERENCE.parent.parent / "desync" / "scenario.yaml"
    assert main(["run", str(desync), "--out-dir", str(tmp_path)]) == 1
    assert "authentication" in capsys.readouterr().err


def test_verify_fixtures_command(capsys):
    assert main(["verify-fixtures", str(REFERENCE.parent.parent)]) == 0
    assert capsys.readouterr().out.count("PASS") == 3
