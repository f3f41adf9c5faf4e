import shutil

import pytest

from qkdsim.fixtures import first_difference, verify_fixture, verify_fixtures

from conftest import FIXTURES


@pytest.mark.parametrize("name", ["reference", "desync", "sawtooth"])
def test_shipped_fixture_passes(name):
    result = verify_fixture(FIXTURES / name)
    assert result.passed, result.message


def copy_fixture(tmp_path, name="reference"):
    dst = tmp_path / "fixtures" / name
    shutil.copytree(FIXTURES / name, dst)
    return dst


def test_corrupted_csv_reports_offset(tmp_path):
    fx = copy_fixture(tmp_path)
    csv = bytearray((fx / "expected.csv").read_bytes())
    csv[100] ^= 0x01
    (fx / "expected.csv").write_bytes(bytes(csv))
    result = verify_fixture(fx)
    assert not result.passed
    assert "byte offset 100" in result.message


def test_missing_file_reported(tmp_path):
    fx = copy_fixture(tmp_path)
    (fx / "manifest.json").unlink()
    result = verify_fixture(fx)
    assert not result.passed
    assert "missing fixture file" in result.message and "manifest.json" in result.message


def test_tampered_digest(tmp_path):
    fx = copy_fixture(tmp_path)
    text = (fx / "manifest.json").read_text()
    (fx / "manifest.json").write_text(text.replace('"pcap_sha256": "', '"pcap_sha256": "00'))
    assert "pcap digest" in verify_fixture(fx).message


def test_missing_root(tmp_path):
    (result,) = verify_fixtures(tmp_path / "nope")
    assert not result.passed and "does not exist" in result.message


def test_first_difference():
    assert first_difference(b"abc", b"abc") is None
    assert first_difference(b"abc", b"abd") == 2
    assert first_difference(b"ab", b"abc") == 2
