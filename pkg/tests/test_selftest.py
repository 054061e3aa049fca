import json

import pytest

from conekit.cli import main
from conekit.selftest import FAULT_ENV, SUITES, run_selftest


def test_quick_level_passes():
    report = run_selftest("quick")
    assert report["passed"], report
    assert set(report["suites"]) == set(SUITES)
    assert all(s["checks"] > 0 for s in report["suites"].values())


@pytest.mark.parametrize("flag, failing", [("1", set(SUITES)), ("zeta", {"zeta"})])
def test_injected_fault_is_caught(monkeypatch, flag, failing):
    monkeypatch.setenv(FAULT_ENV, flag)
    report = run_selftest("quick")
    assert not report["passed"]
    assert {name for name, s in report["suites"].items() if not s["passed"]} == failing


def test_cli_exit_codes(monkeypatch, capsys):
    assert main(["selftest"]) == 0
    first = capsys.readouterr().out
    assert main(["selftest"]) == 0
    assert capsys.readouterr().out == first
    monkeypatch.setenv(FAULT_ENV, "scalar")
    assert main(["selftest"]) != 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["suites"]["scalar"]["failures"]


def test_unknown_level():
    with pytest.raises(ValueError):
        run_selftest("exhaustive")


@pytest.mark.slow
def test_full_level_passes():
    report = run_selftest("full")
    assert report["passed"], report
    assert report["suites"]["mc"]["checks"] == 3
