import io
import json

import pytest

from sudp.cli import EXIT_MISMATCH, EXIT_OK, EXIT_USAGE, main
from sudp.errors import ScenarioParseError
from sudp.harness.attacks import ATTACKS, AXES, coverage_matrix, run_attack
from sudp.harness.scenario import bundled, bundled_scenario_paths, parse_scenario, run_scenario

NAMES = [p.stem for p in bundled_scenario_paths()]


@pytest.mark.parametrize("name", NAMES)
def test_bundled_scenario_passes_quickly(name, tmp_path):
    rep = run_scenario(bundled(name), tmp_path)
    failed = [s for s in rep["steps"] if not s["passed"]]
    assert rep["passed"], (failed, rep["invariants"])
    assert rep["elapsed_ms"] < 1000


def test_scenario_transcript_shape_stable(tmp_path):
    a = run_scenario(bundled("honest-delegated-use"), tmp_path / "a")
    b = run_scenario(bundled("honest-delegated-use"), tmp_path / "b")
    assert a["transcript_entries"] == b["transcript_entries"]


@pytest.mark.parametrize("doc, fragment", [
    ([], "object"),
    ({"steps": [{"action": "use"}]}, "name"),
    ({"name": "x"}, "steps"),
    ({"name": "x", "steps": [{"action": "teleport"}]}, "unknown action"),
    ({"name": "x", "steps": [{"action": "use", "expect": "maybe"}]}, "verdict"),
    ({"name": "x", "steps": [{"action": "rotate", "crash_after": "lunch"}]}, "crash stage"),
    ({"name": "x", "setup": {"credentials": 0}, "steps": [{"action": "use"}]}, "credentials"),
    ({"name": "x", "setup": {"targets": {"a": {}}}, "steps": [{"action": "use"}]}, "host"),
    ({"name": "x", "seed": "one", "steps": [{"action": "use"}]}, "seed"),
])
def test_parse_errors(doc, fragment):
    with pytest.raises(ScenarioParseError, match=fragment):
        parse_scenario(doc)


@pytest.mark.parametrize("name", list(ATTACKS))
def test_attack_rejected(name):
    rep = run_attack(name)
    assert rep.passed, rep.checks


def test_coverage_matrix_full():
    m = coverage_matrix()
    assert set(m) == set(AXES)
    assert all(m[a] for a in AXES)


def test_attack_on_scenario_base():
    assert run_attack("replay", bundled("honest-delegated-use")).passed


def test_cli_scenario_ok(capsys, tmp_path):
    assert main(["scenario", "run", "honest-delegated-use", "--state-dir", str(tmp_path)]) == EXIT_OK
    assert capsys.readouterr().out.rstrip().endswith("PASS")


def test_cli_scenario_mismatch(tmp_path):
    p = tmp_path / "wrong.json"
    p.write_text(json.dumps({"name": "wrong", "steps": [
        {"action": "use", "expect": "ok"}, {"action": "replay", "expect": "ok"}]}))
    assert main(["scenario", "run", str(p)]) == EXIT_MISMATCH


def test_cli_scenario_usage_errors(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["scenario", "run", str(p)]) == EXIT_USAGE
    assert main(["scenario", "run", "no-such-scenario"]) == EXIT_USAGE
    assert main(["attack", "no-such-attack"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_cli_scenario_json_report(capsys):
    assert main(["scenario", "run", "replay-attack", "--json"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and rep["invariants"]["requester_non_exposure"]


def test_cli_scenario_list(capsys):
    assert main(["scenario", "list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == NAMES


def test_cli_attack_all(capsys):
    assert main(["attack", "all"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("attack rejected as expected") == len(ATTACKS)


def test_cli_scenario_seed_override():
    assert main(["scenario", "run", "enroll-credential", "--seed", "99"]) == EXIT_OK


def test_cli_demo_survives_closed_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO(""))
    assert main(["demo"]) == EXIT_OK
