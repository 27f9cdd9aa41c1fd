"""Fixture loading, scripted runs, report bundles, and the CLI surface."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from consentledger.cli import main as cli_main
from consentledger.fixtures import default_fixture_dir, default_scenario_dir, load_fixtures
from consentledger.policy import SchemaViolation
from consentledger.scenario import ScenarioRunner, ScriptError, run_scenario


def scenario_path(name: str) -> Path:
    return default_scenario_dir() / name


# -- load_fixtures ------------------------------------------------------------


def test_shipped_fixtures_load_34_subjects_10_policies():
    fixtures = load_fixtures(default_fixture_dir(), seed=0)
    assert len(fixtures.subjects) == 34
    assert len(fixtures.policies) == 10
    assert len(fixtures.records) == 10
    assert len(fixtures.emergency_contact_of) == 10
    assert [p.policy_id for p in fixtures.policies] == [f"P{i}" for i in range(1, 11)]


def test_malformed_date_reports_file_and_line(tmp_path):
    source = default_fixture_dir()
    for name in ("patients.jsonl", "providers.jsonl", "emergency_contacts.jsonl",
                 "pharmacists.jsonl", "insurance_agents.jsonl", "records.jsonl",
                 "policies.jsonl"):
        (tmp_path / name).write_text((source / name).read_text(encoding="utf-8"), encoding="utf-8")
    lines = (tmp_path / "patients.jsonl").read_text(encoding="utf-8").splitlines()
    row = json.loads(lines[2])
    row["date_of_birth"] = "not-a-date"
    lines[2] = json.dumps(row)
    (tmp_path / "patients.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(SchemaViolation) as excinfo:
        load_fixtures(tmp_path, seed=0)
    assert "patients.jsonl:3" in str(excinfo.value)


def test_empty_directory_is_missing_file(tmp_path):
    with pytest.raises(SchemaViolation) as excinfo:
        load_fixtures(tmp_path, seed=0)
    assert "missing fixture file" in str(excinfo.value)


# -- scripted scenarios --------------------------------------------------------


def test_doctor_scope_scenario_decisions():
    bundle = run_scenario(default_fixture_dir(), scenario_path("p3-doctor-scope.jsonl"), seed=3)
    verdicts = [(d["subject"], d["operation"], d["object"], d["verdict"]) for d in bundle.decision_log]
    assert verdicts == [
        ("PR1001", "READ", "HR1005", "PERMIT"),
        ("PR1001", "WRITE", "HR1005", "PERMIT"),
        ("PR1001", "WRITE", "HR1009", "DENY"),
    ]
    assert bundle.summary["chain_check"] == "OK"
    assert bundle.invariants_hold()


def test_tamper_demo_scenario_reports_modified():
    bundle = run_scenario(default_fixture_dir(), scenario_path("tamper-demo.jsonl"), seed=3)
    assert bundle.summary["tamper_findings"] >= 1
    assert bundle.summary["chain_check"] == "first bad height 0"
    first, second = bundle.verify_reports
    assert first["overall"] == "NOT_MODIFIED"
    assert second["overall"] == "MODIFIED"


def test_same_script_same_seed_identical_bundles(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        bundle = run_scenario(default_fixture_dir(), scenario_path("table-vi-matrix.jsonl"), seed=5)
        bundle.write(out)
    for name in ("decisions.jsonl", "chain.jsonl", "anchors.jsonl", "verdicts.jsonl",
                 "activity.jsonl", "verification.jsonl", "summary.json", "summary.txt"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_report_conservation_every_access_once():
    bundle = run_scenario(default_fixture_dir(), scenario_path("p5-lab-techs.jsonl"), seed=1)
    logged = [d["tx_id"] for d in bundle.decision_log]
    assert len(set(logged)) == len(logged)
    verdict_ids = [json.loads(line)["tx_id"] for line in bundle.verdict_report.splitlines()]
    assert sorted(verdict_ids) == sorted(logged)
    committed_ids = [
        tx["tx_id"]
        for line in bundle.chain_export.splitlines()
        for tx in json.loads(line)["transactions"]
    ]
    assert sorted(committed_ids) == sorted(logged)


def test_cross_format_summary_consistency():
    bundle = run_scenario(default_fixture_dir(), scenario_path("p6-billing-officer.jsonl"), seed=2)
    text = bundle.summary_text()
    for key in ("requests", "permits", "denies", "transactions", "committed",
                "dropped", "compliant", "noncompliant", "not_determined"):
        assert f"{key}={bundle.summary[key]}" in text


def test_empty_scenario_all_zero_summary():
    runner = ScenarioRunner(default_fixture_dir(), seed=0)
    bundle = runner.execute([])
    for key in ("requests", "permits", "denies", "transactions", "committed",
                "dropped", "compliant", "noncompliant", "not_determined", "blocks"):
        assert bundle.summary[key] == 0, key
    assert bundle.summary["chain_check"] == "OK"


def test_unknown_command_is_a_script_error():
    runner = ScenarioRunner(default_fixture_dir(), seed=0)
    with pytest.raises(ScriptError) as excinfo:
        runner.execute([{"cmd": "launch_missiles"}])
    assert excinfo.value.step == 1


def test_failing_step_carries_index():
    runner = ScenarioRunner(default_fixture_dir(), seed=0)
    with pytest.raises(ScriptError) as excinfo:
        runner.execute([
            {"cmd": "advance_clock", "seconds": 60},
            {"cmd": "access", "subject": "NOBODY", "operation": "READ", "object": "HR1001"},
        ])
    assert excinfo.value.step == 2


def test_clock_never_moves_backwards():
    runner = ScenarioRunner(default_fixture_dir(), seed=0)
    with pytest.raises(ScriptError):
        runner.execute([{"cmd": "advance_clock", "to": "2020-01-01T00:00:00+00:00"}])


# -- CLI ------------------------------------------------------------------------


def test_cli_run_writes_bundle_and_exits_zero(tmp_path, capsys):
    out_dir = tmp_path / "bundle"
    code = cli_main([
        "run",
        "--scenario", str(scenario_path("p4-nurse-staff.jsonl")),
        "--seed", "7",
        "--out", str(out_dir),
    ])
    assert code == 0
    captured = capsys.readouterr().out
    assert "requests=" in captured
    for name in ("decisions.jsonl", "chain.jsonl", "anchors.jsonl", "verdicts.jsonl", "summary.json"):
        assert (out_dir / name).exists()


def test_cli_check_chain_clean_and_corrupted(tmp_path, capsys):
    out_dir = tmp_path / "bundle"
    cli_main(["run", "--scenario", str(scenario_path("p3-doctor-scope.jsonl")),
              "--seed", "1", "--out", str(out_dir)])
    assert cli_main(["check-chain", "--chain", str(out_dir / "chain.jsonl"),
                     "--anchors", str(out_dir / "anchors.jsonl")]) == 0

    lines = (out_dir / "chain.jsonl").read_text(encoding="utf-8").splitlines()
    block = json.loads(lines[0])
    block["transactions"][0]["object_id"] = "HR1004"
    lines[0] = json.dumps(block, sort_keys=True, separators=(",", ":"))
    corrupted = tmp_path / "chain-corrupt.jsonl"
    corrupted.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert cli_main(["check-chain", "--chain", str(corrupted),
                     "--anchors", str(out_dir / "anchors.jsonl")]) == 1


def test_cli_verify_round_trip(tmp_path, capsys):
    out_dir = tmp_path / "bundle"
    runner = ScenarioRunner(default_fixture_dir(), seed=4)
    bundle = runner.execute_file(scenario_path("p3-doctor-scope.jsonl"))
    bundle.write(out_dir)
    claims = runner._claims_by_subject["PR1001"]
    claims_file = tmp_path / "claims.jsonl"
    claims_file.write_text(
        "\n".join(json.dumps(c.to_json_dict(), sort_keys=True) for c in claims) + "\n",
        encoding="utf-8",
    )
    code = cli_main([
        "verify", "--subject", "PR1001",
        "--claims", str(claims_file),
        "--chain", str(out_dir / "chain.jsonl"),
        "--anchors", str(out_dir / "anchors.jsonl"),
    ])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["overall"] == "NOT_MODIFIED"


def test_cli_bad_input_exits_two(tmp_path):
    assert cli_main(["run", "--scenario", str(tmp_path / "missing.jsonl")]) == 2
