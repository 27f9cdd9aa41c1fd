"""End-to-end scenario driver: fixtures in, scripted accesses through the
enforcement point, compliance consensus over the emitted trail, integrity
verification, and a deterministic report bundle out.

Scripts are line-delimited JSON commands with a small closed command set,
so replays stay diffable. Pending transactions are flushed through the
consensus network before any tamper or verify step and once more at the
end of the run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .anchors import AnchorRegistry
from .auditchain import AuditChain, AuditTransaction, ChainConfig, first_bad_height
from .consent import (
    ConsentManager,
    InformedConsent,
    PatientComponents,
    ProviderComponents,
    RegulatoryComponents,
)
from .domain import (
    ConsentLedgerError,
    EnvironmentContext,
    OperationKind,
    Role,
    condition_from_dict,
    environment_at,
)
from .fixtures import FixtureSet, load_fixtures
from .poc import NetworkConfig, PocReport, run_network
from .policy import ContractAccessEngine, DecisionSnapshot, PolicyRepository
from .verifier import IntegrityVerifier, TrailClaim
from .domain import AccessRequest

# Scenario runs start Monday 2026-03-02 08:30 UTC unless the script moves the clock.
DEFAULT_START = int(datetime(2026, 3, 2, 8, 30, tzinfo=timezone.utc).timestamp())

SCENARIO_COMMANDS = (
    "create_ppa",
    "deploy_consents",
    "create_team",
    "access",
    "advance_clock",
    "tamper",
    "revoke",
    "verify",
)


class ScriptError(ConsentLedgerError):
    def __init__(self, step: int, command: str, message: str) -> None:
        super().__init__(f"step {step} ({command}): {message}")
        self.step = step
        self.command = command


class IoFailure(ConsentLedgerError):
    pass


class ScenarioClock:
    """Monotone simulated clock; every timestamp in a run comes from here."""

    def __init__(self, start: int = DEFAULT_START) -> None:
        self.now = start

    def advance(self, seconds: int) -> int:
        if seconds < 0:
            raise ValueError("the scenario clock can not move backwards")
        self.now += seconds
        return self.now

    def advance_to(self, moment: datetime) -> int:
        target = int(moment.timestamp())
        if target < self.now:
            raise ValueError("the scenario clock can not move backwards")
        self.now = target
        return self.now


@dataclass
class ReportBundle:
    scenario: str
    seed: int
    decision_log: list[dict] = field(default_factory=list)
    activity_log: list[dict] = field(default_factory=list)
    verify_reports: list[dict] = field(default_factory=list)
    chain_export: str = ""
    anchor_dump: str = ""
    verdict_report: str = ""
    summary: dict = field(default_factory=dict)

    def summary_text(self) -> str:
        ordered = (
            "requests", "permits", "denies", "transactions", "committed", "dropped",
            "compliant", "noncompliant", "not_determined", "blocks", "anchors",
            "tamper_findings",
        )
        parts = [f"{key}={self.summary.get(key, 0)}" for key in ordered]
        parts.append(f"chain_check={self.summary.get('chain_check', 'OK')}")
        return " ".join(parts) + "\n"

    def invariants_hold(self) -> bool:
        s = self.summary
        if s.get("requests") != s.get("transactions"):
            return False
        if s.get("transactions") != s.get("committed", 0) + s.get("dropped", 0):
            return False
        finals = s.get("compliant", 0) + s.get("noncompliant", 0) + s.get("not_determined", 0)
        return finals == s.get("committed", 0) + s.get("dropped_after_verdict", 0)

    def write(self, out_dir: Path | str) -> None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            _write_jsonl(out / "decisions.jsonl", self.decision_log)
            _write_jsonl(out / "activity.jsonl", self.activity_log)
            _write_jsonl(out / "verification.jsonl", self.verify_reports)
            (out / "chain.jsonl").write_text(self.chain_export, encoding="utf-8")
            (out / "anchors.jsonl").write_text(self.anchor_dump, encoding="utf-8")
            (out / "verdicts.jsonl").write_text(self.verdict_report, encoding="utf-8")
            (out / "summary.json").write_text(
                json.dumps(self.summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
            )
            (out / "summary.txt").write_text(self.summary_text(), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write report bundle to {out}: {exc}") from exc


def _write_jsonl(path: Path, rows: Iterable[Mapping[str, Any]]) -> None:
    lines = [json.dumps(row, sort_keys=True, separators=(",", ":")) for row in rows]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


class ScenarioRunner:
    def __init__(
        self,
        fixture_dir: Path | str,
        seed: int = 0,
        *,
        chain_config: Optional[ChainConfig] = None,
        auditor_count: int = 5,
        fault_plan: Optional[Mapping[str, str]] = None,
        scenario_name: str = "scenario",
    ) -> None:
        self.seed = seed
        self.scenario_name = scenario_name
        self.clock = ScenarioClock()
        self.fixtures: FixtureSet = load_fixtures(fixture_dir, seed)
        self.keystore = self.fixtures.keystore
        self.anchors = AnchorRegistry()
        self.activity_log: list[dict] = []
        self._auditor_count = auditor_count
        self._fault_plan = dict(fault_plan or {})

        self.consents = ConsentManager(
            anchor_registry=self.anchors,
            emergency_contacts=self.fixtures.emergency_contact_of,
            clock=lambda: self.clock.now,
            activity=self._record_activity,
        )
        self.chain = AuditChain(
            chain_config or ChainConfig(),
            self.anchors,
            key_resolver=self.keystore.public_key,
            readers={"INTEGRITY-VERIFIER"},
        )
        self.engine = ContractAccessEngine(
            consent_source=self.consents,
            audit_chain=self.chain,
            anchor_registry=self.anchors,
            keystore=self.keystore,
            clock=lambda: self.clock.now,
            activity=self._record_activity,
        )
        self.consents.set_deny_probe(self.engine.static_deny_probe)
        self.verifier = IntegrityVerifier(self.chain, self.anchors, self.consents)

        for subject_id in sorted(self.fixtures.subjects):
            self.engine.pcap_register("subject", self.fixtures.subjects[subject_id], at=0)
        for record_id in sorted(self.fixtures.records):
            self.engine.pcap_register("record", self.fixtures.records[record_id], at=0)
        for policy in self.fixtures.policies:
            self.engine.pcap_register("policy", policy, at=0)

        self.decision_log: list[dict] = []
        self.verify_reports: list[dict] = []
        self.poc_report = PocReport()
        self._claims_by_subject: dict[str, list[TrailClaim]] = {}
        self._claimed_height = 0
        self._snapshot_cache: dict[int, DecisionSnapshot] = {}
        self._consent_serial = 0

    # -- plumbing ------------------------------------------------------------

    def _record_activity(self, action: str, detail: dict) -> None:
        self.activity_log.append({"at": self.clock.now, "action": action, "detail": detail})

    def _snapshot_at(self, ts: int) -> DecisionSnapshot:
        snapshot = self._snapshot_cache.get(ts)
        if snapshot is None:
            snapshot = self.engine.decision_snapshot_at(ts)
            self._snapshot_cache[ts] = snapshot
        return snapshot

    def flush_poc(self) -> None:
        if self.chain.pending_count == 0:
            return
        self._snapshot_cache.clear()  # consents may have been deployed since
        config = NetworkConfig(
            auditor_count=self._auditor_count,
            seed=self.seed,
            fault_plan=self._fault_plan,
        )
        report = run_network(
            self.chain,
            self._snapshot_at,
            self.keystore.public_key,
            config,
            commit_time=self.clock.now,
        )
        self.poc_report.merge(report)
        self._capture_claims()

    def _capture_claims(self) -> None:
        for height in range(self._claimed_height, self.chain.height):
            block = self.chain.block_at(height)
            for tx in block.transactions:
                claim = TrailClaim.from_transaction(tx, height)
                self._claims_by_subject.setdefault(tx.subject_id, []).append(claim)
        self._claimed_height = self.chain.height

    # -- script execution ------------------------------------------------------

    def execute(self, script: Sequence[Mapping[str, Any]]) -> ReportBundle:
        for step, command in enumerate(script, start=1):
            name = command.get("cmd")
            if name not in SCENARIO_COMMANDS:
                raise ScriptError(step, str(name), "unknown command")
            handler = getattr(self, f"_cmd_{name}")
            try:
                handler(command)
            except ScriptError:
                raise
            except (ConsentLedgerError, KeyError, ValueError, TypeError) as exc:
                raise ScriptError(step, name, str(exc)) from exc
        return self.finish()

    def execute_file(self, script_path: Path | str) -> ReportBundle:
        path = Path(script_path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read scenario {path}: {exc}") from exc
        script = [json.loads(line) for line in text.splitlines() if line.strip()]
        self.scenario_name = path.stem
        return self.execute(script)

    # -- command handlers ---------------------------------------------------------

    def _cmd_create_team(self, command: Mapping[str, Any]) -> None:
        patient_id = command["patient"]
        if "pools" in command:
            pools = {Role(role): list(ids) for role, ids in command["pools"].items()}
        else:
            pools = self.fixtures.role_pools()
        self.consents.create_treatment_team(patient_id, pools, seed=self.seed)

    def _default_components(
        self, patient_id: str
    ) -> tuple[PatientComponents, ProviderComponents, RegulatoryComponents]:
        profile = self.fixtures.subjects[patient_id]
        contact = self.fixtures.emergency_contact_of.get(patient_id, "")
        team = self.consents.team_for_patient(patient_id)
        pc = PatientComponents(
            personal=f"{profile.display_name} ({profile.date_of_birth.isoformat()})",
            contact=f"{profile.phone} {profile.email}",
            mailing="on file",
            pharmacy="EverGreen Pharmacy",
            billing_insurance="Anthem Health Plan",
            emergency_contact_id=contact,
        )
        prc = ProviderComponents(
            treatment_team_ref=team.ptt_id if team else "",
            anonymous_research_sharing=False,
            prescription_routing="EverGreen Pharmacy",
        )
        roc = RegulatoryComponents(policy_bodies=("HIPAA", "HITECH"))
        return pc, prc, roc

    def _parse_consent(self, patient_id: str, raw: Mapping[str, Any]) -> InformedConsent:
        self._consent_serial += 1
        return InformedConsent(
            consent_id=raw.get("consent_id", f"IC-{patient_id}-{self._consent_serial}"),
            grantee_subject_ids=frozenset(raw["grantees"]),
            object_ids=frozenset(raw["objects"]),
            operations=frozenset(OperationKind(op) for op in raw["operations"]),
            conditions=tuple(condition_from_dict(c) for c in raw.get("conditions", ())),
        )

    def _cmd_create_ppa(self, command: Mapping[str, Any]) -> None:
        patient_id = command["patient"]
        pc, prc, roc = self._default_components(patient_id)
        icc = tuple(self._parse_consent(patient_id, raw) for raw in command.get("consents", ()))
        valid_from = date.fromisoformat(command.get("valid_from", "2026-01-01"))
        valid_until = date.fromisoformat(command.get("valid_until", "2027-12-31"))
        self.consents.create_ppa(patient_id, pc, prc, roc, icc, valid_from, valid_until)

    def _cmd_deploy_consents(self, command: Mapping[str, Any]) -> None:
        patient_id = command["patient"]
        ppa_id = command.get("ppa")
        if ppa_id is None:
            ppa = self.consents.latest_ppa_for(patient_id)
            if ppa is None:
                raise ConsentLedgerError(f"{patient_id} has no PPA to deploy")
            ppa_id = ppa.ppa_id
        self.consents.deploy_consent_contracts(ppa_id)
        self._snapshot_cache.clear()

    def _cmd_access(self, command: Mapping[str, Any]) -> None:
        subject_id = command["subject"]
        environment = environment_at(
            self.clock.now,
            location_tag=command.get("location", "hospital-main"),
            source_ip=command.get("ip", "10.0.0.1"),
            emergency_flag=bool(command.get("emergency", False)),
        )
        request = AccessRequest(
            subject_id=subject_id,
            operation=OperationKind(command["operation"]),
            object_id=command["object"],
            environment=environment,
        )
        signature = self.keystore.sign_as(subject_id, request.signing_payload())
        if command.get("forge_signature"):
            signature = bytes([signature[0] ^ 0x01]) + signature[1:]
        request = replace(request, signature=signature)
        result = self.engine.pcep_enforce(request)
        decision = result.decision
        self.decision_log.append(
            {
                "subject": subject_id,
                "operation": request.operation.value,
                "object": request.object_id,
                "timestamp": environment.wall_clock,
                "emergency": environment.emergency_flag,
                "verdict": decision.verdict.value,
                "policies": list(decision.matched_policy_ids),
                "consents": list(decision.matched_consent_ids),
                "obligations": [
                    {
                        "kind": o.kind.value,
                        "target": o.target_subject_id,
                        "policy": o.triggering_policy_id,
                    }
                    for o in decision.obligations
                ],
                "reason": decision.reason,
                "tx_id": result.transaction.tx_id,
            }
        )

    def _cmd_advance_clock(self, command: Mapping[str, Any]) -> None:
        if "seconds" in command:
            self.clock.advance(int(command["seconds"]))
        elif "to" in command:
            moment = datetime.fromisoformat(command["to"])
            if moment.tzinfo is None:
                moment = moment.replace(tzinfo=timezone.utc)
            self.clock.advance_to(moment)
        else:
            raise ValueError("advance_clock needs 'seconds' or 'to'")

    def _cmd_revoke(self, command: Mapping[str, Any]) -> None:
        self.consents.revoke_consent(command["patient"], command["consent"])
        self._snapshot_cache.clear()

    def _cmd_tamper(self, command: Mapping[str, Any]) -> None:
        self.flush_poc()
        height = int(command["height"])
        block = self.chain.block_at(height)
        field_name = command.get("field", "object_id")
        bit = int(command.get("bit", 0))
        tx_index = int(command.get("tx_index", 0))
        if field_name in ("sealer_id", "timestamp"):
            tampered_block = replace(block, **{field_name: _flip(getattr(block, field_name), bit)})
        else:
            tx = block.transactions[tx_index]
            tampered_tx = replace(tx, **{field_name: _flip(getattr(tx, field_name), bit)})
            transactions = list(block.transactions)
            transactions[tx_index] = tampered_tx
            tampered_block = replace(block, transactions=tuple(transactions))
        self.chain.replace_block(height, tampered_block)
        self._record_activity(
            "tamper_injected", {"height": height, "field": field_name, "bit": bit}
        )

    def _cmd_verify(self, command: Mapping[str, Any]) -> None:
        self.flush_poc()
        subject_id = command["subject"]
        claims = tuple(self._claims_by_subject.get(subject_id, ()))
        report = self.verifier.verify_trails(subject_id, claims)
        self.verify_reports.append(report.to_json_dict())

    # -- completion -------------------------------------------------------------

    def finish(self) -> ReportBundle:
        self.flush_poc()
        chain_bad = first_bad_height(self.chain.blocks)
        anchor_mismatches = self._anchor_mismatches()
        modified_claims = sum(
            1
            for report in self.verify_reports
            for entry in report["results"]
            if entry["status"] == "MODIFIED"
        )
        permits = sum(1 for d in self.decision_log if d["verdict"] == "PERMIT")
        finals = [v.final.value for v in self.poc_report.verdicts]
        committed = len(self.poc_report.committed)
        dropped = len(self.poc_report.dropped)
        dropped_after_verdict = len(self.poc_report.mutated)
        summary = {
            "scenario": self.scenario_name,
            "seed": self.seed,
            "requests": self.engine.requests_enforced,
            "permits": permits,
            "denies": len(self.decision_log) - permits,
            "transactions": self.engine.transactions_emitted,
            "committed": committed,
            "dropped": dropped,
            "dropped_after_verdict": dropped_after_verdict,
            "compliant": sum(1 for f in finals if f == "COMPLIANT"),
            "noncompliant": sum(1 for f in finals if f == "NONCOMPLIANT"),
            "not_determined": sum(1 for f in finals if f == "NOT_DETERMINED"),
            "blocks": self.chain.height,
            "anchors": len(self.anchors),
            "tamper_findings": modified_claims + anchor_mismatches,
            "chain_check": "OK" if chain_bad is None else f"first bad height {chain_bad}",
        }
        return ReportBundle(
            scenario=self.scenario_name,
            seed=self.seed,
            decision_log=list(self.decision_log),
            activity_log=list(self.activity_log),
            verify_reports=list(self.verify_reports),
            chain_export=self.chain.export_jsonl(),
            anchor_dump=self.anchors.export_jsonl(),
            verdict_report=self.poc_report.export_jsonl(),
            summary=summary,
        )

    def _anchor_mismatches(self) -> int:
        from .auditchain import compute_block_hash, compute_tx_root

        mismatches = 0
        for block in self.chain.blocks:
            anchored = self.anchors.lookup(f"audit:{block.block_id}")
            recomputed = compute_block_hash(
                block.block_id,
                block.prev_hash,
                block.timestamp,
                block.sealer_id,
                compute_tx_root(block.transactions),
            )
            if recomputed != anchored or block.block_hash != anchored:
                mismatches += 1
        return mismatches


def _flip(value: Any, bit: int) -> Any:
    """Flip one bit inside a field value (first character for strings)."""
    if isinstance(value, bool):
        return not value
    if isinstance(value, int):
        return value ^ (1 << bit)
    if isinstance(value, str):
        if not value:
            return "\x01"
        flipped = chr(ord(value[0]) ^ (1 << (bit % 7) or 1))
        return flipped + value[1:]
    if isinstance(value, bytes):
        if not value:
            return b"\x01"
        return bytes([value[0] ^ (1 << (bit % 8) or 1)]) + value[1:]
    raise TypeError(f"cannot tamper field of type {type(value).__name__}")


def run_scenario(
    fixture_dir: Path | str,
    script_path: Path | str,
    seed: int = 0,
    *,
    auditor_count: int = 5,
    fault_plan: Optional[Mapping[str, str]] = None,
    chain_config: Optional[ChainConfig] = None,
) -> ReportBundle:
    runner = ScenarioRunner(
        fixture_dir,
        seed,
        chain_config=chain_config,
        auditor_count=auditor_count,
        fault_plan=fault_plan,
    )
    return runner.execute_file(script_path)
