"""Command-line entry points: run scenarios, verify trails, check chains."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .anchors import AnchorRegistry, UnknownKey
from .auditchain import blocks_from_jsonl, compute_block_hash, compute_tx_root, first_bad_height
from .domain import ConsentLedgerError
from .fixtures import default_fixture_dir
from .scenario import run_scenario
from .verifier import IntegrityVerifier, claims_from_json


class _StaticChainView:
    """Read-only chain over an exported block list, for offline verification."""

    def __init__(self, blocks) -> None:
        self._blocks = tuple(blocks)

    @property
    def height(self) -> int:
        return len(self._blocks)

    def block_at(self, height: int):
        return self._blocks[height]

    @property
    def blocks(self):
        return self._blocks


def _cmd_run(args: argparse.Namespace) -> int:
    fault_plan = {}
    for spec in args.fault or ():
        node_id, _, fault = spec.partition("=")
        fault_plan[node_id] = fault
    bundle = run_scenario(
        Path(args.fixtures),
        Path(args.scenario),
        seed=args.seed,
        auditor_count=args.auditors,
        fault_plan=fault_plan,
    )
    if args.out:
        bundle.write(Path(args.out))
    sys.stdout.write(bundle.summary_text())
    return 0 if bundle.invariants_hold() else 1


def _cmd_verify(args: argparse.Namespace) -> int:
    blocks = blocks_from_jsonl(Path(args.chain).read_text(encoding="utf-8"))
    anchors = AnchorRegistry.import_jsonl(Path(args.anchors).read_text(encoding="utf-8"))
    claims = claims_from_json(Path(args.claims).read_text(encoding="utf-8"))
    verifier = IntegrityVerifier(_StaticChainView(blocks), anchors)  # type: ignore[arg-type]
    report = verifier.verify_trails(args.subject, claims)
    sys.stdout.write(json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n")
    return 0 if report.overall.value == "NOT_MODIFIED" else 1


def _cmd_check_chain(args: argparse.Namespace) -> int:
    blocks = blocks_from_jsonl(Path(args.chain).read_text(encoding="utf-8"))
    anchors = AnchorRegistry.import_jsonl(Path(args.anchors).read_text(encoding="utf-8"))
    bad_height = first_bad_height(blocks)
    anchor_mismatches = []
    for block in blocks:
        recomputed = compute_block_hash(
            block.block_id, block.prev_hash, block.timestamp, block.sealer_id,
            compute_tx_root(block.transactions),
        )
        try:
            anchored = anchors.lookup(f"audit:{block.block_id}")
        except UnknownKey:
            anchor_mismatches.append(block.block_id)
            continue
        if recomputed != anchored or block.block_hash != anchored:
            anchor_mismatches.append(block.block_id)
    result = {
        "blocks": len(blocks),
        "chain_check": "OK" if bad_height is None else f"first bad height {bad_height}",
        "anchor_mismatches": anchor_mismatches,
    }
    sys.stdout.write(json.dumps(result, sort_keys=True, indent=2) + "\n")
    return 0 if bad_height is None and not anchor_mismatches else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consentledger",
        description="Consent-aware access control with tamper-evident audit chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario script and emit the report bundle")
    run_p.add_argument("--fixtures", default=str(default_fixture_dir()))
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--auditors", type=int, default=5)
    run_p.add_argument("--fault", action="append", metavar="NODE=FAULT",
                       help="e.g. AUD-1=byzantine or AUD-2=crash (repeatable)")
    run_p.set_defaults(func=_cmd_run)

    verify_p = sub.add_parser("verify", help="verify a subject's claimed trail entries")
    verify_p.add_argument("--subject", required=True)
    verify_p.add_argument("--claims", required=True)
    verify_p.add_argument("--chain", required=True)
    verify_p.add_argument("--anchors", required=True)
    verify_p.set_defaults(func=_cmd_verify)

    check_p = sub.add_parser("check-chain", help="recompute an exported chain against its anchors")
    check_p.add_argument("--chain", required=True)
    check_p.add_argument("--anchors", required=True)
    check_p.set_defaults(func=_cmd_check_chain)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConsentLedgerError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
