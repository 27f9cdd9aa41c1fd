"""Consent-aware access control, tamper-evident audit chains, and
compliance consensus, simulated deterministically at desk scale."""

from .anchors import AnchorRegistry
from .auditchain import AuditBlock, AuditChain, AuditTransaction, ChainConfig
from .canonical import canonical_serialize, digest, derive_keypair, sign, verify
from .consent import ConsentManager, InformedConsent, PatientProviderAgreement, TreatmentTeam
from .domain import (
    AccessDecision,
    AccessRequest,
    ComplianceStatus,
    EnvironmentContext,
    Obligation,
    OperationKind,
    Role,
    SubjectProfile,
    Verdict,
)
from .fixtures import Keystore, default_fixture_dir, default_scenario_dir, load_fixtures
from .poc import NetworkConfig, PocNetwork, run_network
from .policy import ContractAccessEngine, Policy
from .scenario import ReportBundle, ScenarioRunner, run_scenario
from .verifier import IntegrityVerifier, TrailClaim

__all__ = [
    "AccessDecision",
    "AccessRequest",
    "AnchorRegistry",
    "AuditBlock",
    "AuditChain",
    "AuditTransaction",
    "ChainConfig",
    "ComplianceStatus",
    "ConsentManager",
    "ContractAccessEngine",
    "EnvironmentContext",
    "InformedConsent",
    "IntegrityVerifier",
    "Keystore",
    "NetworkConfig",
    "Obligation",
    "OperationKind",
    "PatientProviderAgreement",
    "Policy",
    "PocNetwork",
    "ReportBundle",
    "Role",
    "ScenarioRunner",
    "SubjectProfile",
    "TrailClaim",
    "TreatmentTeam",
    "Verdict",
    "canonical_serialize",
    "default_fixture_dir",
    "default_scenario_dir",
    "derive_keypair",
    "digest",
    "load_fixtures",
    "run_network",
    "run_scenario",
    "sign",
    "verify",
]

__version__ = "0.1.0"
