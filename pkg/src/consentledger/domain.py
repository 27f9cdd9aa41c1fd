"""Shared domain types: subjects, records, environments, conditions, requests."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum
from typing import Optional, Union

from . import canonical


class ConsentLedgerError(Exception):
    """Base class for all errors raised by this package."""


class Role(str, Enum):
    DOC = "DOC"
    NRS = "NRS"
    STF = "STF"
    BLO = "BLO"
    RLT = "RLT"
    PLT = "PLT"
    EMC = "EMC"
    PHR = "PHR"
    INA = "INA"
    PATIENT = "PATIENT"


# Roles that must carry a HIPAA/HITECH training expiry.
PROVIDER_ROLES = frozenset({Role.DOC, Role.NRS, Role.STF, Role.BLO, Role.RLT, Role.PLT})

# The nine treatment-team roles (everyone but the patient).
TEAM_ROLES = (
    Role.DOC,
    Role.NRS,
    Role.STF,
    Role.BLO,
    Role.RLT,
    Role.PLT,
    Role.EMC,
    Role.PHR,
    Role.INA,
)


class OperationKind(str, Enum):
    READ = "READ"
    WRITE = "WRITE"
    UPDATE = "UPDATE"


class Weekday(str, Enum):
    MON = "MON"
    TUE = "TUE"
    WED = "WED"
    THU = "THU"
    FRI = "FRI"
    SAT = "SAT"
    SUN = "SUN"


WEEKDAYS_IN_ORDER = tuple(Weekday)


class Verdict(str, Enum):
    PERMIT = "PERMIT"
    DENY = "DENY"


class ComplianceStatus(str, Enum):
    PENDING = "PENDING"
    COMPLIANT = "COMPLIANT"
    NONCOMPLIANT = "NONCOMPLIANT"
    NOT_DETERMINED = "NOT_DETERMINED"


class ObligationKind(str, Enum):
    NOTIFY_PATIENT = "NOTIFY_PATIENT"
    NOTIFY_EMERGENCY_CONTACT = "NOTIFY_EMERGENCY_CONTACT"
    SHARE_CLAIM_INFO = "SHARE_CLAIM_INFO"


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    display_name: str
    role: Role
    date_of_birth: date
    phone: str
    email: str
    training_expiry: Optional[date] = None
    public_key: bytes = b""


@dataclass(frozen=True)
class HealthRecordDescriptor:
    record_id: str
    record_name: str
    owner_patient_id: str
    sensitivity_class: str


# The ten record identifiers the shipped fixture world works with.
RECORD_IDS = tuple(f"HR{1000 + i}" for i in range(1, 11))


@dataclass(frozen=True)
class EnvironmentContext:
    wall_clock: int
    calendar_date: date
    day_of_week: Weekday
    location_tag: str
    source_ip: str
    emergency_flag: bool


def environment_at(
    wall_clock: int,
    *,
    location_tag: str = "hospital-main",
    source_ip: str = "10.0.0.1",
    emergency_flag: bool = False,
) -> EnvironmentContext:
    """Build an environment whose date and weekday follow the simulated clock (UTC)."""
    moment = datetime.fromtimestamp(wall_clock, tz=timezone.utc)
    return EnvironmentContext(
        wall_clock=wall_clock,
        calendar_date=moment.date(),
        day_of_week=WEEKDAYS_IN_ORDER[moment.weekday()],
        location_tag=location_tag,
        source_ip=source_ip,
        emergency_flag=emergency_flag,
    )


# --- Conditions ---------------------------------------------------------
# Six kinds; each is a union member with a fixed 1-byte tag so consent
# digests stay stable.


@dataclass(frozen=True)
class TimeWindow:
    start_second: int  # seconds since midnight
    end_second: int

    def __post_init__(self) -> None:
        if not 0 <= self.start_second < self.end_second <= 86400:
            raise ValueError("time window requires 0 <= start < end <= 86400")


@dataclass(frozen=True)
class DateRange:
    start: date
    end: date

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError("date range start after end")


@dataclass(frozen=True)
class DaySet:
    days: frozenset[Weekday]

    def __post_init__(self) -> None:
        if not self.days:
            raise ValueError("day set must be non-empty")


@dataclass(frozen=True)
class LocationSet:
    locations: frozenset[str]

    def __post_init__(self) -> None:
        if not self.locations:
            raise ValueError("location set must be non-empty")


@dataclass(frozen=True)
class IpAllowList:
    addresses: frozenset[str]

    def __post_init__(self) -> None:
        if not self.addresses:
            raise ValueError("ip allow list must be non-empty")


@dataclass(frozen=True)
class AccessFrequencyLimit:
    max_count: int

    def __post_init__(self) -> None:
        if self.max_count < 1:
            raise ValueError("frequency limit must be >= 1")


Condition = Union[TimeWindow, DateRange, DaySet, LocationSet, IpAllowList, AccessFrequencyLimit]

canonical.register_union_member(TimeWindow, 1)
canonical.register_union_member(DateRange, 2)
canonical.register_union_member(DaySet, 3)
canonical.register_union_member(LocationSet, 4)
canonical.register_union_member(IpAllowList, 5)
canonical.register_union_member(AccessFrequencyLimit, 6)


def condition_holds(condition: Condition, environment: EnvironmentContext) -> bool:
    """Evaluate one stateless condition against an environment.

    AccessFrequencyLimit is stateful and always passes here; the consent
    store enforces it against its usage counters.
    """
    if isinstance(condition, TimeWindow):
        second_of_day = environment.wall_clock % 86400
        return condition.start_second <= second_of_day < condition.end_second
    if isinstance(condition, DateRange):
        return condition.start <= environment.calendar_date <= condition.end
    if isinstance(condition, DaySet):
        return environment.day_of_week in condition.days
    if isinstance(condition, LocationSet):
        return environment.location_tag in condition.locations
    if isinstance(condition, IpAllowList):
        return environment.source_ip in condition.addresses
    if isinstance(condition, AccessFrequencyLimit):
        return True
    raise TypeError(f"unknown condition type {type(condition).__name__}")


_CONDITION_KINDS = {
    "time_window": TimeWindow,
    "date_range": DateRange,
    "day_set": DaySet,
    "location_set": LocationSet,
    "ip_allow": IpAllowList,
    "frequency_limit": AccessFrequencyLimit,
}


def condition_to_dict(condition: Condition) -> dict:
    if isinstance(condition, TimeWindow):
        return {"kind": "time_window", "start_second": condition.start_second, "end_second": condition.end_second}
    if isinstance(condition, DateRange):
        return {"kind": "date_range", "start": condition.start.isoformat(), "end": condition.end.isoformat()}
    if isinstance(condition, DaySet):
        return {"kind": "day_set", "days": sorted(d.value for d in condition.days)}
    if isinstance(condition, LocationSet):
        return {"kind": "location_set", "locations": sorted(condition.locations)}
    if isinstance(condition, IpAllowList):
        return {"kind": "ip_allow", "addresses": sorted(condition.addresses)}
    if isinstance(condition, AccessFrequencyLimit):
        return {"kind": "frequency_limit", "max_count": condition.max_count}
    raise TypeError(f"unknown condition type {type(condition).__name__}")


def condition_from_dict(data: dict) -> Condition:
    kind = data.get("kind")
    if kind == "time_window":
        return TimeWindow(int(data["start_second"]), int(data["end_second"]))
    if kind == "date_range":
        return DateRange(date.fromisoformat(data["start"]), date.fromisoformat(data["end"]))
    if kind == "day_set":
        return DaySet(frozenset(Weekday(d) for d in data["days"]))
    if kind == "location_set":
        return LocationSet(frozenset(data["locations"]))
    if kind == "ip_allow":
        return IpAllowList(frozenset(data["addresses"]))
    if kind == "frequency_limit":
        return AccessFrequencyLimit(int(data["max_count"]))
    raise ValueError(f"unknown condition kind: {kind!r}")


# --- Requests and decisions ---------------------------------------------


@dataclass(frozen=True)
class AccessRequest:
    subject_id: str
    operation: OperationKind
    object_id: str
    environment: EnvironmentContext
    presented_attributes: tuple[tuple[str, str], ...] = ()
    signature: bytes = b""

    def signing_payload(self) -> bytes:
        """Canonical bytes of everything except the signature itself."""
        return canonical.canonical_serialize(self, exclude_fields=frozenset({"signature"}))


@dataclass(frozen=True)
class Obligation:
    kind: ObligationKind
    target_subject_id: str
    triggering_policy_id: str


@dataclass(frozen=True)
class AccessDecision:
    verdict: Verdict
    matched_policy_ids: tuple[str, ...] = ()
    matched_consent_ids: tuple[str, ...] = ()
    obligations: tuple[Obligation, ...] = ()
    reason: str = ""

    @property
    def permitted(self) -> bool:
        return self.verdict is Verdict.PERMIT
