"""Cross-referencing of declared vs used permissions across one firmware,
per-app bucket statistics, and protection-level change tracking across
versions."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

from .apk import ManifestReport, ProtectionBucket, bucket_for_raw
from .errors import AuditError


class EmptyAppSet(AuditError):
    """Bucket means are undefined over zero apps."""


@dataclass(frozen=True)
class DeclaredEntry:
    raw: int
    bucket: ProtectionBucket
    source: str  # "framework" or the declaring app id


@dataclass(frozen=True)
class DeclarationConflict:
    name: str
    kept_source: str
    kept_raw: int
    dropped_source: str
    dropped_raw: int


@dataclass(frozen=True)
class PermissionLedger:
    declared: dict[str, DeclaredEntry]
    used_by: dict[str, frozenset[str]]
    conflicts: tuple[DeclarationConflict, ...] = ()

    def raw_map(self) -> dict[str, int]:
        return {name: entry.raw for name, entry in self.declared.items()}


def build_ledger(
    framework_reports: Iterable[ManifestReport],
    app_reports: Iterable[ManifestReport],
) -> PermissionLedger:
    """Union of framework and app declarations plus per-app usage.

    Duplicate declarations keep the framework entry (or the first app
    entry) and log the conflict when the raw levels differ.
    """
    declared: dict[str, DeclaredEntry] = {}
    conflicts: list[DeclarationConflict] = []

    def add_declarations(report: ManifestReport, source: str) -> None:
        for perm in report.declared_permissions:
            existing = declared.get(perm.name)
            if existing is None:
                declared[perm.name] = DeclaredEntry(perm.protection_level_raw, perm.bucket, source)
            elif existing.raw != perm.protection_level_raw:
                conflicts.append(
                    DeclarationConflict(
                        name=perm.name,
                        kept_source=existing.source,
                        kept_raw=existing.raw,
                        dropped_source=source,
                        dropped_raw=perm.protection_level_raw,
                    )
                )

    framework_reports = sorted(framework_reports, key=lambda r: r.app_id)
    app_reports = sorted(app_reports, key=lambda r: r.app_id)
    for report in framework_reports:
        add_declarations(report, "framework")
    for report in app_reports:
        add_declarations(report, report.app_id)

    used_by: dict[str, set[str]] = {}
    for report in app_reports:
        for name in report.used_permissions:
            used_by.setdefault(name, set()).add(report.app_id)

    return PermissionLedger(
        declared=declared,
        used_by={name: frozenset(users) for name, users in used_by.items()},
        conflicts=tuple(conflicts),
    )


@dataclass(frozen=True)
class InconsistencyReport:
    residual: frozenset[str]  # declared but used by no preinstalled app
    phantom: frozenset[str]  # used but declared nowhere


def detect_inconsistencies(
    ledger: PermissionLedger,
    baseline_allowlist: frozenset[str] = frozenset(),
) -> InconsistencyReport:
    """Pure set algebra over the ledger.

    The optional allowlist names well-known platform permissions whose
    framework APK is absent from a partial corpus; those are excluded
    from the phantom set.  Disabled by default.
    """
    declared = set(ledger.declared)
    used = set(ledger.used_by)
    return InconsistencyReport(
        residual=frozenset(declared - used),
        phantom=frozenset(used - declared - baseline_allowlist),
    )


_BUCKET_ORDER = (
    ProtectionBucket.DANGEROUS,
    ProtectionBucket.NORMAL,
    ProtectionBucket.SIGNATURE,
    ProtectionBucket.SIGNATURE_OR_SYSTEM,
    ProtectionBucket.OTHERS,
)


@dataclass(frozen=True)
class BucketMeans:
    """Per-app means of used-permission counts by protection bucket."""

    means: dict[ProtectionBucket, float]
    app_count: int
    totals: dict[ProtectionBucket, int]
    others_unresolved: int  # used names with no declaration anywhere
    others_declared: int  # declared with a raw level outside the four bases


def per_app_bucket_means(
    app_reports: list[ManifestReport], ledger: PermissionLedger
) -> BucketMeans:
    if not app_reports:
        raise EmptyAppSet("no app reports to average over")
    totals = {bucket: 0 for bucket in _BUCKET_ORDER}
    others_unresolved = 0
    others_declared = 0
    for report in app_reports:
        for name in report.used_permissions:
            entry = ledger.declared.get(name)
            if entry is None:
                totals[ProtectionBucket.OTHERS] += 1
                others_unresolved += 1
            else:
                totals[entry.bucket] += 1
                if entry.bucket is ProtectionBucket.OTHERS:
                    others_declared += 1
    count = len(app_reports)
    means = {bucket: round(totals[bucket] / count, 2) for bucket in _BUCKET_ORDER}
    return BucketMeans(
        means=means,
        app_count=count,
        totals=totals,
        others_unresolved=others_unresolved,
        others_declared=others_declared,
    )


class ChangeDirection(Enum):
    TIGHTENED = "TIGHTENED"
    LOOSENED = "LOOSENED"
    REMOVED = "REMOVED"
    ADDED = "ADDED"
    FLAG_ONLY = "FLAG_ONLY"


@dataclass(frozen=True)
class ProtectionChangeEvent:
    name: str
    from_version: str
    to_version: str
    old_raw: Optional[int]
    new_raw: Optional[int]
    old_bucket: Optional[ProtectionBucket]
    new_bucket: Optional[ProtectionBucket]
    direction: ChangeDirection


# NORMAL < DANGEROUS < SIGNATURE == SIGNATURE_OR_SYSTEM; moves within the
# signature pair (and moves involving OTHERS) are not rankable.
_BUCKET_RANK = {
    ProtectionBucket.NORMAL: 0,
    ProtectionBucket.DANGEROUS: 1,
    ProtectionBucket.SIGNATURE: 2,
    ProtectionBucket.SIGNATURE_OR_SYSTEM: 2,
}


def _direction(old_bucket: ProtectionBucket, new_bucket: ProtectionBucket) -> ChangeDirection:
    old_rank = _BUCKET_RANK.get(old_bucket)
    new_rank = _BUCKET_RANK.get(new_bucket)
    if old_rank is None or new_rank is None or old_rank == new_rank:
        return ChangeDirection.FLAG_ONLY
    return ChangeDirection.TIGHTENED if new_rank > old_rank else ChangeDirection.LOOSENED


def protection_changes(
    versions: list[tuple[str, Mapping[str, int]]],
) -> list[ProtectionChangeEvent]:
    """Consecutive-version comparison of declared protection levels.

    Input is an ordered list of (version label, permission -> raw level);
    a PermissionLedger's raw_map() fits directly.
    """
    events: list[ProtectionChangeEvent] = []
    for (old_label, old_map), (new_label, new_map) in zip(versions, versions[1:]):
        for name in sorted(set(old_map) | set(new_map)):
            old_raw = old_map.get(name)
            new_raw = new_map.get(name)
            if old_raw == new_raw:
                continue
            if old_raw is None:
                events.append(
                    ProtectionChangeEvent(
                        name, old_label, new_label, None, new_raw, None,
                        bucket_for_raw(new_raw), ChangeDirection.ADDED,
                    )
                )
                continue
            if new_raw is None:
                events.append(
                    ProtectionChangeEvent(
                        name, old_label, new_label, old_raw, None,
                        bucket_for_raw(old_raw), None, ChangeDirection.REMOVED,
                    )
                )
                continue
            old_bucket = bucket_for_raw(old_raw)
            new_bucket = bucket_for_raw(new_raw)
            direction = (
                ChangeDirection.FLAG_ONLY
                if old_bucket == new_bucket
                else _direction(old_bucket, new_bucket)
            )
            events.append(
                ProtectionChangeEvent(
                    name, old_label, new_label, old_raw, new_raw,
                    old_bucket, new_bucket, direction,
                )
            )
    return events
