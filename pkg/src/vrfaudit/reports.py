"""Per-version audit reports: canonical JSON persistence, trend series,
change events and plot-ready exports.

Reports are canonical (sorted keys, sorted lists, compact separators) so
that auditing the same firmware tree twice yields byte-identical files;
the produced_at timestamp is excluded from the content digest.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from . import __version__
from .errors import AuditError
from .permissions import protection_changes

SCHEMA_VERSION = 1


class VersionCollision(AuditError):
    """Same device/version label already stored with different content."""


class UnknownMetric(AuditError):
    """Metric id not in the registry."""


# ---------------------------------------------------------------------------
# Canonical serialization


def canonical_bytes(report: dict) -> bytes:
    return json.dumps(report, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def report_digest(report: dict) -> str:
    content = {k: v for k, v in report.items() if k != "produced_at"}
    return hashlib.sha256(canonical_bytes(content)).hexdigest()


def new_report(
    firmware: dict,
    kernel: dict,
    binaries: dict,
    apps: dict,
    permissions: dict,
    sepolicy: dict,
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
        "produced_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "firmware": firmware,
        "kernel": kernel,
        "binaries": binaries,
        "apps": apps,
        "permissions": permissions,
        "sepolicy": sepolicy,
    }


# ---------------------------------------------------------------------------
# Catalog storage

_INDEX_NAME = "index.json"


def _safe_label(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", label) or "_"


def report_path(catalog_dir: Path, device: str, version: str) -> Path:
    return Path(catalog_dir) / _safe_label(device) / f"{_safe_label(version)}.json"


def store_report(report: dict, catalog_dir: Path) -> Path:
    """Write the canonical report; identical re-stores are no-ops."""
    device = report["firmware"]["device_model"]
    version = report["firmware"]["version_label"]
    path = report_path(catalog_dir, device, version)
    digest = report_digest(report)
    if path.exists():
        existing = json.loads(path.read_text(encoding="utf-8"))
        if report_digest(existing) != digest:
            raise VersionCollision(
                f"{device}/{version} already stored with different content"
            )
        return path
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(canonical_bytes(report))
    _update_index(Path(catalog_dir), device, version, report, digest)
    return path


def _update_index(catalog_dir: Path, device: str, version: str, report: dict, digest: str) -> None:
    index_path = catalog_dir / _INDEX_NAME
    index: dict = {"devices": {}}
    if index_path.exists():
        try:
            index = json.loads(index_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            index = {"devices": {}}
    index.setdefault("devices", {}).setdefault(device, {})[version] = {
        "date": report["firmware"].get("release_date"),
        "digest": digest,
    }
    index_path.write_bytes(canonical_bytes(index))


def _natural_key(label: str):
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", label))


def load_reports(catalog_dir: Path, device: str) -> tuple[list[dict], str]:
    """All stored reports for a device, ordered by release date.

    Falls back to natural version-label order (flagged as
    "version_fallback") when any report lacks a date.
    """
    device_dir = Path(catalog_dir) / _safe_label(device)
    reports = []
    if device_dir.is_dir():
        for path in sorted(device_dir.glob("*.json")):
            reports.append(json.loads(path.read_text(encoding="utf-8")))
    if all(r["firmware"].get("release_date") for r in reports):
        reports.sort(
            key=lambda r: (
                r["firmware"]["release_date"],
                _natural_key(r["firmware"]["version_label"]),
            )
        )
        return reports, "date"
    reports.sort(key=lambda r: _natural_key(r["firmware"]["version_label"]))
    return reports, "version_fallback"


# ---------------------------------------------------------------------------
# Metrics and trend series


def _kernel_enabled(report: dict) -> Optional[int]:
    kernel = report.get("kernel") or {}
    mitigations = kernel.get("mitigations")
    if mitigations is None:
        return None
    return sum(1 for m in mitigations if m.get("status") == "ENABLED")


def _kernel_absent(report: dict) -> Optional[int]:
    kernel = report.get("kernel") or {}
    mitigations = kernel.get("mitigations")
    if mitigations is None:
        return None
    return sum(1 for m in mitigations if m.get("status") == "ABSENT")


def _path_metric(*keys: str) -> Callable[[dict], Optional[float]]:
    def extract(report: dict) -> Optional[float]:
        node: Any = report
        for key in keys:
            if not isinstance(node, dict) or key not in node:
                return None
            node = node[key]
        return node if isinstance(node, (int, float)) else None

    return extract


METRICS: dict[str, Callable[[dict], Optional[float]]] = {
    "kernel.mitigations_enabled": _kernel_enabled,
    "kernel.mitigations_absent": _kernel_absent,
    "binaries.total": _path_metric("binaries", "total"),
    "binaries.no_canary": _path_metric("binaries", "without", "canary"),
    "binaries.no_cfi": _path_metric("binaries", "without", "cfi"),
    "binaries.no_fortify": _path_metric("binaries", "without", "fortify"),
    "binaries.no_nx": _path_metric("binaries", "without", "nx"),
    "binaries.no_relro": _path_metric("binaries", "without", "relro"),
    "binaries.unique_content": _path_metric("binaries", "unique_content"),
    "apps.total": _path_metric("apps", "total"),
    "apps.cleartext": _path_metric("apps", "flags", "use_cleartext_traffic"),
    "apps.allow_backup": _path_metric("apps", "flags", "allow_backup"),
    "apps.debuggable": _path_metric("apps", "flags", "debuggable"),
    "permissions.phantom_count": _path_metric("permissions", "phantom_count"),
    "permissions.residual_count": _path_metric("permissions", "residual_count"),
    "sepolicy.allow_count": _path_metric("sepolicy", "allow_count"),
    "sepolicy.neverallow_count": _path_metric("sepolicy", "neverallow_count"),
}

# metrics watched for FLAG_COUNT_JUMP events
JUMP_METRICS = (
    "binaries.no_canary",
    "binaries.no_cfi",
    "binaries.no_fortify",
    "binaries.no_nx",
    "binaries.no_relro",
    "apps.cleartext",
    "apps.allow_backup",
    "apps.debuggable",
)


@dataclass(frozen=True)
class TrendPoint:
    version: str
    date: Optional[str]
    value: Optional[float]


@dataclass(frozen=True)
class TrendSeries:
    metric: str
    device: str
    points: tuple[TrendPoint, ...]
    ordered_by: str = "date"


def compute_trends(
    catalog_dir: Path, device: str, metrics: Iterable[str]
) -> list[TrendSeries]:
    """Extract one ordered series per metric id; a report missing the
    metric contributes a gap point, not an error."""
    metric_list = list(metrics)
    for metric in metric_list:
        if metric not in METRICS:
            raise UnknownMetric(metric)
    reports, ordered_by = load_reports(catalog_dir, device)
    series = []
    for metric in metric_list:
        extract = METRICS[metric]
        points = tuple(
            TrendPoint(
                version=r["firmware"]["version_label"],
                date=r["firmware"].get("release_date"),
                value=extract(r),
            )
            for r in reports
        )
        series.append(TrendSeries(metric=metric, device=device, points=points, ordered_by=ordered_by))
    return series


# ---------------------------------------------------------------------------
# Change events


class EventKind(Enum):
    MITIGATION_ADDED = "MITIGATION_ADDED"
    MITIGATION_REMOVED = "MITIGATION_REMOVED"
    FLAG_COUNT_JUMP = "FLAG_COUNT_JUMP"
    PROTECTION_CHANGE = "PROTECTION_CHANGE"
    NEVERALLOW_REMOVED = "NEVERALLOW_REMOVED"
    ANDROID_VERSION_BUMP = "ANDROID_VERSION_BUMP"
    KERNEL_SERIES_CHANGE = "KERNEL_SERIES_CHANGE"


REGRESSION_KINDS = frozenset(
    {EventKind.MITIGATION_REMOVED, EventKind.NEVERALLOW_REMOVED}
)


@dataclass(frozen=True)
class ChangeEvent:
    kind: EventKind
    from_version: str
    to_version: str
    payload: dict

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "from_version": self.from_version,
            "to_version": self.to_version,
            "payload": self.payload,
        }


def _enabled_mitigations(report: dict) -> Optional[set[str]]:
    kernel = report.get("kernel") or {}
    mitigations = kernel.get("mitigations")
    if mitigations is None:
        return None
    return {m["id"] for m in mitigations if m.get("status") == "ENABLED"}


def _neverallow_keys(report: dict) -> Optional[Counter]:
    sepolicy = report.get("sepolicy") or {}
    keys = sepolicy.get("rule_keys")
    if keys is None:
        return None
    return Counter(k for k in keys if k.startswith("(neverallow "))


def events_between(
    old: dict, new: dict, jump_threshold: float = 0.25
) -> list[ChangeEvent]:
    """Change events derived solely from one consecutive report pair."""
    old_label = old["firmware"]["version_label"]
    new_label = new["firmware"]["version_label"]
    events: list[ChangeEvent] = []

    old_enabled = _enabled_mitigations(old)
    new_enabled = _enabled_mitigations(new)
    if old_enabled is not None and new_enabled is not None:
        for entry_id in sorted(new_enabled - old_enabled):
            events.append(
                ChangeEvent(EventKind.MITIGATION_ADDED, old_label, new_label, {"id": entry_id})
            )
        for entry_id in sorted(old_enabled - new_enabled):
            events.append(
                ChangeEvent(EventKind.MITIGATION_REMOVED, old_label, new_label, {"id": entry_id})
            )

    old_sdk = old["firmware"].get("android_sdk")
    new_sdk = new["firmware"].get("android_sdk")
    if old_sdk is not None and new_sdk is not None and old_sdk != new_sdk:
        events.append(
            ChangeEvent(
                EventKind.ANDROID_VERSION_BUMP,
                old_label,
                new_label,
                {"from_sdk": old_sdk, "to_sdk": new_sdk},
            )
        )

    old_series = ((old.get("kernel") or {}).get("version") or {})
    new_series = ((new.get("kernel") or {}).get("version") or {})
    if old_series.get("major") is not None and new_series.get("major") is not None:
        old_pair = (old_series["major"], old_series["minor"])
        new_pair = (new_series["major"], new_series["minor"])
        if old_pair != new_pair:
            events.append(
                ChangeEvent(
                    EventKind.KERNEL_SERIES_CHANGE,
                    old_label,
                    new_label,
                    {
                        "from_series": f"{old_pair[0]}.{old_pair[1]}",
                        "to_series": f"{new_pair[0]}.{new_pair[1]}",
                    },
                )
            )

    for metric in JUMP_METRICS:
        old_value = METRICS[metric](old)
        new_value = METRICS[metric](new)
        if old_value is None or new_value is None:
            continue
        if abs(new_value - old_value) / max(old_value, 1) >= jump_threshold:
            events.append(
                ChangeEvent(
                    EventKind.FLAG_COUNT_JUMP,
                    old_label,
                    new_label,
                    {"metric": metric, "from": old_value, "to": new_value},
                )
            )

    old_declared = (old.get("permissions") or {}).get("declared")
    new_declared = (new.get("permissions") or {}).get("declared")
    if old_declared is not None and new_declared is not None:
        for change in protection_changes([(old_label, old_declared), (new_label, new_declared)]):
            events.append(
                ChangeEvent(
                    EventKind.PROTECTION_CHANGE,
                    old_label,
                    new_label,
                    {
                        "permission": change.name,
                        "direction": change.direction.value,
                        "from_raw": change.old_raw,
                        "to_raw": change.new_raw,
                        "from_bucket": change.old_bucket.value if change.old_bucket else None,
                        "to_bucket": change.new_bucket.value if change.new_bucket else None,
                    },
                )
            )

    old_never = _neverallow_keys(old)
    new_never = _neverallow_keys(new)
    if old_never is not None and new_never is not None:
        removed = old_never - new_never
        for key in sorted(removed):
            events.append(
                ChangeEvent(
                    EventKind.NEVERALLOW_REMOVED,
                    old_label,
                    new_label,
                    {"rule": key, "count": removed[key]},
                )
            )

    return events


def detect_change_events(catalog_dir: Path, device: str, jump_threshold: float = 0.25) -> list[ChangeEvent]:
    """Events for the device's whole history: the concatenation of the
    events of its consecutive report pairs."""
    reports, _ = load_reports(catalog_dir, device)
    events: list[ChangeEvent] = []
    for old, new in zip(reports, reports[1:]):
        events.extend(events_between(old, new, jump_threshold))
    return events


# ---------------------------------------------------------------------------
# Exports

CSV_COLUMNS = ("metric", "device", "version", "date", "value")


def export_series_csv(series: Iterable[TrendSeries]) -> bytes:
    buffer = io.StringIO(newline="")
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(CSV_COLUMNS)
    for s in series:
        for p in s.points:
            writer.writerow(
                [
                    s.metric,
                    s.device,
                    p.version,
                    p.date or "",
                    "" if p.value is None else p.value,
                ]
            )
    return buffer.getvalue().encode("utf-8")


def export_series_json(series: Iterable[TrendSeries]) -> bytes:
    payload = {
        "series": [
            {
                "metric": s.metric,
                "device": s.device,
                "ordered_by": s.ordered_by,
                "points": [
                    {"version": p.version, "date": p.date, "value": p.value} for p in s.points
                ],
            }
            for s in series
        ]
    }
    return canonical_bytes(payload)


def import_series_json(data: bytes) -> list[TrendSeries]:
    payload = json.loads(data.decode("utf-8"))
    return [
        TrendSeries(
            metric=s["metric"],
            device=s["device"],
            ordered_by=s.get("ordered_by", "date"),
            points=tuple(
                TrendPoint(version=p["version"], date=p["date"], value=p["value"])
                for p in s["points"]
            ),
        )
        for s in payload["series"]
    ]


def export_events_json(events: Iterable[ChangeEvent], device: str) -> bytes:
    return canonical_bytes({"device": device, "events": [e.as_dict() for e in events]})


def export_events_csv(events: Iterable[ChangeEvent], device: str) -> bytes:
    buffer = io.StringIO(newline="")
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(("kind", "device", "from_version", "to_version", "detail"))
    for event in events:
        writer.writerow(
            (
                event.kind.value,
                device,
                event.from_version,
                event.to_version,
                json.dumps(event.payload, sort_keys=True),
            )
        )
    return buffer.getvalue().encode("utf-8")
