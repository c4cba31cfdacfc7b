"""Firmware tree ingestion: partition roots, build properties, audit targets.

Input is an already-extracted firmware version: one directory per
partition (system/, vendor/, odm/) plus an optional boot.img blob.
Filesystem-image mounting and archive unpacking happen upstream with
external tools.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional

from .errors import AuditError


class NoPartitions(AuditError):
    """No recognized partition root under the firmware directory."""


class UnreadableRoot(AuditError):
    """Firmware root or a declared partition root cannot be read."""


class VersionUnresolved(AuditError):
    """No usable Android version property found."""


KNOWN_DEVICE_MODELS = frozenset(
    {"quest", "quest2", "quest3", "quest_pro", "pico_neo3", "pico4"}
)

PARTITION_NAMES = ("system", "vendor", "odm")
ELF_SUBDIRS = ("bin", "lib", "lib64")
APK_DIRS = (
    ("system", "priv-app"),
    ("system", "app"),
    ("vendor", "app"),
    ("odm", "app"),
)
SELINUX_PARTITIONS = ("system", "vendor")

ELF_MAGIC = b"\x7fELF"
MANIFEST_NAME = "vrfaudit.manifest"
BOOT_IMAGE_NAME = "boot.img"


def normalize_device_model(label: str) -> str:
    model = label.strip().lower().replace("-", "_").replace(" ", "_")
    if not model:
        raise ValueError("device model must not be empty")
    return model


def is_pico(device_model: str) -> bool:
    return device_model.startswith("pico")


@dataclass(frozen=True)
class BuildProperties:
    """Ordered key=value pairs from a build.prop file.

    Duplicate keys are preserved in file order; lookups are last-wins.
    """

    entries: tuple[tuple[str, str], ...]
    source_path: Optional[Path] = None
    skipped_lines: int = 0

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        value = default
        for k, v in self.entries:
            if k == key:
                value = v
        return value

    def serialize(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.entries)


def parse_build_prop_text(text: str, source_path: Optional[Path] = None) -> BuildProperties:
    entries: list[tuple[str, str]] = []
    skipped = 0
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            skipped += 1
            continue
        entries.append((key, value))
    return BuildProperties(tuple(entries), source_path, skipped)


def parse_build_prop(path: Path) -> BuildProperties:
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    return parse_build_prop_text(text, Path(path))


@dataclass(frozen=True)
class FirmwareRecord:
    """Identity and layout of one extracted firmware version."""

    device_model: str
    version_label: str
    partition_roots: dict[str, Path]
    boot_image: Optional[Path] = None
    release_date: Optional[date] = None
    android_sdk: Optional[int] = None
    android_release: Optional[str] = None
    build_props: Optional[BuildProperties] = None

    def __post_init__(self):
        if not self.device_model:
            raise ValueError("device_model must not be empty")
        if not self.partition_roots:
            raise NoPartitions("record has no partition roots")


@dataclass(frozen=True)
class TargetSet:
    """Audit targets enumerated from a firmware tree, sorted and deduplicated."""

    elf_candidates: tuple[Path, ...]
    apk_candidates: tuple[Path, ...]
    cil_candidates: tuple[Path, ...]
    apex_archives: tuple[Path, ...] = ()
    kernel_blob: Optional[Path] = None


def _read_manifest(path: Path) -> dict[str, str]:
    props = parse_build_prop(path)
    return {k: v for k, v in props.entries}


def load_firmware(
    root: Path,
    device_model: str,
    version_label: str,
    release_date: Optional[date] = None,
    buildid_map: Optional[dict[str, tuple[int, str]]] = None,
) -> FirmwareRecord:
    """Normalize an extracted firmware directory into a FirmwareRecord.

    Partition roots default to system/, vendor/, odm/ subdirectories; a
    vrfaudit.manifest file in the root may remap them.  A missing
    boot.img or unresolvable Android version is tolerated and left
    unset.
    """
    root = Path(root)
    model = normalize_device_model(device_model)
    try:
        if not root.is_dir():
            raise UnreadableRoot(f"not a readable directory: {root}")
        entries = set(os.listdir(root))
    except OSError as exc:
        raise UnreadableRoot(f"cannot read firmware root {root}: {exc}") from exc

    overrides: dict[str, str] = {}
    if MANIFEST_NAME in entries:
        overrides = _read_manifest(root / MANIFEST_NAME)

    partition_roots: dict[str, Path] = {}
    for name in PARTITION_NAMES:
        if name in overrides:
            candidate = (root / overrides[name]).resolve()
            if not candidate.is_dir():
                raise UnreadableRoot(
                    f"manifest maps partition {name!r} to unreadable path {candidate}"
                )
            partition_roots[name] = candidate
        elif (root / name).is_dir():
            partition_roots[name] = (root / name).resolve()
    if not partition_roots:
        raise NoPartitions(f"no system/, vendor/ or odm/ subtree under {root}")

    boot_image: Optional[Path] = None
    boot_override = overrides.get("boot_image", BOOT_IMAGE_NAME)
    boot_candidate = root / boot_override
    if boot_candidate.is_file():
        boot_image = boot_candidate.resolve()

    props: Optional[BuildProperties] = None
    sdk: Optional[int] = None
    release: Optional[str] = None
    system_root = partition_roots.get("system")
    if system_root is not None and (system_root / "build.prop").is_file():
        props = parse_build_prop(system_root / "build.prop")
        try:
            sdk, release = resolve_android_version(props, model, buildid_map)
        except VersionUnresolved:
            pass

    return FirmwareRecord(
        device_model=model,
        version_label=version_label,
        partition_roots=partition_roots,
        boot_image=boot_image,
        release_date=release_date,
        android_sdk=sdk,
        android_release=release,
        build_props=props,
    )


def lookup_build_id(build_id: str, buildid_map: dict[str, tuple[int, str]]) -> Optional[tuple[int, str]]:
    """Exact match first, then the longest matching `PREFIX*` pattern."""
    if build_id in buildid_map:
        return buildid_map[build_id]
    best: Optional[tuple[int, str]] = None
    best_len = -1
    for pattern, versions in buildid_map.items():
        if pattern.endswith("*") and build_id.startswith(pattern[:-1]):
            if len(pattern) > best_len:
                best, best_len = versions, len(pattern)
    return best


def resolve_android_version(
    props: BuildProperties,
    device_model: str,
    buildid_map: Optional[dict[str, tuple[int, str]]] = None,
) -> tuple[int, str]:
    """Resolve (sdk, release) from system build properties.

    Pico devices carry the version in ro.system.build.version.*; Meta
    devices are resolved from ro.build.id through the build-id map, with
    ro.build.version.* as the fallback when the map misses.
    """
    if is_pico(device_model):
        sdk_text = props.get("ro.system.build.version.sdk") or props.get("ro.build.version.sdk")
        release = props.get("ro.system.build.version.release") or props.get(
            "ro.build.version.release"
        )
        if sdk_text is not None:
            return int(sdk_text), release or ""
        raise VersionUnresolved("no ro.system.build.version.sdk property")

    if buildid_map is None:
        from .kernel import load_buildid_map

        buildid_map = load_buildid_map()
    build_id = props.get("ro.build.id")
    if build_id:
        mapped = lookup_build_id(build_id, buildid_map)
        if mapped is not None:
            return mapped
    sdk_text = props.get("ro.build.version.sdk")
    if sdk_text is not None:
        return int(sdk_text), props.get("ro.build.version.release") or ""
    raise VersionUnresolved("no usable version property (ro.build.id unmapped)")


def _within_roots(path: Path, resolved_roots: list[Path]) -> bool:
    try:
        resolved = path.resolve()
    except OSError:
        return False
    return any(resolved.is_relative_to(r) for r in resolved_roots)


def _walk_files(top: Path, resolved_roots: list[Path]) -> list[tuple[Path, Path]]:
    """Yield (listed_path, resolved_path) pairs for regular files under top.

    Symlinks are followed only while the resolved target stays inside a
    partition root; directory cycles are cut by tracking resolved dirs.
    """
    results: list[tuple[Path, Path]] = []
    if not top.is_dir():
        return results
    seen_dirs = {top.resolve()}
    stack = [top]
    while stack:
        current = stack.pop()
        try:
            children = sorted(os.listdir(current))
        except OSError:
            continue
        for name in children:
            child = current / name
            try:
                resolved = child.resolve()
            except OSError:
                continue
            if child.is_dir():
                if not any(resolved.is_relative_to(r) for r in resolved_roots):
                    continue
                if resolved in seen_dirs:
                    continue
                seen_dirs.add(resolved)
                stack.append(child)
            elif child.is_file():
                if any(resolved.is_relative_to(r) for r in resolved_roots):
                    results.append((child, resolved))
    return results


def _has_elf_magic(path: Path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == ELF_MAGIC
    except OSError:
        return False


def enumerate_targets(record: FirmwareRecord) -> TargetSet:
    """Enumerate ELF, APK, CIL and apex targets by canonical partition paths.

    Deterministic: results are sorted lexicographically and deduplicated
    by resolved path.  Missing directories simply contribute nothing.
    """
    roots = record.partition_roots
    resolved_roots = [r.resolve() for r in roots.values()]

    elf_seen: dict[Path, Path] = {}
    apex_seen: dict[Path, Path] = {}
    scan_dirs = [roots[p] / sub for p in roots for sub in ELF_SUBDIRS]
    if "system" in roots:
        scan_dirs.append(roots["system"] / "apex")
    for top in scan_dirs:
        for listed, resolved in _walk_files(top, resolved_roots):
            if resolved in elf_seen or resolved in apex_seen:
                continue
            if listed.suffix in (".apex", ".capex"):
                apex_seen[resolved] = listed
            elif _has_elf_magic(listed):
                elf_seen[resolved] = listed

    apk_seen: dict[Path, Path] = {}
    for partition, sub in APK_DIRS:
        if partition not in roots:
            continue
        for listed, resolved in _walk_files(roots[partition] / sub, resolved_roots):
            if listed.suffix == ".apk" and resolved not in apk_seen:
                apk_seen[resolved] = listed

    cil_seen: dict[Path, Path] = {}
    for partition in SELINUX_PARTITIONS:
        if partition not in roots:
            continue
        for listed, resolved in _walk_files(roots[partition] / "etc" / "selinux", resolved_roots):
            if listed.suffix == ".cil" and resolved not in cil_seen:
                cil_seen[resolved] = listed

    def ordered(seen: dict[Path, Path]) -> tuple[Path, ...]:
        return tuple(sorted(seen.values(), key=str))

    return TargetSet(
        elf_candidates=ordered(elf_seen),
        apk_candidates=ordered(apk_seen),
        cil_candidates=ordered(cil_seen),
        apex_archives=ordered(apex_seen),
        kernel_blob=record.boot_image,
    )
