"""Kernel-layer audit: boot image unpacking, embedded config extraction,
mitigation catalog evaluation and LTS lag.

The embedded configuration is located via the IKCFG_ST/IKCFG_ED markers
that the kernel build writes around a gzip stream of the .config text.
Kernels that are themselves compressed (gzip or LZ4) are decompressed
first by scanning for compression magics anywhere in the blob.
"""

from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import AuditError


class BadMagic(AuditError):
    """Blob is not a boot image this toolkit understands."""


class TruncatedImage(AuditError):
    """Header-declared sizes exceed the blob."""


class NoEmbeddedConfig(AuditError):
    """No IKCFG marker found at any decompression layer."""


class CorruptConfigStream(AuditError):
    """IKCFG marker present but the gzip payload would not decompress."""


class BannerNotFound(AuditError):
    """No "Linux version" banner in the kernel blob."""


class CatalogFormatError(AuditError):
    """A mitigation catalog / LTS table / build-id map file is malformed."""


# ---------------------------------------------------------------------------
# Boot image

BOOT_MAGIC = b"ANDROID!"
_MIN_HEADER = 44  # through the header_version field


@dataclass(frozen=True)
class BootImage:
    header_version: int
    page_size: int
    kernel_blob: bytes
    ramdisk_blob: bytes
    raw_size: int


def parse_boot_image(blob: bytes) -> BootImage:
    """Unpack a v0-v2 boot image: kernel starts at offset page_size.

    Header versions 3+ relocate the kernel and are rejected; a value
    above 8 at the version offset is the legacy dt-size field and the
    image is treated as v0.
    """
    if blob[:8] != BOOT_MAGIC:
        raise BadMagic("boot image magic missing")
    if len(blob) < _MIN_HEADER:
        raise TruncatedImage("blob shorter than boot image header")
    kernel_size = struct.unpack_from("<I", blob, 8)[0]
    ramdisk_size = struct.unpack_from("<I", blob, 16)[0]
    page_size = struct.unpack_from("<I", blob, 36)[0]
    header_version = struct.unpack_from("<I", blob, 40)[0]
    if header_version > 8:
        header_version = 0  # pre-v1 images store a dt size in this slot
    elif header_version > 2:
        raise BadMagic(f"unsupported boot header version {header_version}")
    if page_size == 0:
        raise TruncatedImage("declared page size is zero")
    kernel_end = page_size + kernel_size
    if kernel_end > len(blob):
        raise TruncatedImage("declared kernel size exceeds blob")
    pages = (kernel_size + page_size - 1) // page_size
    ramdisk_off = page_size + pages * page_size
    if ramdisk_size and ramdisk_off + ramdisk_size > len(blob):
        raise TruncatedImage("declared ramdisk size exceeds blob")
    ramdisk = blob[ramdisk_off : ramdisk_off + ramdisk_size] if ramdisk_size else b""
    return BootImage(
        header_version=header_version,
        page_size=page_size,
        kernel_blob=blob[page_size:kernel_end],
        ramdisk_blob=ramdisk,
        raw_size=len(blob),
    )


# ---------------------------------------------------------------------------
# Decompression helpers

GZIP_MAGIC = b"\x1f\x8b\x08"
LZ4_FRAME_MAGIC = b"\x04\x22\x4d\x18"
LZ4_LEGACY_MAGIC = b"\x02\x21\x4c\x18"

_MAX_DECOMPRESSED = 512 * 1024 * 1024


def _gunzip_at(data: bytes, offset: int) -> bytes:
    obj = zlib.decompressobj(31)
    out = obj.decompress(data[offset:], _MAX_DECOMPRESSED)
    if not out or not obj.eof:
        raise zlib.error("incomplete gzip stream")
    return out


def _lz4_block(data: bytes, start: int, end: int) -> bytes:
    """Decode one raw LZ4 block occupying data[start:end]."""
    out = bytearray()
    i = start
    while i < end:
        token = data[i]
        i += 1
        lit_len = token >> 4
        if lit_len == 15:
            while True:
                b = data[i]
                i += 1
                lit_len += b
                if b != 255:
                    break
        if i + lit_len > end:
            raise ValueError("literal run past block end")
        out += data[i : i + lit_len]
        i += lit_len
        if i >= end:
            break  # last sequence carries no match
        offset = data[i] | (data[i + 1] << 8)
        i += 2
        match_len = token & 0xF
        if match_len == 15:
            while True:
                b = data[i]
                i += 1
                match_len += b
                if b != 255:
                    break
        match_len += 4
        pos = len(out) - offset
        if offset == 0 or pos < 0:
            raise ValueError("bad match offset")
        if offset >= match_len:
            out += out[pos : pos + match_len]
        else:
            for _ in range(match_len):
                out.append(out[pos])
                pos += 1
        if len(out) > _MAX_DECOMPRESSED:
            raise ValueError("decompressed output too large")
    return bytes(out)


def _lz4_legacy_at(data: bytes, offset: int) -> bytes:
    """Decode a legacy LZ4 container: magic then (u32 size, block) repeated."""
    out = bytearray()
    i = offset + 4
    while i + 4 <= len(data):
        size = struct.unpack_from("<I", data, i)[0]
        if size == struct.unpack("<I", LZ4_LEGACY_MAGIC)[0]:
            i += 4  # concatenated legacy frame
            continue
        if size == 0 or i + 4 + size > len(data):
            break
        try:
            out += _lz4_block(data, i + 4, i + 4 + size)
        except (ValueError, IndexError):
            break
        i += 4 + size
    if not out:
        raise ValueError("no legacy LZ4 block decoded")
    return bytes(out)


def _lz4_frame_at(data: bytes, offset: int) -> bytes:
    """Decode an LZ4 frame; xxhash checksums are skipped, not verified."""
    i = offset + 4
    flg = data[i]
    if (flg >> 6) != 0b01:
        raise ValueError("bad LZ4 frame version")
    block_checksum = bool(flg & 0x10)
    content_size = bool(flg & 0x08)
    dict_id = bool(flg & 0x01)
    i += 2  # FLG + BD
    if content_size:
        i += 8
    if dict_id:
        i += 4
    i += 1  # header checksum
    out = bytearray()
    while True:
        if i + 4 > len(data):
            raise ValueError("truncated LZ4 frame")
        size = struct.unpack_from("<I", data, i)[0]
        i += 4
        if size == 0:
            break
        uncompressed = bool(size & 0x80000000)
        size &= 0x7FFFFFFF
        if i + size > len(data):
            raise ValueError("truncated LZ4 block")
        if uncompressed:
            out += data[i : i + size]
        else:
            out += _lz4_block(data, i, i + size)
        i += size
        if block_checksum:
            i += 4
        if len(out) > _MAX_DECOMPRESSED:
            raise ValueError("decompressed output too large")
    if not out:
        raise ValueError("empty LZ4 frame")
    return bytes(out)


def _iter_decompressed_layers(blob: bytes):
    """Yield plausible decompressions, scanning magics anywhere in the blob.

    Candidates are tried in file order; failures are skipped so that
    decompressor stubs prepended to the real stream do not end the scan.
    """
    candidates = []
    for magic, decoder in (
        (GZIP_MAGIC, _gunzip_at),
        (LZ4_FRAME_MAGIC, _lz4_frame_at),
        (LZ4_LEGACY_MAGIC, _lz4_legacy_at),
    ):
        pos = blob.find(magic)
        while pos != -1:
            candidates.append((pos, decoder))
            pos = blob.find(magic, pos + 1)
    for pos, decoder in sorted(candidates, key=lambda c: c[0]):
        try:
            yield decoder(blob, pos)
        except (ValueError, IndexError, zlib.error, struct.error):
            continue


# ---------------------------------------------------------------------------
# Embedded kernel configuration

IKCFG_ST = b"IKCFG_ST"
IKCFG_ED = b"IKCFG_ED"

_OPTION_RE = re.compile(r"^(CONFIG_[A-Z0-9_]+)=(.*)$")
_NOT_SET_RE = re.compile(r"^# (CONFIG_[A-Z0-9_]+) is not set$")


class OptionState(Enum):
    Y = "y"
    M = "m"
    VALUE = "value"
    NOT_SET = "not_set"
    ABSENT = "absent"


@dataclass
class KernelConfig:
    """Parsed kernel build configuration; absent options query as ABSENT."""

    options: dict[str, tuple[OptionState, Optional[str]]]
    raw_text: str

    def state(self, name: str) -> OptionState:
        return self.options.get(name, (OptionState.ABSENT, None))[0]

    def value(self, name: str) -> Optional[str]:
        return self.options.get(name, (OptionState.ABSENT, None))[1]

    def enabled(self, name: str) -> bool:
        # =m still provides the mitigation at runtime; reported distinctly.
        return self.state(name) in (OptionState.Y, OptionState.M)


def parse_kernel_config(text: str) -> KernelConfig:
    options: dict[str, tuple[OptionState, Optional[str]]] = {}
    for line in text.splitlines():
        m = _OPTION_RE.match(line)
        if m:
            name, value = m.group(1), m.group(2)
            if value == "y":
                options[name] = (OptionState.Y, "y")
            elif value == "m":
                options[name] = (OptionState.M, "m")
            else:
                options[name] = (OptionState.VALUE, value)
            continue
        m = _NOT_SET_RE.match(line)
        if m:
            options[m.group(1)] = (OptionState.NOT_SET, None)
    return KernelConfig(options, text)


def _scan_ikconfig(blob: bytes) -> tuple[Optional[str], bool]:
    """Return (config text, marker seen) for the first decodable marker."""
    marker_seen = False
    pos = blob.find(IKCFG_ST)
    while pos != -1:
        marker_seen = True
        payload = pos + len(IKCFG_ST)
        if blob[payload : payload + 2] == b"\x1f\x8b":
            try:
                obj = zlib.decompressobj(31)
                text = obj.decompress(blob[payload:], _MAX_DECOMPRESSED)
                if obj.eof:
                    return text.decode("utf-8", errors="replace"), True
            except zlib.error:
                pass
        pos = blob.find(IKCFG_ST, pos + 1)
    return None, marker_seen


def extract_ikconfig(kernel_blob: bytes, _depth: int = 0) -> KernelConfig:
    """Extract the embedded .config from a kernel blob (compressed or not)."""
    text, marker_seen = _scan_ikconfig(kernel_blob)
    if text is not None:
        return parse_kernel_config(text)
    if _depth < 3:
        for layer in _iter_decompressed_layers(kernel_blob):
            try:
                return extract_ikconfig(layer, _depth + 1)
            except NoEmbeddedConfig:
                continue
    if marker_seen:
        raise CorruptConfigStream("IKCFG_ST found but payload would not decompress")
    raise NoEmbeddedConfig("no IKCFG_ST marker at any layer")


# ---------------------------------------------------------------------------
# Kernel version banner

_BANNER_PREFIX = b"Linux version "
_VERSION_RE = re.compile(rb"(\d+)\.(\d+)(?:\.(\d+))?")


@dataclass(frozen=True)
class KernelVersion:
    major: int
    minor: int
    patch: int
    banner: str

    @property
    def series(self) -> tuple[int, int]:
        return (self.major, self.minor)

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"


def _find_banner(blob: bytes) -> Optional[KernelVersion]:
    pos = blob.find(_BANNER_PREFIX)
    while pos != -1:
        tail = blob[pos : pos + 256]
        m = _VERSION_RE.match(tail[len(_BANNER_PREFIX) :])
        if m:
            end = len(tail)
            for stop in (b"\n", b"\x00"):
                cut = tail.find(stop)
                if cut != -1:
                    end = min(end, cut)
            major = int(m.group(1))
            if major >= 2:
                return KernelVersion(
                    major=major,
                    minor=int(m.group(2)),
                    patch=int(m.group(3) or 0),
                    banner=tail[:end].decode("latin-1"),
                )
        pos = blob.find(_BANNER_PREFIX, pos + 1)
    return None


def extract_kernel_version(kernel_blob: bytes) -> KernelVersion:
    """Parse the first "Linux version x.y.z" banner, decompressing if needed."""
    found = _find_banner(kernel_blob)
    if found is not None:
        return found
    for layer in _iter_decompressed_layers(kernel_blob):
        found = _find_banner(layer)
        if found is not None:
            return found
    raise BannerNotFound("no Linux version banner in kernel blob")


# ---------------------------------------------------------------------------
# Mitigation catalog

_OPTION_NAME_RE = re.compile(r"^CONFIG_[A-Z0-9_]+$")


class Requirement(Enum):
    MUST = "MUST"
    STRONGLY_RECOMMENDED_10 = "STRONGLY_RECOMMENDED_10"
    STRONGLY_RECOMMENDED_12 = "STRONGLY_RECOMMENDED_12"
    SUGGESTED = "SUGGESTED"


class MitigationStatus(Enum):
    ENABLED = "ENABLED"
    ABSENT = "ABSENT"


# Human-readable context per catalog id; override files with unknown ids
# simply fall back to the id itself.
MITIGATION_INFO = {
    "stack_protector": ("stack overflow", "Stack Protector"),
    "kaslr": ("control flow hijacking", "KASLR"),
    "slab_freelist_random": ("heap corruption", "Freelist Randomization"),
    "hardened_usercopy": ("information leakage", "Hardened Usercopy"),
    "fortify_source": ("buffer overflow", "Fortify Source"),
    "strict_kernel_rwx": ("code injection", "Non-executable Kernel Memory"),
    "userspace_pan": ("privilege escalation", "Userspace Access Restriction (PAN)"),
    "kpti": ("Meltdown", "Kernel Page Table Isolation"),
    "spectre_bhb": ("Spectre", "Branch History Mitigation"),
    "kernel_cfi": ("code reuse", "Kernel CFI with Shadow Call Stack"),
    "stack_init": ("stack data leaks", "Automatic Stack Initialization"),
    "heap_init": ("heap data leaks", "Heap Initialization on Allocation"),
    "list_debug": ("use after free", "Linked List Corruption Checks"),
    "bpf_jit_always_on": ("speculative execution", "BPF JIT Always On"),
    "slab_freelist_hardened": ("freelist exploits", "Hardened Slab Freelist"),
    "vmap_stack": ("stack corruption", "Virtually Mapped Kernel Stacks"),
    "arm64_uao": ("type confusion", "ARM64 User Access Override"),
}


@dataclass(frozen=True)
class MitigationCatalogEntry:
    id: str
    attack_vector: str
    mitigation_name: str
    requirement: Requirement
    clauses: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.clauses:
            raise CatalogFormatError(f"catalog entry {self.id!r} has no clauses")
        for clause in self.clauses:
            for option in clause:
                if not _OPTION_NAME_RE.match(option):
                    raise CatalogFormatError(
                        f"catalog entry {self.id!r}: bad option name {option!r}"
                    )


@dataclass(frozen=True)
class MitigationVerdict:
    entry_id: str
    status: MitigationStatus
    requirement: Requirement
    requirement_for_version: str
    satisfied_clause: tuple[str, ...] = ()
    clause_states: tuple[tuple[str, str], ...] = ()


def resolve_requirement(requirement: Requirement, android_sdk: Optional[int]) -> str:
    """Collapse version-conditional requirement classes for one firmware.

    Entries that became strongly recommended with Android 10 (SDK 29) or
    Android 12 (SDK 31) count as SUGGESTED below those levels.
    """
    sdk = android_sdk or 0
    if requirement is Requirement.MUST:
        return "MUST"
    if requirement is Requirement.STRONGLY_RECOMMENDED_10:
        return "STRONGLY_RECOMMENDED" if sdk >= 29 else "SUGGESTED"
    if requirement is Requirement.STRONGLY_RECOMMENDED_12:
        return "STRONGLY_RECOMMENDED" if sdk >= 31 else "SUGGESTED"
    return "SUGGESTED"


def _data_text(name: str) -> str:
    return resources.files("vrfaudit").joinpath("data", name).read_text(encoding="utf-8")


def parse_mitigation_catalog(text: str) -> tuple[MitigationCatalogEntry, ...]:
    entries: list[MitigationCatalogEntry] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = [p.strip() for p in stripped.split("|")]
        if len(parts) != 3:
            raise CatalogFormatError(f"catalog line {lineno}: expected 3 '|' fields")
        entry_id, requirement_text, clause_text = parts
        if entry_id in seen:
            raise CatalogFormatError(f"catalog line {lineno}: duplicate id {entry_id!r}")
        seen.add(entry_id)
        try:
            requirement = Requirement(requirement_text)
        except ValueError:
            raise CatalogFormatError(
                f"catalog line {lineno}: unknown requirement {requirement_text!r}"
            ) from None
        clauses = tuple(
            tuple(opt.strip() for opt in clause.split("+") if opt.strip())
            for clause in clause_text.split(";")
            if clause.strip()
        )
        attack_vector, mitigation_name = MITIGATION_INFO.get(entry_id, ("", entry_id))
        entries.append(
            MitigationCatalogEntry(entry_id, attack_vector, mitigation_name, requirement, clauses)
        )
    if not entries:
        raise CatalogFormatError("catalog file contains no entries")
    return tuple(entries)


def load_mitigation_catalog(path: Optional[Path] = None) -> tuple[MitigationCatalogEntry, ...]:
    if path is not None:
        return parse_mitigation_catalog(Path(path).read_text(encoding="utf-8"))
    return parse_mitigation_catalog(_data_text("mitigation_catalog.txt"))


def evaluate_mitigations(
    config: KernelConfig,
    android_sdk: Optional[int],
    catalog: Optional[tuple[MitigationCatalogEntry, ...]] = None,
) -> list[MitigationVerdict]:
    """One verdict per catalog entry; a clause satisfies when every option
    in it is enabled (=y or =m)."""
    if catalog is None:
        catalog = load_mitigation_catalog()
    verdicts = []
    for entry in catalog:
        satisfied: tuple[str, ...] = ()
        states: tuple[tuple[str, str], ...] = ()
        for clause in entry.clauses:
            if all(config.enabled(opt) for opt in clause):
                satisfied = clause
                states = tuple((opt, config.state(opt).value) for opt in clause)
                break
        verdicts.append(
            MitigationVerdict(
                entry_id=entry.id,
                status=MitigationStatus.ENABLED if satisfied else MitigationStatus.ABSENT,
                requirement=entry.requirement,
                requirement_for_version=resolve_requirement(entry.requirement, android_sdk),
                satisfied_clause=satisfied,
                clause_states=states,
            )
        )
    return verdicts


# ---------------------------------------------------------------------------
# LTS lag

LtsTable = tuple[tuple[tuple[int, int], date], ...]


def parse_lts_table(text: str) -> LtsTable:
    rows: list[tuple[tuple[int, int], date]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = [p.strip() for p in stripped.split("|")]
        if len(parts) != 2:
            raise CatalogFormatError(f"LTS table line {lineno}: expected 2 '|' fields")
        series_text, date_text = parts
        m = re.match(r"^(\d+)\.(\d+)$", series_text)
        if not m:
            raise CatalogFormatError(f"LTS table line {lineno}: bad series {series_text!r}")
        try:
            release = date.fromisoformat(date_text)
        except ValueError:
            raise CatalogFormatError(f"LTS table line {lineno}: bad date {date_text!r}") from None
        rows.append(((int(m.group(1)), int(m.group(2))), release))
    if not rows:
        raise CatalogFormatError("LTS table contains no entries")
    for earlier, later in zip(rows, rows[1:]):
        if later[1] < earlier[1]:
            raise CatalogFormatError("LTS table is not sorted by date")
    return tuple(rows)


def load_lts_table(path: Optional[Path] = None) -> LtsTable:
    if path is not None:
        return parse_lts_table(Path(path).read_text(encoding="utf-8"))
    return parse_lts_table(_data_text("lts_table.txt"))


@dataclass(frozen=True)
class LtsLag:
    status: str  # LAGGING | CURRENT | INDETERMINATE
    firmware_series: tuple[int, int]
    latest_series: Optional[tuple[int, int]] = None
    latest_series_date: Optional[date] = None


def lts_lag(
    version: KernelVersion,
    release_date: Optional[date],
    lts_table: Optional[LtsTable] = None,
) -> LtsLag:
    """Compare the firmware's kernel series against the newest LTS series
    released on or before the firmware's release date."""
    if lts_table is None:
        lts_table = load_lts_table()
    if release_date is None:
        return LtsLag(status="INDETERMINATE", firmware_series=version.series)
    latest: Optional[tuple[tuple[int, int], date]] = None
    for series, released in lts_table:
        if released <= release_date:
            latest = (series, released)
    if latest is None:
        return LtsLag(status="CURRENT", firmware_series=version.series)
    lagging = version.series < latest[0]
    return LtsLag(
        status="LAGGING" if lagging else "CURRENT",
        firmware_series=version.series,
        latest_series=latest[0],
        latest_series_date=latest[1],
    )


# ---------------------------------------------------------------------------
# Build-id map (used by ingest for Meta version resolution)


def parse_buildid_map(text: str) -> dict[str, tuple[int, str]]:
    mapping: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = [p.strip() for p in stripped.split("|")]
        if len(parts) != 3:
            raise CatalogFormatError(f"build-id map line {lineno}: expected 3 '|' fields")
        pattern, sdk_text, release = parts
        try:
            sdk = int(sdk_text)
        except ValueError:
            raise CatalogFormatError(f"build-id map line {lineno}: bad sdk {sdk_text!r}") from None
        if not pattern:
            raise CatalogFormatError(f"build-id map line {lineno}: empty pattern")
        mapping[pattern] = (sdk, release)
    return mapping


def load_buildid_map(path: Optional[Path] = None) -> dict[str, tuple[int, str]]:
    if path is not None:
        return parse_buildid_map(Path(path).read_text(encoding="utf-8"))
    return parse_buildid_map(_data_text("buildid_map.txt"))
