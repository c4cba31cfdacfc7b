"""APK archive handling, manifest security flags, permissions and app category."""

from __future__ import annotations

import zipfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional

from .axml import AxmlDocument, parse_axml
from .errors import AuditError

ELF_MAGIC = b"\x7fELF"
MANIFEST_ENTRY = "AndroidManifest.xml"

# Stable attribute resource ids from the public Android resource table.
RESID_NAME = 0x01010003
RESID_PROTECTION_LEVEL = 0x01010009
RESID_DEBUGGABLE = 0x0101000F
RESID_ALLOW_BACKUP = 0x01010280
RESID_USES_CLEARTEXT_TRAFFIC = 0x010104EC

ACTION_MAIN = "android.intent.action.MAIN"
CATEGORY_LAUNCHER = "android.intent.category.LAUNCHER"

DEFAULT_FRAMEWORK_APK_NAMES = (
    "com.oculus.os.platform-res.apk",
    "horizonos.platform-res.apk",
    "framework-res.apk",
)

_PROTECTION_NAMES = {
    "normal": 0,
    "dangerous": 1,
    "signature": 2,
    "signatureorsystem": 3,
    "signature|privileged": 0x12,
}


class NotAZip(AuditError):
    """File is not a zip archive."""


class NoManifest(AuditError):
    """Archive has no AndroidManifest.xml entry."""


class ProtectionBucket(Enum):
    DANGEROUS = "DANGEROUS"
    NORMAL = "NORMAL"
    SIGNATURE = "SIGNATURE"
    SIGNATURE_OR_SYSTEM = "SIGNATURE_OR_SYSTEM"
    OTHERS = "OTHERS"


class AppCategory(Enum):
    USER_LAUNCHABLE = "USER_LAUNCHABLE"
    ANDROID_SYSTEM = "ANDROID_SYSTEM"
    VENDOR_SPECIFIC = "VENDOR_SPECIFIC"


def bucket_for_raw(raw: int) -> ProtectionBucket:
    """Base nibble decides the bucket; flag bits above it are kept raw."""
    base = raw & 0x0F
    return {
        0: ProtectionBucket.NORMAL,
        1: ProtectionBucket.DANGEROUS,
        2: ProtectionBucket.SIGNATURE,
        3: ProtectionBucket.SIGNATURE_OR_SYSTEM,
    }.get(base, ProtectionBucket.OTHERS)


class ApkFile:
    """Zip container with a locatable manifest and embedded native libraries."""

    def __init__(self, path: Path, zf: zipfile.ZipFile, lib_prefixes: tuple[str, ...]):
        self.path = Path(path)
        self._zf = zf
        self._lib_prefixes = lib_prefixes

    def manifest_bytes(self) -> bytes:
        return self._zf.read(MANIFEST_ENTRY)

    def iter_embedded_elf(self) -> Iterator[tuple[str, bytes]]:
        for name in sorted(self._zf.namelist()):
            if not name.startswith(self._lib_prefixes) or name.endswith("/"):
                continue
            try:
                with self._zf.open(name) as fh:
                    head = fh.read(4)
                    if head != ELF_MAGIC:
                        continue
                    data = head + fh.read()
            except (OSError, zipfile.BadZipFile):
                continue
            yield name, data

    def close(self) -> None:
        self._zf.close()

    def __enter__(self) -> "ApkFile":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_apk(path: Path) -> ApkFile:
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise NotAZip(f"{path}: {exc}") from exc
    if MANIFEST_ENTRY not in zf.namelist():
        zf.close()
        raise NoManifest(f"{path} has no {MANIFEST_ENTRY}")
    return ApkFile(path, zf, lib_prefixes=("lib/",))


def open_apex(path: Path) -> ApkFile:
    """Packed apex treated as a zip container; only lib*/ trees are scanned.

    No manifest is required; manifest_bytes() is not meaningful here.
    """
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise NotAZip(f"{path}: {exc}") from exc
    return ApkFile(path, zf, lib_prefixes=("lib/", "lib64/"))


@dataclass(frozen=True)
class SecurityFlags:
    """Tri-state: True/False only when the attribute is literally present."""

    allow_backup: Optional[bool] = None
    debuggable: Optional[bool] = None
    use_cleartext_traffic: Optional[bool] = None


@dataclass(frozen=True)
class DeclaredPermission:
    name: str
    protection_level_raw: int
    bucket: ProtectionBucket


@dataclass(frozen=True)
class ManifestReport:
    package_name: str
    flags: SecurityFlags
    used_permissions: frozenset[str]
    declared_permissions: tuple[DeclaredPermission, ...]
    has_launcher_activity: bool
    category: AppCategory
    source_path: Optional[str] = None

    @property
    def app_id(self) -> str:
        return self.package_name or (self.source_path or "<unknown>")


def _flag_value(attr) -> Optional[bool]:
    if attr is None:
        return None
    if isinstance(attr.value, bool):
        return attr.value
    if isinstance(attr.value, int):
        return attr.value != 0
    if isinstance(attr.value, str):
        return attr.value.lower() == "true"
    return None


def _protection_raw(attr) -> int:
    if attr is None:
        return 0
    if isinstance(attr.value, bool):
        return int(attr.value)
    if isinstance(attr.value, int):
        return attr.value
    if isinstance(attr.value, str):
        total = 0
        for part in attr.value.lower().split("|"):
            total |= _PROTECTION_NAMES.get(part.strip(), 0)
        return total
    return 0


def _has_launcher_filter(element) -> bool:
    for child in element.children:
        if child.name != "intent-filter":
            continue
        has_main = False
        has_launcher = False
        for item in child.children:
            attr = item.attr("name", RESID_NAME)
            value = attr.value if attr is not None else None
            if item.name == "action" and value == ACTION_MAIN:
                has_main = True
            elif item.name == "category" and value == CATEGORY_LAUNCHER:
                has_launcher = True
        if has_main and has_launcher:
            return True
    return False


def categorize(package_name: str, has_launcher: bool) -> AppCategory:
    if package_name.startswith("com.android."):
        return AppCategory.ANDROID_SYSTEM
    if has_launcher:
        return AppCategory.USER_LAUNCHABLE
    return AppCategory.VENDOR_SPECIFIC


def extract_manifest_report(doc: AxmlDocument, source_path: Optional[str] = None) -> ManifestReport:
    """Pull security flags, permission usage/declarations and the app
    category out of a parsed manifest."""
    package = ""
    flags = SecurityFlags()
    used: set[str] = set()
    declared: list[DeclaredPermission] = []
    has_launcher = False

    root = doc.root
    if root is not None and root.name == "manifest":
        pkg_attr = root.attr("package")
        if pkg_attr is not None and isinstance(pkg_attr.value, str):
            package = pkg_attr.value

    for element in doc.iter_elements():
        if element.name == "application":
            flags = SecurityFlags(
                allow_backup=_flag_value(element.attr("allowBackup", RESID_ALLOW_BACKUP)),
                debuggable=_flag_value(element.attr("debuggable", RESID_DEBUGGABLE)),
                use_cleartext_traffic=_flag_value(
                    element.attr("usesCleartextTraffic", RESID_USES_CLEARTEXT_TRAFFIC)
                ),
            )
        elif element.name == "uses-permission":
            attr = element.attr("name", RESID_NAME)
            if attr is not None and isinstance(attr.value, str) and attr.value:
                used.add(attr.value)
        elif element.name == "permission":
            attr = element.attr("name", RESID_NAME)
            if attr is None or not isinstance(attr.value, str) or not attr.value:
                continue
            raw = _protection_raw(element.attr("protectionLevel", RESID_PROTECTION_LEVEL))
            declared.append(DeclaredPermission(attr.value, raw, bucket_for_raw(raw)))
        elif element.name in ("activity", "activity-alias"):
            if _has_launcher_filter(element):
                has_launcher = True

    return ManifestReport(
        package_name=package,
        flags=flags,
        used_permissions=frozenset(used),
        declared_permissions=tuple(declared),
        has_launcher_activity=has_launcher,
        category=categorize(package, has_launcher),
        source_path=source_path,
    )


def report_for_apk(path: Path, source_label: Optional[str] = None) -> ManifestReport:
    with open_apk(path) as apk:
        doc = parse_axml(apk.manifest_bytes())
    return extract_manifest_report(doc, source_label or Path(path).as_posix())


@dataclass(frozen=True)
class FlagCounts:
    use_cleartext_traffic: int
    allow_backup: int
    debuggable: int


def summarize_flags(reports: list[ManifestReport]) -> FlagCounts:
    """Apps with each security flag explicitly set to true."""
    return FlagCounts(
        use_cleartext_traffic=sum(1 for r in reports if r.flags.use_cleartext_traffic is True),
        allow_backup=sum(1 for r in reports if r.flags.allow_backup is True),
        debuggable=sum(1 for r in reports if r.flags.debuggable is True),
    )
