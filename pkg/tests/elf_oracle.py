"""Independent hardening oracle built on binutils readelf.

Used to cross-check the toolkit's own ELF reader against a completely
separate parsing route.  Verdict semantics mirror the audit definitions:
canary/CFI/fortify from symbol names, NX from PT_GNU_STACK flags, RELRO
from PT_GNU_RELRO plus bind-now dynamic tags.
"""

import re
import subprocess
from pathlib import Path

CANARY = {"__stack_chk_fail", "__stack_chk_fail_local"}
CFI_EXACT = {"__cfi_check", "__cfi_slowpath"}


def _readelf(path: Path, *flags: str) -> str:
    result = subprocess.run(
        ["readelf", *flags, str(path)], capture_output=True, text=True, check=False
    )
    return result.stdout


def _symbol_names(path: Path) -> set[str]:
    names = set()
    for line in _readelf(path, "-sW").splitlines():
        parts = line.split()
        if len(parts) >= 8 and parts[0].rstrip(":").isdigit():
            names.add(parts[7].split("@")[0])
    for line in _readelf(path, "-rW").splitlines():
        parts = line.split()
        if len(parts) >= 5 and parts[2].startswith("R_"):
            names.add(parts[4].split("@")[0])
    return names


def _segment_flags(path: Path, segment: str):
    """(present, flag letters) for a program header type."""
    for line in _readelf(path, "-lW").splitlines():
        parts = line.split()
        if parts and parts[0] == segment:
            letters = "".join(p for p in parts[1:] if not p.startswith("0x"))
            return True, letters
    return False, ""


def _bind_now(path: Path) -> bool:
    for line in _readelf(path, "-dW").splitlines():
        if "(BIND_NOW)" in line:
            return True
        if "(FLAGS)" in line and "BIND_NOW" in line:
            return True
        if "(FLAGS_1)" in line and re.search(r"\bNOW\b", line):
            return True
    return False


def oracle_verdict(path: Path) -> dict:
    names = _symbol_names(path)
    stack_present, stack_flags = _segment_flags(path, "GNU_STACK")
    relro_present, _ = _segment_flags(path, "GNU_RELRO")
    raw = Path(path).read_bytes()
    if not relro_present:
        relro = "NONE"
    elif _bind_now(path):
        relro = "FULL"
    else:
        relro = "PARTIAL"
    return {
        "canary": bool(names & CANARY),
        "cfi": any(n.endswith(".cfi") or n in CFI_EXACT for n in names),
        "fortify": any(n.startswith("__") and n.endswith("_chk") for n in names)
        or b"buffer overflow detected" in raw,
        "nx": stack_present and "E" not in stack_flags,
        "relro": relro,
    }
