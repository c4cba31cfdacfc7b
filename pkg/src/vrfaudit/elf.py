"""Tolerant ELF reader and the five binary hardening checks.

The reader is deliberately forgiving: stripped binaries without section
headers still yield program headers and dynamic-table symbols, and a
damaged section table degrades the parse to PARTIAL_PARSE instead of
failing the file.  Only unreadable program headers reject a file.
"""

from __future__ import annotations

import hashlib
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import AuditError


class MalformedElf(AuditError):
    """Program headers are unreadable; the file cannot be audited."""


ELF_MAGIC = b"\x7fELF"

PT_LOAD = 1
PT_DYNAMIC = 2
PT_GNU_STACK = 0x6474E551
PT_GNU_RELRO = 0x6474E552
PF_X = 0x1

SHT_SYMTAB = 2
SHT_STRTAB = 3
SHT_RELA = 4
SHT_REL = 9
SHT_DYNSYM = 11

DT_NULL = 0
DT_PLTRELSZ = 2
DT_HASH = 4
DT_STRTAB = 5
DT_SYMTAB = 6
DT_RELA = 7
DT_RELASZ = 8
DT_STRSZ = 10
DT_SYMENT = 11
DT_REL = 17
DT_RELSZ = 18
DT_PLTREL = 20
DT_JMPREL = 23
DT_BIND_NOW = 24
DT_FLAGS = 30
DT_GNU_HASH = 0x6FFFFEF5
DT_FLAGS_1 = 0x6FFFFFFB
DF_BIND_NOW = 0x8
DF_1_NOW = 0x1

_MAX_SYMBOLS = 2_000_000
FORTIFY_NEEDLE = b"buffer overflow detected"

CANARY_SYMBOLS = ("__stack_chk_fail", "__stack_chk_fail_local")
CFI_EXACT_SYMBOLS = ("__cfi_check", "__cfi_slowpath")


class ElfClass(Enum):
    ELF32 = 32
    ELF64 = 64


class ParseStatus(Enum):
    OK = "OK"
    PARTIAL_PARSE = "PARTIAL_PARSE"
    FAILED = "FAILED"


class Relro(Enum):
    NONE = "NONE"
    PARTIAL = "PARTIAL"
    FULL = "FULL"


@dataclass(frozen=True)
class ProgramHeader:
    type: int
    flags: int
    offset: int
    vaddr: int
    filesz: int
    memsz: int


@dataclass
class ElfFile:
    elf_class: ElfClass
    machine: int
    program_headers: list[ProgramHeader]
    dynamic_entries: list[tuple[int, int]] = field(default_factory=list)
    dynamic_symbols: list[str] = field(default_factory=list)
    static_symbols: list[str] = field(default_factory=list)
    relocation_symbol_names: list[str] = field(default_factory=list)
    parse_status: ParseStatus = ParseStatus.OK
    notes: list[str] = field(default_factory=list)
    data: bytes = b""

    def loaded_ranges(self) -> list[tuple[int, int]]:
        ranges = []
        for ph in self.program_headers:
            if ph.type == PT_LOAD and ph.filesz > 0:
                start = min(ph.offset, len(self.data))
                end = min(ph.offset + ph.filesz, len(self.data))
                if end > start:
                    ranges.append((start, end))
        return ranges

    def loaded_contains(self, needle: bytes) -> bool:
        return any(self.data.find(needle, start, end) != -1 for start, end in self.loaded_ranges())

    def strings(self, min_length: int = 4) -> Iterator[str]:
        """Printable ASCII runs within loaded segments."""
        for start, end in self.loaded_ranges():
            run_start = None
            for i in range(start, end):
                b = self.data[i]
                if 0x20 <= b <= 0x7E:
                    if run_start is None:
                        run_start = i
                else:
                    if run_start is not None and i - run_start >= min_length:
                        yield self.data[run_start:i].decode("ascii")
                    run_start = None
            if run_start is not None and end - run_start >= min_length:
                yield self.data[run_start:end].decode("ascii")

    def all_symbol_names(self) -> set[str]:
        return set(self.dynamic_symbols) | set(self.static_symbols) | set(
            self.relocation_symbol_names
        )

    def vaddr_to_offset(self, vaddr: int) -> Optional[int]:
        for ph in self.program_headers:
            if ph.type == PT_LOAD and ph.vaddr <= vaddr < ph.vaddr + ph.filesz:
                return ph.offset + (vaddr - ph.vaddr)
        return None

    def dynamic_value(self, tag: int) -> Optional[int]:
        for t, v in self.dynamic_entries:
            if t == tag:
                return v
        return None


def _read_cstr(data: bytes, offset: int, limit: int) -> Optional[str]:
    if offset < 0 or offset >= limit or offset >= len(data):
        return None
    end = data.find(b"\x00", offset, min(limit, len(data)))
    if end == -1:
        return None
    return data[offset:end].decode("utf-8", errors="replace")


def _parse_symbols(
    data: bytes,
    sym_off: int,
    count: int,
    entsize: int,
    str_off: int,
    str_end: int,
    is64: bool,
) -> list[str]:
    names = []
    name_fmt = "<I"
    count = min(count, _MAX_SYMBOLS)
    for i in range(count):
        rec = sym_off + i * entsize
        if rec + 4 > len(data):
            break
        st_name = struct.unpack_from(name_fmt, data, rec)[0]
        if st_name == 0:
            continue
        name = _read_cstr(data, str_off + st_name, str_end)
        if name:
            names.append(name)
    return names


class _Parser:
    def __init__(self, data: bytes):
        self.data = data
        self.elf: Optional[ElfFile] = None

    def parse(self) -> ElfFile:
        data = self.data
        if data[:4] != ELF_MAGIC:
            raise MalformedElf("missing ELF magic")
        if len(data) < 52:
            raise MalformedElf("shorter than any ELF header")
        ei_class, ei_data = data[4], data[5]
        if ei_data == 2:
            raise MalformedElf("big-endian ELF not supported")
        if ei_data != 1:
            raise MalformedElf(f"invalid EI_DATA {ei_data}")
        if ei_class == 1:
            is64 = False
        elif ei_class == 2:
            is64 = True
        else:
            raise MalformedElf(f"invalid EI_CLASS {ei_class}")
        self.is64 = is64

        if is64:
            if len(data) < 64:
                raise MalformedElf("truncated ELF64 header")
            (e_type, e_machine, _ver, _entry, e_phoff, e_shoff, _flags, _ehsize,
             e_phentsize, e_phnum, e_shentsize, e_shnum, e_shstrndx) = struct.unpack_from(
                "<HHIQQQIHHHHHH", data, 16
            )
            min_phent = 56
        else:
            (e_type, e_machine, _ver, _entry, e_phoff, e_shoff, _flags, _ehsize,
             e_phentsize, e_phnum, e_shentsize, e_shnum, e_shstrndx) = struct.unpack_from(
                "<HHIIIIIHHHHHH", data, 16
            )
            min_phent = 32

        phdrs = self._program_headers(e_phoff, e_phentsize, e_phnum, min_phent)
        elf = ElfFile(
            elf_class=ElfClass.ELF64 if is64 else ElfClass.ELF32,
            machine=e_machine,
            program_headers=phdrs,
            data=data,
        )
        self.elf = elf

        self._dynamic(elf)

        sections = None
        try:
            sections = self._section_headers(e_shoff, e_shentsize, e_shnum)
        except Exception as exc:  # damaged section table: degrade, don't fail
            elf.notes.append(f"section headers unreadable: {exc}")
            elf.parse_status = ParseStatus.PARTIAL_PARSE

        got_dynsym_from_sections = False
        if sections:
            got_dynsym_from_sections = self._symbols_from_sections(elf, sections)
        if not got_dynsym_from_sections:
            self._symbols_from_dynamic(elf)
        return elf

    def _program_headers(
        self, e_phoff: int, e_phentsize: int, e_phnum: int, min_phent: int
    ) -> list[ProgramHeader]:
        data = self.data
        if e_phnum == 0:
            return []
        if e_phentsize < min_phent:
            raise MalformedElf(f"program header entry size {e_phentsize} too small")
        end = e_phoff + e_phnum * e_phentsize
        if e_phoff < 52 or end > len(data):
            raise MalformedElf("program header table out of bounds")
        headers = []
        for i in range(e_phnum):
            base = e_phoff + i * e_phentsize
            if self.is64:
                p_type, p_flags, p_offset, p_vaddr, _pa, p_filesz, p_memsz = struct.unpack_from(
                    "<IIQQQQQ", data, base
                )[:7]
            else:
                p_type, p_offset, p_vaddr, _pa, p_filesz, p_memsz, p_flags = struct.unpack_from(
                    "<IIIIIII", data, base
                )[:7]
            headers.append(ProgramHeader(p_type, p_flags, p_offset, p_vaddr, p_filesz, p_memsz))
        return headers

    def _dynamic(self, elf: ElfFile) -> None:
        data = self.data
        entsize = 16 if self.is64 else 8
        fmt = "<qQ" if self.is64 else "<iI"
        for ph in elf.program_headers:
            if ph.type != PT_DYNAMIC:
                continue
            end = min(ph.offset + ph.filesz, len(data))
            pos = ph.offset
            while pos + entsize <= end:
                tag, value = struct.unpack_from(fmt, data, pos)
                if tag == DT_NULL:
                    return
                elf.dynamic_entries.append((tag, value))
                pos += entsize
            if pos + entsize > end and ph.filesz:
                elf.notes.append("dynamic segment truncated")
                elf.parse_status = ParseStatus.PARTIAL_PARSE
            return

    def _section_headers(self, e_shoff, e_shentsize, e_shnum):
        data = self.data
        if e_shoff == 0 or e_shnum == 0:
            return []
        min_shent = 64 if self.is64 else 40
        if e_shentsize < min_shent:
            raise ValueError(f"section header entry size {e_shentsize} too small")
        end = e_shoff + e_shnum * e_shentsize
        if end > len(data):
            raise ValueError("section header table out of bounds")
        fmt = "<IIQQQQIIQQ" if self.is64 else "<IIIIIIIIII"
        sections = []
        for i in range(e_shnum):
            vals = struct.unpack_from(fmt, data, e_shoff + i * e_shentsize)
            sections.append(
                {
                    "type": vals[1],
                    "offset": vals[4],
                    "size": vals[5],
                    "link": vals[6],
                    "entsize": vals[9],
                }
            )
        return sections

    def _strtab_bounds(self, sections, index) -> Optional[tuple[int, int]]:
        if index < 0 or index >= len(sections):
            return None
        sec = sections[index]
        if sec["type"] != SHT_STRTAB:
            return None
        return sec["offset"], sec["offset"] + sec["size"]

    def _symbols_from_sections(self, elf: ElfFile, sections) -> bool:
        data = self.data
        default_entsize = 24 if self.is64 else 16
        symbol_tables: dict[int, list[str]] = {}
        got_dynsym = False
        for idx, sec in enumerate(sections):
            if sec["type"] not in (SHT_DYNSYM, SHT_SYMTAB):
                continue
            bounds = self._strtab_bounds(sections, sec["link"])
            if bounds is None:
                elf.notes.append(f"symbol section {idx} has no usable string table")
                elf.parse_status = ParseStatus.PARTIAL_PARSE
                continue
            entsize = sec["entsize"] or default_entsize
            if entsize < default_entsize or sec["offset"] + sec["size"] > len(data):
                elf.notes.append(f"symbol section {idx} out of bounds")
                elf.parse_status = ParseStatus.PARTIAL_PARSE
                continue
            names = _parse_symbols(
                data, sec["offset"], sec["size"] // entsize, entsize, bounds[0], bounds[1], self.is64
            )
            symbol_tables[idx] = names
            if sec["type"] == SHT_DYNSYM:
                elf.dynamic_symbols.extend(names)
                got_dynsym = True
            else:
                elf.static_symbols.extend(names)

        # relocation sections reference symbols through their sh_link table
        for sec in sections:
            if sec["type"] not in (SHT_REL, SHT_RELA):
                continue
            link_names = self._indexed_names(sections, sec["link"])
            if link_names is None:
                continue
            entsize = sec["entsize"] or self._reloc_entsize(sec["type"] == SHT_RELA)
            if entsize <= 0 or sec["offset"] + sec["size"] > len(data):
                continue
            for name in self._reloc_names(sec["offset"], sec["size"], entsize, link_names):
                elf.relocation_symbol_names.append(name)
        return got_dynsym

    def _indexed_names(self, sections, index) -> Optional[list[str]]:
        """Symbol names by symbol-table index (index 0 placeholder included)."""
        if index < 0 or index >= len(sections):
            return None
        sec = sections[index]
        if sec["type"] not in (SHT_DYNSYM, SHT_SYMTAB):
            return None
        bounds = self._strtab_bounds(sections, sec["link"])
        if bounds is None:
            return None
        default_entsize = 24 if self.is64 else 16
        entsize = sec["entsize"] or default_entsize
        if entsize < default_entsize:
            return None
        names = []
        count = min(sec["size"] // entsize, _MAX_SYMBOLS)
        for i in range(count):
            rec = sec["offset"] + i * entsize
            if rec + 4 > len(self.data):
                break
            st_name = struct.unpack_from("<I", self.data, rec)[0]
            names.append(_read_cstr(self.data, bounds[0] + st_name, bounds[1]) or "")
        return names

    def _reloc_entsize(self, is_rela: bool) -> int:
        if self.is64:
            return 24 if is_rela else 16
        return 12 if is_rela else 8

    def _reloc_names(self, offset, size, entsize, indexed_names) -> Iterator[str]:
        data = self.data
        count = min(size // entsize, _MAX_SYMBOLS)
        for i in range(count):
            rec = offset + i * entsize
            if self.is64:
                if rec + 16 > len(data):
                    break
                r_info = struct.unpack_from("<Q", data, rec + 8)[0]
                sym = r_info >> 32
            else:
                if rec + 8 > len(data):
                    break
                r_info = struct.unpack_from("<I", data, rec + 4)[0]
                sym = r_info >> 8
            if 0 < sym < len(indexed_names) and indexed_names[sym]:
                yield indexed_names[sym]

    def _dynsym_count(self, elf: ElfFile) -> int:
        data = self.data
        hash_vaddr = elf.dynamic_value(DT_HASH)
        if hash_vaddr is not None:
            off = elf.vaddr_to_offset(hash_vaddr)
            if off is not None and off + 8 <= len(data):
                return struct.unpack_from("<I", data, off + 4)[0]
        gnu_vaddr = elf.dynamic_value(DT_GNU_HASH)
        if gnu_vaddr is not None:
            count = self._gnu_hash_count(elf, gnu_vaddr)
            if count:
                return count
        symtab = elf.dynamic_value(DT_SYMTAB)
        strtab = elf.dynamic_value(DT_STRTAB)
        syment = elf.dynamic_value(DT_SYMENT) or (24 if self.is64 else 16)
        if symtab is not None and strtab is not None and strtab > symtab and syment:
            # string table customarily follows the symbol table
            return (strtab - symtab) // syment
        return 0

    def _gnu_hash_count(self, elf: ElfFile, vaddr: int) -> int:
        data = self.data
        off = elf.vaddr_to_offset(vaddr)
        if off is None or off + 16 > len(data):
            return 0
        nbuckets, symoffset, bloom_size, _shift = struct.unpack_from("<IIII", data, off)
        word = 8 if self.is64 else 4
        buckets_off = off + 16 + bloom_size * word
        if buckets_off + nbuckets * 4 > len(data) or nbuckets == 0:
            return 0
        buckets = struct.unpack_from(f"<{nbuckets}I", data, buckets_off)
        last = max(buckets)
        if last < symoffset:
            return symoffset
        chain_off = buckets_off + nbuckets * 4
        index = last
        while True:
            pos = chain_off + (index - symoffset) * 4
            if pos + 4 > len(data):
                break
            entry = struct.unpack_from("<I", data, pos)[0]
            if entry & 1:
                break
            index += 1
        return index + 1

    def _symbols_from_dynamic(self, elf: ElfFile) -> None:
        data = self.data
        symtab_vaddr = elf.dynamic_value(DT_SYMTAB)
        strtab_vaddr = elf.dynamic_value(DT_STRTAB)
        if symtab_vaddr is None or strtab_vaddr is None:
            return
        sym_off = elf.vaddr_to_offset(symtab_vaddr)
        str_off = elf.vaddr_to_offset(strtab_vaddr)
        if sym_off is None or str_off is None:
            elf.notes.append("dynamic symbol table not inside a loaded segment")
            elf.parse_status = ParseStatus.PARTIAL_PARSE
            return
        strsz = elf.dynamic_value(DT_STRSZ) or (len(data) - str_off)
        syment = elf.dynamic_value(DT_SYMENT) or (24 if self.is64 else 16)
        count = self._dynsym_count(elf)
        names = _parse_symbols(data, sym_off, count, syment, str_off, str_off + strsz, self.is64)
        elf.dynamic_symbols.extend(names)

        indexed = [""]
        for i in range(1, min(count, _MAX_SYMBOLS)):
            rec = sym_off + i * syment
            if rec + 4 > len(data):
                break
            st_name = struct.unpack_from("<I", data, rec)[0]
            indexed.append(_read_cstr(data, str_off + st_name, str_off + strsz) or "")

        for table_tag, size_tag, rela in (
            (DT_JMPREL, DT_PLTRELSZ, None),
            (DT_RELA, DT_RELASZ, True),
            (DT_REL, DT_RELSZ, False),
        ):
            table = elf.dynamic_value(table_tag)
            size = elf.dynamic_value(size_tag)
            if table is None or not size:
                continue
            if rela is None:
                rela = elf.dynamic_value(DT_PLTREL) == DT_RELA
            off = elf.vaddr_to_offset(table)
            if off is None:
                continue
            entsize = self._reloc_entsize(rela)
            for name in self._reloc_names(off, size, entsize, indexed):
                elf.relocation_symbol_names.append(name)


def parse_elf(data: bytes) -> ElfFile:
    """Parse an ELF image from bytes; raises MalformedElf only when the
    program headers cannot be read."""
    return _Parser(data).parse()


# ---------------------------------------------------------------------------
# Hardening checks


def check_canary(elf: ElfFile) -> tuple[bool, tuple[str, ...]]:
    evidence = []
    for table_name, names in (
        ("dynsym", elf.dynamic_symbols),
        ("symtab", elf.static_symbols),
        ("reloc", elf.relocation_symbol_names),
    ):
        for name in names:
            if name in CANARY_SYMBOLS:
                evidence.append(f"{table_name}:{name}")
    if evidence:
        return True, tuple(sorted(set(evidence)))
    if not elf.all_symbol_names():
        return False, ("no symbol info",)
    return False, ()


def check_cfi(elf: ElfFile) -> tuple[bool, tuple[str, ...]]:
    hits = {
        name
        for name in elf.all_symbol_names()
        if name.endswith(".cfi") or name in CFI_EXACT_SYMBOLS
    }
    return (True, tuple(sorted(hits))) if hits else (False, ())


def check_fortify(elf: ElfFile) -> tuple[bool, tuple[str, ...]]:
    hits = {
        name
        for name in elf.all_symbol_names()
        if name.startswith("__") and name.endswith("_chk")
    }
    evidence = sorted(hits)
    if elf.loaded_contains(FORTIFY_NEEDLE):
        evidence.append(f"string:{FORTIFY_NEEDLE.decode()}")
    return (True, tuple(evidence)) if evidence else (False, ())


def check_nx(elf: ElfFile) -> tuple[bool, tuple[str, ...]]:
    for ph in elf.program_headers:
        if ph.type == PT_GNU_STACK:
            if ph.flags & PF_X:
                return False, ("PT_GNU_STACK executable",)
            return True, (f"PT_GNU_STACK flags=0x{ph.flags:x}",)
    return False, ("segment absent",)


def check_relro(elf: ElfFile) -> tuple[Relro, tuple[str, ...]]:
    has_relro = any(ph.type == PT_GNU_RELRO for ph in elf.program_headers)
    if not has_relro:
        return Relro.NONE, ("PT_GNU_RELRO absent",)
    evidence = ["PT_GNU_RELRO present"]
    if elf.dynamic_value(DT_BIND_NOW) is not None:
        evidence.append("DT_BIND_NOW")
    flags = elf.dynamic_value(DT_FLAGS)
    if flags is not None and flags & DF_BIND_NOW:
        evidence.append("DT_FLAGS:NOW")
    flags1 = elf.dynamic_value(DT_FLAGS_1)
    if flags1 is not None and flags1 & DF_1_NOW:
        evidence.append("DT_FLAGS_1:NOW")
    if len(evidence) > 1:
        return Relro.FULL, tuple(evidence)
    return Relro.PARTIAL, tuple(evidence)


@dataclass(frozen=True)
class ElfHardeningVerdict:
    path: str
    canary: Optional[bool]
    cfi: Optional[bool]
    fortify: Optional[bool]
    nx: Optional[bool]
    relro: Optional[Relro]
    evidence: dict[str, tuple[str, ...]]
    parse_status: ParseStatus
    sha256: str
    elf_class: Optional[ElfClass] = None

    @property
    def relro_enabled(self) -> Optional[bool]:
        # paper-compatible boolean projection of the tri-state
        if self.relro is None:
            return None
        return self.relro is not Relro.NONE


def hardening_verdict(label: str, data: bytes) -> ElfHardeningVerdict:
    digest = hashlib.sha256(data).hexdigest()
    try:
        elf = parse_elf(data)
    except MalformedElf as exc:
        return ElfHardeningVerdict(
            path=label,
            canary=None,
            cfi=None,
            fortify=None,
            nx=None,
            relro=None,
            evidence={"error": (str(exc),)},
            parse_status=ParseStatus.FAILED,
            sha256=digest,
        )
    canary, canary_ev = check_canary(elf)
    cfi, cfi_ev = check_cfi(elf)
    fortify, fortify_ev = check_fortify(elf)
    nx, nx_ev = check_nx(elf)
    relro, relro_ev = check_relro(elf)
    return ElfHardeningVerdict(
        path=label,
        canary=canary,
        cfi=cfi,
        fortify=fortify,
        nx=nx,
        relro=relro,
        evidence={
            "canary": canary_ev,
            "cfi": cfi_ev,
            "fortify": fortify_ev,
            "nx": nx_ev,
            "relro": relro_ev,
        },
        parse_status=elf.parse_status,
        sha256=digest,
        elf_class=elf.elf_class,
    )


@dataclass(frozen=True)
class HardeningSummary:
    total: int
    no_canary: int
    no_cfi: int
    no_fortify: int
    no_nx: int
    no_relro: int
    unique_content: int

    def as_dict(self) -> dict[str, int]:
        return {
            "canary": self.no_canary,
            "cfi": self.no_cfi,
            "fortify": self.no_fortify,
            "nx": self.no_nx,
            "relro": self.no_relro,
        }


def summarize_verdicts(verdicts: Iterable[ElfHardeningVerdict]) -> HardeningSummary:
    """Count binaries WITHOUT each mitigation; failed parses are excluded."""
    ok = [v for v in verdicts if v.parse_status is not ParseStatus.FAILED]
    return HardeningSummary(
        total=len(ok),
        no_canary=sum(1 for v in ok if not v.canary),
        no_cfi=sum(1 for v in ok if not v.cfi),
        no_fortify=sum(1 for v in ok if not v.fortify),
        no_nx=sum(1 for v in ok if not v.nx),
        no_relro=sum(1 for v in ok if not v.relro_enabled),
        unique_content=len({v.sha256 for v in ok}),
    )


@dataclass(frozen=True)
class BatchResult:
    verdicts: tuple[ElfHardeningVerdict, ...]
    summary: HardeningSummary

    @property
    def failures(self) -> tuple[ElfHardeningVerdict, ...]:
        return tuple(v for v in self.verdicts if v.parse_status is ParseStatus.FAILED)


def audit_binaries(
    paths: Iterable[Path],
    root: Optional[Path] = None,
    jobs: Optional[int] = None,
) -> BatchResult:
    """Audit a batch of files; one FAILED verdict per unreadable file,
    never a batch abort."""
    paths = list(paths)

    def label_for(path: Path) -> str:
        if root is not None:
            try:
                return Path(path).resolve().relative_to(Path(root).resolve()).as_posix()
            except ValueError:
                pass
        return Path(path).as_posix()

    def run_one(path: Path) -> ElfHardeningVerdict:
        label = label_for(path)
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            return ElfHardeningVerdict(
                path=label,
                canary=None,
                cfi=None,
                fortify=None,
                nx=None,
                relro=None,
                evidence={"error": (str(exc),)},
                parse_status=ParseStatus.FAILED,
                sha256="",
            )
        return hardening_verdict(label, data)

    workers = jobs or os.cpu_count() or 1
    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            verdicts = list(pool.map(run_one, paths))
    else:
        verdicts = [run_one(p) for p in paths]
    verdicts.sort(key=lambda v: v.path)
    return BatchResult(tuple(verdicts), summarize_verdicts(verdicts))
