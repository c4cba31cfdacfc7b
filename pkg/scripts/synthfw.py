"""Synthetic firmware construction: tiny ELF images, binary manifests,
APK/apex containers, boot images and a complete demo firmware tree.

Used by the test suite as fixture machinery and runnable standalone to
produce a demo tree for smoke-testing the CLI:

    python scripts/synthfw.py --out /tmp/demo-firmware
"""

from __future__ import annotations

import argparse
import struct
import zipfile
import zlib
from io import BytesIO
from pathlib import Path

ANDROID_NS = "http://schemas.android.com/apk/res/android"

RESID_NAME = 0x01010003
RESID_PROTECTION_LEVEL = 0x01010009
RESID_DEBUGGABLE = 0x0101000F
RESID_ALLOW_BACKUP = 0x01010280
RESID_USES_CLEARTEXT_TRAFFIC = 0x010104EC


# ---------------------------------------------------------------------------
# Minimal ELF images

PT_LOAD = 1
PT_DYNAMIC = 2
PT_GNU_STACK = 0x6474E551
PT_GNU_RELRO = 0x6474E552

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
DT_FLAGS_1 = 0x6FFFFFFB
DT_NULL = 0

SHT_SYMTAB = 2
SHT_STRTAB = 3
SHT_DYNSYM = 11


def _align(value: int, to: int) -> int:
    return (value + to - 1) // to * to


class _StrTab:
    def __init__(self):
        self.data = bytearray(b"\x00")
        self.offsets: dict[str, int] = {"": 0}

    def add(self, name: str) -> int:
        if name not in self.offsets:
            self.offsets[name] = len(self.data)
            self.data += name.encode() + b"\x00"
        return self.offsets[name]


def build_elf(
    *,
    bits: int = 64,
    dyn_symbols: tuple[str, ...] = (),
    static_symbols: tuple[str, ...] = (),
    reloc_symbols: tuple[str, ...] = (),
    gnu_stack: str | None = "rw",
    relro: str | None = None,
    extra_blob: bytes = b"",
    with_section_headers: bool = True,
    machine: int = 0xB7,  # aarch64
) -> bytes:
    """Assemble a minimal little-endian ELF with the requested traits.

    One PT_LOAD maps the whole data region at vaddr == offset, so the
    dynamic table pointers are plain file offsets.  reloc_symbols are
    also added to the dynamic symbol table and referenced from a
    relocation table.
    """
    if bits not in (32, 64):
        raise ValueError("bits must be 32 or 64")
    is64 = bits == 64
    ehsize = 64 if is64 else 52
    phentsize = 56 if is64 else 32
    shentsize = 64 if is64 else 40
    symsize = 24 if is64 else 16
    relasize = 24 if is64 else 12
    dynentsize = 16 if is64 else 8

    all_dyn = tuple(dict.fromkeys(dyn_symbols + reloc_symbols))

    phnum = 1  # PT_LOAD
    has_dynamic = bool(all_dyn) or relro == "full"
    if has_dynamic:
        phnum += 1
    if gnu_stack is not None:
        phnum += 1
    if relro is not None:
        phnum += 1

    cursor = ehsize + phnum * phentsize

    dynstr = _StrTab()
    for name in all_dyn:
        dynstr.add(name)
    dynstr_off = cursor
    dynstr_bytes = bytes(dynstr.data)
    cursor = _align(cursor + len(dynstr_bytes), 8)

    dynsym_off = cursor
    dynsym = bytearray(symsize)  # index 0: null symbol
    for name in all_dyn:
        st_name = dynstr.offsets[name]
        if is64:
            dynsym += struct.pack("<IBBHQQ", st_name, 0x12, 0, 0, 0, 0)
        else:
            dynsym += struct.pack("<IIIBBH", st_name, 0, 0, 0x12, 0, 0)
    cursor = _align(cursor + len(dynsym), 8)

    nsyms = 1 + len(all_dyn)
    hash_off = cursor
    hash_bytes = struct.pack(f"<II{1}I{nsyms}I", 1, nsyms, 0, *([0] * nsyms))
    cursor = _align(cursor + len(hash_bytes), 8)

    rela_off = cursor
    rela = bytearray()
    for name in reloc_symbols:
        sym_index = all_dyn.index(name) + 1
        if is64:
            rela += struct.pack("<QQq", 0x1000, (sym_index << 32) | 7, 0)
        else:
            rela += struct.pack("<IIi", 0x1000, (sym_index << 8) | 7, 0)
    cursor = _align(cursor + len(rela), 8)

    dyn_entries: list[tuple[int, int]] = []
    if has_dynamic:
        dyn_entries = [
            (DT_HASH, hash_off),
            (DT_STRTAB, dynstr_off),
            (DT_SYMTAB, dynsym_off),
            (DT_STRSZ, len(dynstr_bytes)),
            (DT_SYMENT, symsize),
        ]
        if rela:
            dyn_entries += [
                (DT_JMPREL, rela_off),
                (DT_PLTRELSZ, len(rela)),
                (DT_PLTREL, DT_RELA),
            ]
        if relro == "full":
            dyn_entries.append((DT_FLAGS, 0x8))
        dyn_entries.append((DT_NULL, 0))
    dynamic_off = cursor
    dynamic = bytearray()
    for tag, value in dyn_entries:
        dynamic += struct.pack("<qQ" if is64 else "<iI", tag, value)
    cursor = _align(cursor + len(dynamic), 8)

    blob_off = cursor
    cursor = _align(cursor + len(extra_blob), 8)
    load_end = cursor

    # unloaded static symbol table for section-header variants
    strtab = _StrTab()
    for name in static_symbols:
        strtab.add(name)
    symtab = bytearray(symsize)
    for name in static_symbols:
        st_name = strtab.offsets[name]
        if is64:
            symtab += struct.pack("<IBBHQQ", st_name, 0x12, 0, 1, 0, 0)
        else:
            symtab += struct.pack("<IIIBBH", st_name, 0, 0, 0x12, 0, 1)

    symtab_off = cursor
    cursor += len(symtab)
    strtab_off = cursor
    strtab_bytes = bytes(strtab.data)
    cursor += len(strtab_bytes)

    shstr = _StrTab()
    names = [".dynsym", ".dynstr", ".hash", ".rela.plt", ".dynamic",
             ".symtab", ".strtab", ".shstrtab"]
    for name in names:
        shstr.add(name)
    shstrtab_off = cursor
    shstrtab_bytes = bytes(shstr.data)
    cursor += len(shstrtab_bytes)
    cursor = _align(cursor, 8)
    shoff = cursor if with_section_headers else 0

    sections = []
    if with_section_headers:
        # (name, type, offset, size, link, entsize)
        sections = [
            ("", 0, 0, 0, 0, 0),
            (".dynsym", SHT_DYNSYM, dynsym_off, len(dynsym), 2, symsize),
            (".dynstr", SHT_STRTAB, dynstr_off, len(dynstr_bytes), 0, 0),
            (".symtab", SHT_SYMTAB, symtab_off, len(symtab), 4, symsize),
            (".strtab", SHT_STRTAB, strtab_off, len(strtab_bytes), 0, 0),
            (".shstrtab", SHT_STRTAB, shstrtab_off, len(shstrtab_bytes), 0, 0),
        ]
        shnum = len(sections)
        shstrndx = 5
    else:
        shnum = 0
        shstrndx = 0

    header = bytearray(16)
    header[0:4] = b"\x7fELF"
    header[4] = 2 if is64 else 1
    header[5] = 1  # little-endian
    header[6] = 1  # EV_CURRENT
    if is64:
        header += struct.pack(
            "<HHIQQQIHHHHHH", 3, machine, 1, 0, ehsize, shoff, 0,
            ehsize, phentsize, phnum, shentsize, shnum, shstrndx,
        )
    else:
        header += struct.pack(
            "<HHIIIIIHHHHHH", 3, machine, 1, 0, ehsize, shoff, 0,
            ehsize, phentsize, phnum, shentsize, shnum, shstrndx,
        )

    def phdr(p_type, flags, offset, filesz, vaddr=None, memsz=None):
        vaddr = offset if vaddr is None else vaddr
        memsz = filesz if memsz is None else memsz
        if is64:
            return struct.pack("<IIQQQQQQ", p_type, flags, offset, vaddr, vaddr,
                               filesz, memsz, 0x1000)
        return struct.pack("<IIIIIIII", p_type, offset, vaddr, vaddr,
                           filesz, memsz, flags, 0x1000)

    phdrs = bytearray()
    phdrs += phdr(PT_LOAD, 0x5, 0, load_end)
    if has_dynamic:
        phdrs += phdr(PT_DYNAMIC, 0x6, dynamic_off, len(dynamic))
    if gnu_stack is not None:
        stack_flags = 0x7 if gnu_stack == "rwx" else 0x6
        phdrs += phdr(PT_GNU_STACK, stack_flags, 0, 0)
    if relro is not None:
        phdrs += phdr(PT_GNU_RELRO, 0x4, dynamic_off, len(dynamic))

    out = bytearray()
    out += header
    out += phdrs
    assert len(out) == ehsize + phnum * phentsize
    out += dynstr_bytes
    out += b"\x00" * (dynsym_off - len(out))
    out += dynsym
    out += b"\x00" * (hash_off - len(out))
    out += hash_bytes
    out += b"\x00" * (rela_off - len(out))
    out += rela
    out += b"\x00" * (dynamic_off - len(out))
    out += dynamic
    out += b"\x00" * (blob_off - len(out))
    out += extra_blob
    out += b"\x00" * (load_end - len(out))
    out += symtab
    out += strtab_bytes
    out += shstrtab_bytes
    out += b"\x00" * (_align(len(out), 8) - len(out))

    if with_section_headers:
        assert len(out) == shoff
        for name, sh_type, offset, size, link, entsize in sections:
            sh_name = shstr.offsets.get(name, 0)
            if is64:
                out += struct.pack("<IIQQQQIIQQ", sh_name, sh_type, 0, offset, offset,
                                   size, link, 0, 8, entsize)
            else:
                out += struct.pack("<IIIIIIIIII", sh_name, sh_type, 0, offset, offset,
                                   size, link, 0, 8, entsize)
    return bytes(out)


# ---------------------------------------------------------------------------
# Binary manifests (AXML)


class AxmlWriter:
    """Emit the binary XML encoding used for AndroidManifest.xml.

    Element spec: (name, [(ns, attr_name, resid, value)], [children]).
    Attribute names carrying a resource id occupy the first string-pool
    slots, mirroring how the platform packager lays out the pool.
    """

    def __init__(self, root_spec, utf8: bool = True):
        self.root_spec = root_spec
        self.utf8 = utf8
        self.resid_names: list[str] = []
        self.resids: list[int] = []
        self.strings: list[str] = []
        self._index: dict[str, int] = {}
        self._collect(root_spec)
        self._pool = self.resid_names + self.strings

    def _intern_resid(self, name: str, resid: int) -> None:
        if name not in self.resid_names:
            self.resid_names.append(name)
            self.resids.append(resid)

    def _intern(self, value: str) -> None:
        if value not in self._index and value not in self.resid_names:
            self._index[value] = len(self.strings)
            self.strings.append(value)

    def _collect(self, spec) -> None:
        name, attrs, children = spec
        for ns, attr_name, resid, value in attrs:
            if resid is not None:
                self._intern_resid(attr_name, resid)
        self._intern(ANDROID_NS)
        self._intern("android")
        self._intern(name)
        for ns, attr_name, resid, value in attrs:
            if resid is None:
                self._intern(attr_name)
            if ns:
                self._intern(ns)
            if isinstance(value, str):
                self._intern(value)
        for child in children:
            self._collect(child)

    def _pool_index(self, value: str) -> int:
        if value in self.resid_names:
            return self.resid_names.index(value)
        return len(self.resid_names) + self._index[value]

    def _string_pool_chunk(self) -> bytes:
        encoded = []
        for s in self._pool:
            if self.utf8:
                raw = s.encode("utf-8")
                prefix = self._len8(len(s)) + self._len8(len(raw))
                encoded.append(prefix + raw + b"\x00")
            else:
                raw = s.encode("utf-16-le")
                encoded.append(self._len16(len(s)) + raw + b"\x00\x00")
        offsets = []
        pos = 0
        for blob in encoded:
            offsets.append(pos)
            pos += len(blob)
        data = b"".join(encoded)
        data += b"\x00" * (-len(data) % 4)
        strings_start = 28 + 4 * len(self._pool)
        flags = (1 << 8) if self.utf8 else 0
        body = struct.pack(
            "<IIIII", len(self._pool), 0, flags, strings_start, 0
        ) + struct.pack(f"<{len(self._pool)}I", *offsets) + data
        return struct.pack("<HHI", 0x0001, 28, 8 + len(body)) + body

    @staticmethod
    def _len8(n: int) -> bytes:
        if n < 0x80:
            return bytes([n])
        return bytes([0x80 | (n >> 8), n & 0xFF])

    @staticmethod
    def _len16(n: int) -> bytes:
        if n < 0x8000:
            return struct.pack("<H", n)
        return struct.pack("<HH", 0x8000 | (n >> 16), n & 0xFFFF)

    def _resource_map_chunk(self) -> bytes:
        body = struct.pack(f"<{len(self.resids)}I", *self.resids) if self.resids else b""
        return struct.pack("<HHI", 0x0180, 8, 8 + len(body)) + body

    def _namespace_chunk(self, chunk_type: int) -> bytes:
        prefix = self._pool_index("android")
        uri = self._pool_index(ANDROID_NS)
        body = struct.pack("<IIII", 1, 0xFFFFFFFF, prefix, uri)
        return struct.pack("<HHI", chunk_type, 16, 8 + 16) + body

    def _attr_record(self, ns, name, resid, value) -> bytes:
        ns_idx = self._pool_index(ns) if ns else 0xFFFFFFFF
        name_idx = self._pool_index(name)
        if isinstance(value, bool):
            dtype, data, raw = 0x12, 0xFFFFFFFF if value else 0, 0xFFFFFFFF
        elif isinstance(value, int):
            dtype, data, raw = 0x10, value & 0xFFFFFFFF, 0xFFFFFFFF
        elif isinstance(value, str):
            dtype, data = 0x03, self._pool_index(value)
            raw = data
        else:
            raise TypeError(f"unsupported attribute value {value!r}")
        return struct.pack("<IIIHBBI", ns_idx, name_idx, raw, 8, 0, dtype, data)

    def _element_chunks(self, spec) -> bytes:
        name, attrs, children = spec
        name_idx = self._pool_index(name)
        records = b"".join(self._attr_record(*attr) for attr in attrs)
        ext = struct.pack("<IIHHHHHH", 0xFFFFFFFF, name_idx, 20, 20, len(attrs), 0, 0, 0)
        node = struct.pack("<II", 1, 0xFFFFFFFF)
        start_size = 8 + len(node) + len(ext) + len(records)
        out = struct.pack("<HHI", 0x0102, 16, start_size) + node + ext + records
        for child in children:
            out += self._element_chunks(child)
        end_body = node + struct.pack("<II", 0xFFFFFFFF, name_idx)
        out += struct.pack("<HHI", 0x0103, 16, 8 + len(end_body)) + end_body
        return out

    def tobytes(self, unknown_trailing_chunk: bool = False) -> bytes:
        chunks = self._string_pool_chunk()
        chunks += self._resource_map_chunk()
        chunks += self._namespace_chunk(0x0100)
        chunks += self._element_chunks(self.root_spec)
        chunks += self._namespace_chunk(0x0101)
        if unknown_trailing_chunk:
            chunks += struct.pack("<HHI", 0x7F7F, 8, 16) + b"\xde\xad\xbe\xef\xca\xfe\xba\xbe"
        return struct.pack("<HHI", 0x0003, 8, 8 + len(chunks)) + chunks


def manifest_spec(
    package: str,
    *,
    flags: dict | None = None,
    uses_permissions: tuple[str, ...] = (),
    declared_permissions: tuple[tuple[str, int], ...] = (),
    launcher: bool = False,
    launcher_via_alias: bool = False,
):
    """Build the element spec for a manifest with the given traits."""
    ns = ANDROID_NS
    app_attrs = []
    for attr_name, resid in (
        ("allowBackup", RESID_ALLOW_BACKUP),
        ("debuggable", RESID_DEBUGGABLE),
        ("usesCleartextTraffic", RESID_USES_CLEARTEXT_TRAFFIC),
    ):
        key = {"allowBackup": "allow_backup",
               "debuggable": "debuggable",
               "usesCleartextTraffic": "use_cleartext_traffic"}[attr_name]
        if flags and key in flags and flags[key] is not None:
            app_attrs.append((ns, attr_name, resid, flags[key]))

    launcher_filter = (
        "intent-filter",
        [],
        [
            ("action", [(ns, "name", RESID_NAME, "android.intent.action.MAIN")], []),
            ("category", [(ns, "name", RESID_NAME, "android.intent.category.LAUNCHER")], []),
        ],
    )
    app_children = []
    if launcher and not launcher_via_alias:
        app_children.append(("activity", [(ns, "name", RESID_NAME, ".Main")], [launcher_filter]))
    else:
        app_children.append(("activity", [(ns, "name", RESID_NAME, ".Main")], []))
    if launcher and launcher_via_alias:
        app_children.append(
            ("activity-alias", [(ns, "name", RESID_NAME, ".Alias")], [launcher_filter])
        )

    children = [
        ("uses-permission", [(ns, "name", RESID_NAME, perm)], [])
        for perm in uses_permissions
    ]
    children += [
        (
            "permission",
            [(ns, "name", RESID_NAME, perm), (ns, "protectionLevel", RESID_PROTECTION_LEVEL, raw)],
            [],
        )
        for perm, raw in declared_permissions
    ]
    children.append(("application", app_attrs, app_children))
    return ("manifest", [(None, "package", None, package)], children)


def build_manifest(package: str, utf8: bool = True, unknown_chunk: bool = False, **traits) -> bytes:
    return AxmlWriter(manifest_spec(package, **traits), utf8=utf8).tobytes(unknown_chunk)


ZIP_EPOCH = (2020, 1, 1, 0, 0, 0)


def build_zip(entries: dict[str, bytes]) -> bytes:
    buffer = BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=ZIP_EPOCH)
            zf.writestr(info, entries[name])
    return buffer.getvalue()


def build_apk(manifest: bytes, libs: dict[str, bytes] | None = None) -> bytes:
    entries = {"AndroidManifest.xml": manifest}
    for name, data in (libs or {}).items():
        entries[name] = data
    return build_zip(entries)


# ---------------------------------------------------------------------------
# Boot images and kernel blobs

IKCFG_ST = b"IKCFG_ST"
IKCFG_ED = b"IKCFG_ED"


def gzip_bytes(data: bytes) -> bytes:
    # zlib's gzip container writes mtime 0: deterministic output
    obj = zlib.compressobj(9, zlib.DEFLATED, 31)
    return obj.compress(data) + obj.flush()


def lz4_literal_block(chunk: bytes) -> bytes:
    """A valid LZ4 block containing only literals."""
    n = len(chunk)
    token_lit = min(n, 15)
    out = bytearray([token_lit << 4])
    if token_lit == 15:
        rest = n - 15
        while rest >= 255:
            out.append(255)
            rest -= 255
        out.append(rest)
    out += chunk
    return bytes(out)


def lz4_legacy_container(data: bytes, block_size: int = 64 * 1024) -> bytes:
    out = bytearray(b"\x02\x21\x4c\x18")
    for start in range(0, len(data), block_size):
        block = lz4_literal_block(data[start : start + block_size])
        out += struct.pack("<I", len(block)) + block
    return bytes(out)


def build_kernel_blob(
    config_text: str,
    banner: str = "Linux version 4.19.157-perf (build@host) #1 SMP PREEMPT",
    compress: str | None = None,
    pad: int = 512,
) -> bytes:
    payload = b"\x00" * pad
    payload += banner.encode() + b"\x00"
    payload += b"\x00" * 64
    payload += IKCFG_ST + gzip_bytes(config_text.encode()) + IKCFG_ED
    payload += b"\x00" * 128
    if compress == "gzip":
        return b"\x00" * 64 + gzip_bytes(payload)
    if compress == "lz4-legacy":
        return b"\x00" * 64 + lz4_legacy_container(payload)
    if compress is not None:
        raise ValueError(f"unknown compression {compress!r}")
    return payload


def build_boot_image(
    kernel_blob: bytes,
    page_size: int = 4096,
    ramdisk: bytes = b"",
    header_version: int = 0,
) -> bytes:
    header = bytearray(page_size)
    header[0:8] = b"ANDROID!"
    struct.pack_into("<I", header, 8, len(kernel_blob))
    struct.pack_into("<I", header, 12, 0x10008000)
    struct.pack_into("<I", header, 16, len(ramdisk))
    struct.pack_into("<I", header, 20, 0x11000000)
    struct.pack_into("<I", header, 36, page_size)
    struct.pack_into("<I", header, 40, header_version)
    out = bytes(header)
    out += kernel_blob + b"\x00" * (-len(kernel_blob) % page_size)
    if ramdisk:
        out += ramdisk + b"\x00" * (-len(ramdisk) % page_size)
    return out


def config_text(enabled: tuple[str, ...], not_set: tuple[str, ...] = ()) -> str:
    lines = ["# synthetic kernel configuration"]
    for option in enabled:
        lines.append(f"{option}=y")
    for option in not_set:
        lines.append(f"# {option} is not set")
    lines.append('CONFIG_CMDLINE="console=ttyMSM0"')
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Demo firmware tree (3 ELFs, 2 APKs, 1 CIL, 1 boot image)

DEMO_ENABLED_OPTIONS = (
    "CONFIG_STACKPROTECTOR_STRONG",
    "CONFIG_RANDOMIZE_BASE",
    "CONFIG_HARDENED_USERCOPY",
    "CONFIG_STRICT_KERNEL_RWX",
    "CONFIG_ARM64_SW_TTBR0_PAN",
    "CONFIG_UNMAP_KERNEL_AT_EL0",
    "CONFIG_SLAB_FREELIST_RANDOM",
    "CONFIG_SLAB_FREELIST_HARDENED",
    "CONFIG_VMAP_STACK",
    "CONFIG_IKCONFIG",
)

DEMO_CIL = """\
; synthetic platform policy
(typeattribute appdomain)
(type untrusted_app)
(type system_server)
(type system_file)
(type net_dns_prop)
(type vendor_android_pvr_prop)
(allow appdomain system_file (file (read open getattr)))
(allow system_server system_file (file (read write)))
(allow untrusted_app vendor_android_pvr_prop (file (read)))
(neverallow untrusted_app net_dns_prop (file (read)))
(neverallow appdomain system_file (file (execute_no_trans)))
(booleanif some_flag
  (true (allow system_server net_dns_prop (property_service (set))))
  (false (allow system_server system_file (dir (search)))))
"""

DEMO_BUILD_PROP = """\
# build properties
ro.build.id=SQ3A.220605.009.A1
ro.build.version.sdk=31
ro.build.version.release=12
ro.build.fingerprint=synthetic/demo:12/SQ3A.220605.009.A1/1:user/release-keys
"""


def build_demo_tree(dest: Path) -> Path:
    """Write the bundled synthetic mini-firmware tree used for end-to-end
    runs: deterministic content, three ELFs, two APKs, one CIL policy and
    one boot image."""
    dest = Path(dest)
    (dest / "system" / "bin").mkdir(parents=True, exist_ok=True)
    (dest / "system" / "lib64").mkdir(parents=True, exist_ok=True)
    (dest / "system" / "priv-app" / "Shell").mkdir(parents=True, exist_ok=True)
    (dest / "system" / "app" / "Helper").mkdir(parents=True, exist_ok=True)
    (dest / "system" / "etc" / "selinux").mkdir(parents=True, exist_ok=True)
    (dest / "vendor" / "bin").mkdir(parents=True, exist_ok=True)

    (dest / "system" / "build.prop").write_text(DEMO_BUILD_PROP)

    hardened = build_elf(
        dyn_symbols=("__stack_chk_fail", "__memcpy_chk"),
        reloc_symbols=("__stack_chk_fail",),
        gnu_stack="rw",
        relro="full",
        extra_blob=b"demo tool with buffer overflow detected message",
    )
    (dest / "system" / "bin" / "demo_tool").write_bytes(hardened)

    cfi_lib = build_elf(
        dyn_symbols=("render_frame.cfi", "__cfi_check"),
        gnu_stack="rw",
        relro="partial",
    )
    (dest / "system" / "lib64" / "libdemo.so").write_bytes(cfi_lib)

    weak = build_elf(
        dyn_symbols=("vendor_entry",),
        gnu_stack="rwx",
        relro=None,
    )
    (dest / "vendor" / "bin" / "vendor_tool").write_bytes(weak)

    shell_manifest = build_manifest(
        "com.demo.shell",
        flags={"use_cleartext_traffic": True},
        uses_permissions=(
            "android.permission.INTERNET",
            "com.demo.permission.TRACKING",
        ),
        declared_permissions=(("com.demo.permission.TRACKING", 1),),
        launcher=True,
    )
    (dest / "system" / "priv-app" / "Shell" / "Shell.apk").write_bytes(
        build_apk(shell_manifest)
    )

    helper_manifest = build_manifest(
        "com.android.helper",
        flags={"allow_backup": False},
        uses_permissions=("com.demo.permission.TRACKING",),
        declared_permissions=(("com.demo.permission.UNUSED", 2),),
        launcher=False,
    )
    (dest / "system" / "app" / "Helper" / "Helper.apk").write_bytes(
        build_apk(helper_manifest)
    )

    (dest / "system" / "etc" / "selinux" / "plat_sepolicy.cil").write_text(DEMO_CIL)

    kernel_blob = build_kernel_blob(config_text(DEMO_ENABLED_OPTIONS), compress="gzip")
    (dest / "boot.img").write_bytes(build_boot_image(kernel_blob))
    return dest


def main() -> int:
    parser = argparse.ArgumentParser(description="Generate a synthetic demo firmware tree")
    parser.add_argument("--out", required=True, help="destination directory")
    args = parser.parse_args()
    build_demo_tree(Path(args.out))
    print(f"demo firmware tree written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
