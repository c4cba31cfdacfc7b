"""Decoder for Android's binary XML encoding (AndroidManifest.xml inside APKs).

Walks the chunk stream: string pool, resource map, namespace and element
chunks.  Unknown chunk types are skipped by their declared size so a
foreign trailing chunk never desynchronizes the walk.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .errors import AuditError


class MalformedAxml(AuditError):
    """Truncated or structurally invalid binary XML."""


CHUNK_XML = 0x0003
CHUNK_STRING_POOL = 0x0001
CHUNK_RESOURCE_MAP = 0x0180
CHUNK_START_NAMESPACE = 0x0100
CHUNK_END_NAMESPACE = 0x0101
CHUNK_START_ELEMENT = 0x0102
CHUNK_END_ELEMENT = 0x0103
CHUNK_CDATA = 0x0104

UTF8_FLAG = 1 << 8
NO_INDEX = 0xFFFFFFFF

TYPE_REFERENCE = 0x01
TYPE_STRING = 0x03
TYPE_INT_DEC = 0x10
TYPE_INT_HEX = 0x11
TYPE_INT_BOOLEAN = 0x12


@dataclass(frozen=True)
class RawValue:
    """Typed value this decoder does not interpret; kept verbatim."""

    data_type: int
    data: int


AttrValue = Union[bool, int, str, RawValue]


@dataclass(frozen=True)
class AxmlAttribute:
    namespace: Optional[str]
    name: str
    resource_id: Optional[int]
    value: AttrValue


@dataclass
class AxmlElement:
    namespace: Optional[str]
    name: str
    attributes: tuple[AxmlAttribute, ...]
    children: list["AxmlElement"] = field(default_factory=list)

    def attr(self, name: str, resource_id: Optional[int] = None) -> Optional[AxmlAttribute]:
        """Prefer the stable resource id; fall back to the attribute name."""
        if resource_id is not None:
            for attribute in self.attributes:
                if attribute.resource_id == resource_id:
                    return attribute
        for attribute in self.attributes:
            if attribute.name == name:
                return attribute
        return None

    def iter_tree(self) -> Iterator["AxmlElement"]:
        yield self
        for child in self.children:
            yield from child.iter_tree()


@dataclass
class AxmlDocument:
    string_pool: tuple[str, ...]
    root: Optional[AxmlElement]

    def iter_elements(self) -> Iterator[AxmlElement]:
        if self.root is not None:
            yield from self.root.iter_tree()


def _decode_varlen(data: bytes, offset: int, wide: bool) -> tuple[int, int]:
    """String-pool length prefix: high bit extends to a second unit."""
    if wide:
        first = struct.unpack_from("<H", data, offset)[0]
        if first & 0x8000:
            second = struct.unpack_from("<H", data, offset + 2)[0]
            return ((first & 0x7FFF) << 16) | second, 4
        return first, 2
    first = data[offset]
    if first & 0x80:
        second = data[offset + 1]
        return ((first & 0x7F) << 8) | second, 2
    return first, 1


def _parse_string_pool(data: bytes, start: int, size: int) -> tuple[str, ...]:
    if size < 28:
        raise MalformedAxml("string pool chunk too small")
    count, style_count, flags, strings_start, _styles_start = struct.unpack_from(
        "<IIIII", data, start + 8
    )
    is_utf8 = bool(flags & UTF8_FLAG)
    offsets_base = start + 28
    if offsets_base + count * 4 > start + size:
        raise MalformedAxml("string pool offsets truncated")
    offsets = struct.unpack_from(f"<{count}I", data, offsets_base) if count else ()
    pool_base = start + strings_start
    strings = []
    for off in offsets:
        pos = pool_base + off
        if pos >= start + size:
            raise MalformedAxml("string offset past pool end")
        try:
            if is_utf8:
                _chars, skip = _decode_varlen(data, pos, wide=False)
                nbytes, skip2 = _decode_varlen(data, pos + skip, wide=False)
                raw = data[pos + skip + skip2 : pos + skip + skip2 + nbytes]
                strings.append(raw.decode("utf-8", errors="replace"))
            else:
                chars, skip = _decode_varlen(data, pos, wide=True)
                raw = data[pos + skip : pos + skip + chars * 2]
                strings.append(raw.decode("utf-16-le", errors="replace"))
        except (IndexError, struct.error) as exc:
            raise MalformedAxml(f"undecodable pool string: {exc}") from None
    return tuple(strings)


def _typed_value(data_type: int, data: int, pool: tuple[str, ...]) -> AttrValue:
    if data_type == TYPE_INT_BOOLEAN:
        return data != 0
    if data_type in (TYPE_INT_DEC, TYPE_INT_HEX):
        if data & 0x80000000:
            data -= 1 << 32
        return data
    if data_type == TYPE_STRING:
        if 0 <= data < len(pool):
            return pool[data]
        return RawValue(data_type, data)
    return RawValue(data_type, data)


def parse_axml(data: bytes) -> AxmlDocument:
    """Parse a binary manifest into an element tree."""
    if len(data) < 8:
        raise MalformedAxml("shorter than a chunk header")
    file_type, _header_size, file_size = struct.unpack_from("<HHI", data, 0)
    if file_type != CHUNK_XML:
        raise MalformedAxml(f"leading chunk type 0x{file_type:04x}, expected XML")
    end = min(file_size, len(data))

    pool: tuple[str, ...] = ()
    resource_map: tuple[int, ...] = ()
    root: Optional[AxmlElement] = None
    stack: list[AxmlElement] = []

    def pooled(index: int) -> Optional[str]:
        if index == NO_INDEX or index >= len(pool):
            return None
        return pool[index]

    pos = 8
    while pos + 8 <= end:
        chunk_type, header_size, chunk_size = struct.unpack_from("<HHI", data, pos)
        if chunk_size < 8 or pos + chunk_size > end:
            raise MalformedAxml(f"truncated chunk 0x{chunk_type:04x} at offset {pos}")

        if chunk_type == CHUNK_STRING_POOL:
            pool = _parse_string_pool(data, pos, chunk_size)
        elif chunk_type == CHUNK_RESOURCE_MAP:
            n = (chunk_size - header_size) // 4
            resource_map = struct.unpack_from(f"<{n}I", data, pos + header_size) if n else ()
        elif chunk_type == CHUNK_START_ELEMENT:
            body = pos + header_size
            if body + 20 > pos + chunk_size:
                raise MalformedAxml("start-element chunk too small")
            ns_idx, name_idx, attr_start, attr_size, attr_count = struct.unpack_from(
                "<IIHHH", data, body
            )
            name = pooled(name_idx)
            if name is None:
                raise MalformedAxml("element name not in string pool")
            attrs = []
            attr_base = body + (attr_start if attr_start >= 20 else 20)
            for i in range(attr_count):
                a = attr_base + i * max(attr_size, 20)
                if a + 20 > pos + chunk_size:
                    raise MalformedAxml("attribute record truncated")
                a_ns, a_name, _a_raw, _vsize, _res0, dtype, value_data = struct.unpack_from(
                    "<IIIHBBI", data, a
                )
                attr_name = pooled(a_name)
                if attr_name is None:
                    continue
                resource_id = (
                    resource_map[a_name] if a_name < len(resource_map) else None
                )
                attrs.append(
                    AxmlAttribute(
                        namespace=pooled(a_ns),
                        name=attr_name,
                        resource_id=resource_id,
                        value=_typed_value(dtype, value_data, pool),
                    )
                )
            element = AxmlElement(namespace=pooled(ns_idx), name=name, attributes=tuple(attrs))
            if stack:
                stack[-1].children.append(element)
            elif root is None:
                root = element
            else:
                raise MalformedAxml("multiple root elements")
            stack.append(element)
        elif chunk_type == CHUNK_END_ELEMENT:
            if not stack:
                raise MalformedAxml("end-element without matching start")
            stack.pop()
        elif chunk_type in (CHUNK_START_NAMESPACE, CHUNK_END_NAMESPACE, CHUNK_CDATA):
            pass
        # anything else: skip via declared chunk size
        pos += chunk_size

    if stack:
        raise MalformedAxml(f"{len(stack)} element(s) left open at end of document")
    return AxmlDocument(string_pool=pool, root=root)
