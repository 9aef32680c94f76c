"""Binary AndroidManifest.xml (AXML) reader.

Chunk layout, all little-endian: every chunk opens with
``type:u16 header_size:u16 size:u32``. The file chunk (0x0003) wraps a string
pool (0x0001), an optional resource-id map (0x0180) and a flat stream of
namespace (0x0100/0x0101) and element (0x0102/0x0103) chunks. Only what the
feature extractor needs is interpreted; other chunks are skipped by size.

Attribute names are resolved through the resource map first, so manifests
whose attribute-name strings were blanked by obfuscators still resolve
``android:name`` and ``android:priority``.
"""

from __future__ import annotations

import struct
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from ..errors import ManifestMalformed

RES_XML_TYPE = 0x0003
RES_STRING_POOL_TYPE = 0x0001
RES_XML_RESOURCE_MAP_TYPE = 0x0180
RES_XML_START_ELEMENT_TYPE = 0x0102
RES_XML_END_ELEMENT_TYPE = 0x0103

UTF8_FLAG = 1 << 8
NO_INDEX = 0xFFFFFFFF

TYPE_STRING = 0x03
TYPE_INT_DEC = 0x10
TYPE_INT_HEX = 0x11
TYPE_INT_BOOLEAN = 0x12

_RESOURCE_ATTRS = {
    0x01010003: "name",
    0x0101001C: "priority",
    0x01010001: "label",
}

COMPONENT_TAGS = ("activity", "service", "receiver", "provider")
_ANDROID_NS = "http://schemas.android.com/apk/res/android"


@dataclass
class ManifestData:
    package: str = ""
    permissions: list[str] = field(default_factory=list)
    intent_filters: list[tuple[str, int | None]] = field(default_factory=list)
    components: list[tuple[str, str]] = field(default_factory=list)


def _signed32(v: int) -> int:
    return v - (1 << 32) if v & 0x80000000 else v


class _Reader:
    def __init__(self, buf: bytes, entry: str):
        self.buf = buf
        self.entry = entry
        self.strings: list[str] = []
        self.resource_ids: list[int] = []

    def fail(self, msg: str, offset: int):
        raise ManifestMalformed(msg, self.entry, offset)

    def chunk_header(self, pos: int, limit: int) -> tuple[int, int, int]:
        if pos + 8 > limit:
            self.fail("truncated chunk header", pos)
        ctype, hsize, size = struct.unpack_from("<HHI", self.buf, pos)
        if hsize < 8 or size < hsize or pos + size > limit:
            self.fail(f"chunk type {ctype:#06x} has inconsistent sizes "
                      f"(header {hsize}, size {size})", pos)
        return ctype, hsize, size

    def string(self, idx: int, at: int) -> str:
        if idx == NO_INDEX:
            return ""
        if idx >= len(self.strings):
            self.fail(f"string index {idx} out of range", at)
        return self.strings[idx]

    def read_string_pool(self, pos: int, hsize: int, size: int):
        buf = self.buf
        if hsize < 0x1C:
            self.fail("string pool header too short", pos)
        count, _styles, flags, strings_start, _ = struct.unpack_from("<IIIII", buf, pos + 8)
        end = pos + size
        table = pos + hsize
        if table + 4 * count > end:
            self.fail("string offset table overruns pool", pos)
        base = pos + strings_start
        utf8 = bool(flags & UTF8_FLAG)
        out = []
        for i, off in enumerate(struct.unpack_from(f"<{count}I", buf, table)):
            p = base + off
            try:
                out.append(self._pool_string(p, end, utf8))
            except (IndexError, struct.error):
                self.fail(f"string {i} overruns pool", p)
        self.strings = out

    def _pool_string(self, p: int, end: int, utf8: bool) -> str:
        buf = self.buf
        if p >= end:
            raise IndexError
        if utf8:
            n = buf[p]
            p += 2 if n & 0x80 else 1
            n = buf[p]
            if n & 0x80:
                n = ((n & 0x7F) << 8) | buf[p + 1]
                p += 2
            else:
                p += 1
            if p + n > end:
                raise IndexError
            return buf[p:p + n].decode("utf-8", errors="replace")
        (n,) = struct.unpack_from("<H", buf, p)
        p += 2
        if n & 0x8000:
            (low,) = struct.unpack_from("<H", buf, p)
            n = ((n & 0x7FFF) << 16) | low
            p += 2
        if p + 2 * n > end:
            raise IndexError
        return buf[p:p + 2 * n].decode("utf-16-le", errors="replace")

    def attr_name(self, name_idx: int, at: int) -> str:
        if name_idx < len(self.resource_ids):
            known = _RESOURCE_ATTRS.get(self.resource_ids[name_idx])
            if known:
                return known
        return self.string(name_idx, at)

    def attr_value(self, raw_idx: int, dtype: int, data: int, at: int):
        if raw_idx != NO_INDEX:
            return self.string(raw_idx, at)
        if dtype == TYPE_STRING:
            return self.string(data, at)
        if dtype in (TYPE_INT_DEC, TYPE_INT_HEX):
            return _signed32(data)
        if dtype == TYPE_INT_BOOLEAN:
            return data != 0
        return None

    def start_element(self, pos: int, hsize: int, size: int):
        body = pos + hsize
        if body + 20 > pos + size:
            self.fail("start-element body truncated", pos)
        _ns, name_idx, attr_start, attr_size, attr_count = struct.unpack_from("<IIHHH", self.buf, body)
        tag = self.string(name_idx, body + 4)
        if attr_count and attr_size < 20:
            self.fail(f"attribute size {attr_size} too small", body)
        attrs = {}
        first = body + attr_start
        if first + attr_count * attr_size > pos + size:
            self.fail("attributes overrun element chunk", body)
        for k in range(attr_count):
            a = first + k * attr_size
            _ans, aname, raw, _sz, _res0, dtype, data = struct.unpack_from("<IIIHBBI", self.buf, a)
            attrs[self.attr_name(aname, a)] = self.attr_value(raw, dtype, data, a)
        return tag, attrs

    def parse(self) -> ManifestData:
        buf = self.buf
        ctype, hsize, size = self.chunk_header(0, len(buf))
        if ctype != RES_XML_TYPE:
            self.fail(f"not an XML resource (chunk type {ctype:#06x})", 0)
        limit = size
        pos = hsize
        builder = _ManifestBuilder()
        while pos < limit:
            ctype, h, s = self.chunk_header(pos, limit)
            if ctype == RES_STRING_POOL_TYPE:
                self.read_string_pool(pos, h, s)
            elif ctype == RES_XML_RESOURCE_MAP_TYPE:
                n = (s - h) // 4
                self.resource_ids = list(struct.unpack_from(f"<{n}I", buf, pos + h))
            elif ctype == RES_XML_START_ELEMENT_TYPE:
                builder.start(*self.start_element(pos, h, s))
            elif ctype == RES_XML_END_ELEMENT_TYPE:
                builder.end()
            pos += s
        return builder.data


class _ManifestBuilder:
    def __init__(self):
        self.data = ManifestData()
        self.stack: list[str] = []
        self._filter_priority: int | None = None

    def start(self, tag: str, attrs: dict):
        parent = self.stack[-1] if self.stack else None
        name = attrs.get("name")
        if tag == "manifest" and not self.stack:
            self.data.package = str(attrs.get("package") or "")
        elif tag.startswith("uses-permission") and isinstance(name, str) and name:
            self.data.permissions.append(name)
        elif tag in COMPONENT_TAGS and isinstance(name, str):
            self.data.components.append((tag, name))
        elif tag == "intent-filter":
            prio = attrs.get("priority")
            if isinstance(prio, str):
                try:
                    prio = _signed32(int(prio, 0) & 0xFFFFFFFF)
                except ValueError:
                    prio = None
            self._filter_priority = prio if isinstance(prio, int) and not isinstance(prio, bool) else None
        elif tag == "action" and parent == "intent-filter" and isinstance(name, str):
            self.data.intent_filters.append((name, self._filter_priority))
        self.stack.append(tag)

    def end(self):
        if self.stack:
            self.stack.pop()


def _parse_text(buf: bytes, entry: str) -> ManifestData:
    try:
        root = ET.fromstring(buf)
    except ET.ParseError as exc:
        raise ManifestMalformed(f"text manifest does not parse: {exc}", entry) from None
    builder = _ManifestBuilder()

    def walk(el):
        attrs = {}
        for k, v in el.attrib.items():
            attrs[k.split("}", 1)[1] if k.startswith("{" + _ANDROID_NS) else k] = v
        builder.start(el.tag, attrs)
        for child in el:
            walk(child)
        builder.end()

    walk(root)
    return builder.data


def parse_manifest(buf: bytes, entry: str = "AndroidManifest.xml") -> ManifestData:
    """Parse a binary (or, as a courtesy, plain-text) AndroidManifest.xml."""
    if buf.lstrip()[:1] == b"<":
        return _parse_text(buf, entry)
    try:
        return _Reader(buf, entry).parse()
    except struct.error as exc:
        raise ManifestMalformed(f"truncated structure: {exc}", entry) from None
