"""Independent writer for small synthetic APKs used as parser fixtures.

Shares no code with ``certdroid.ingest``: DER, AXML and DEX encodings are
produced here from the format definitions.
"""

from __future__ import annotations

import io
import struct
import zipfile
from dataclasses import dataclass, field

# -- DER ---------------------------------------------------------------------


def der(tag: int, content: bytes) -> bytes:
    n = len(content)
    if n < 0x80:
        length = bytes([n])
    else:
        body = n.to_bytes((n.bit_length() + 7) // 8, "big")
        length = bytes([0x80 | len(body)]) + body
    return bytes([tag]) + length + content


def seq(*parts: bytes) -> bytes:
    return der(0x30, b"".join(parts))


def oid(dotted: str) -> bytes:
    nums = [int(x) for x in dotted.split(".")]
    out = bytearray([40 * nums[0] + nums[1]])
    for n in nums[2:]:
        chunk = [n & 0x7F]
        n >>= 7
        while n:
            chunk.append(0x80 | (n & 0x7F))
            n >>= 7
        out.extend(reversed(chunk))
    return der(0x06, bytes(out))


def certificate(serial_content: bytes, cn: str = "fixture") -> bytes:
    name = seq(der(0x31, seq(oid("2.5.4.3"), der(0x0C, cn.encode()))))
    alg = seq(oid("1.2.840.113549.1.1.11"), der(0x05, b""))
    tbs = seq(
        der(0xA0, der(0x02, b"\x02")),
        der(0x02, serial_content),
        alg,
        name,
        seq(der(0x17, b"130101000000Z"), der(0x17, b"400101000000Z")),
        name,
        seq(seq(oid("1.2.840.113549.1.1.1"), der(0x05, b"")), der(0x03, b"\x00" + b"\x30\x00")),
    )
    return seq(tbs, alg, der(0x03, b"\x00" + b"\xab" * 16))


def pkcs7(certs: list[bytes]) -> bytes:
    signed = seq(
        der(0x02, b"\x01"),
        der(0x31, b""),
        seq(oid("1.2.840.113549.1.7.1")),
        der(0xA0, b"".join(certs)),
        der(0x31, b""),
    )
    return seq(oid("1.2.840.113549.1.7.2"), der(0xA0, signed))


# -- AXML --------------------------------------------------------------------

ANDROID_NS = "http://schemas.android.com/apk/res/android"
ATTR_IDS = {"name": 0x01010003, "priority": 0x0101001C}


def _chunk(ctype: int, header_extra: bytes, body: bytes) -> bytes:
    hsize = 8 + len(header_extra)
    return struct.pack("<HHI", ctype, hsize, hsize + len(body)) + header_extra + body


class _Pool:
    def __init__(self, first=()):
        self.strings: list[str] = []
        self.index: dict[str, int] = {}
        for s in first:
            self.add(s)

    def add(self, s: str) -> int:
        if s not in self.index:
            self.index[s] = len(self.strings)
            self.strings.append(s)
        return self.index[s]

    def encode(self, utf8: bool) -> bytes:
        data = bytearray()
        offsets = []
        for s in self.strings:
            offsets.append(len(data))
            if utf8:
                raw = s.encode("utf-8")
                assert len(s) < 0x80 and len(raw) < 0x80
                data += bytes([len(s), len(raw)]) + raw + b"\x00"
            else:
                units = s.encode("utf-16-le")
                data += struct.pack("<H", len(units) // 2) + units + b"\x00\x00"
        while len(data) % 4:
            data += b"\x00"
        count = len(self.strings)
        strings_start = 0x1C + 4 * count
        header = struct.pack("<IIIII", count, 0, (1 << 8) if utf8 else 0, strings_start, 0)
        return _chunk(0x0001, header, struct.pack(f"<{count}I", *offsets) + bytes(data))


def axml(package: str, permissions, receivers=(), activities=(), utf8=False) -> bytes:
    """Encode a manifest; ``receivers`` is a list of (name, [(action, priority|None)])."""
    pool = _Pool(["name", "priority"])
    ns_uri = pool.add(ANDROID_NS)
    ns_prefix = pool.add("android")
    events = []

    def start(tag, attrs):
        encoded = []
        for key, value, android in attrs:
            if isinstance(value, int):
                encoded.append((android, pool.add(key), None, 0x10, value & 0xFFFFFFFF))
            else:
                idx = pool.add(value)
                encoded.append((android, pool.add(key), idx, 0x03, idx))
        events.append(("start", pool.add(tag), encoded))

    def end(tag):
        events.append(("end", pool.add(tag)))

    start("manifest", [("package", package, False)])
    for p in permissions:
        start("uses-permission", [("name", p, True)])
        end("uses-permission")
    start("application", [])
    for name in activities:
        start("activity", [("name", name, True)])
        end("activity")
    for name, filters in receivers:
        start("receiver", [("name", name, True)])
        for action, priority in filters:
            start("intent-filter", [] if priority is None else [("priority", priority, True)])
            start("action", [("name", action, True)])
            end("action")
            end("intent-filter")
        end("receiver")
    end("application")
    end("manifest")

    body = bytearray()
    resmap = struct.pack("<2I", ATTR_IDS["name"], ATTR_IDS["priority"])
    body += _chunk(0x0180, b"", resmap)
    line = struct.pack("<II", 1, 0xFFFFFFFF)
    body += _chunk(0x0100, line, struct.pack("<II", ns_prefix, ns_uri))
    for ev in events:
        if ev[0] == "start":
            _, name, attrs = ev
            ext = struct.pack("<IIHHHHHH", 0xFFFFFFFF, name, 20, 20, len(attrs), 0, 0, 0)
            for android, key, raw, dtype, data in attrs:
                ext += struct.pack("<IIIHBBI", ns_uri if android else 0xFFFFFFFF, key,
                                   0xFFFFFFFF if raw is None else raw, 8, 0, dtype, data)
            body += _chunk(0x0102, line, ext)
        else:
            body += _chunk(0x0103, line, struct.pack("<II", 0xFFFFFFFF, ev[1]))
    body += _chunk(0x0101, line, struct.pack("<II", ns_prefix, ns_uri))
    return _chunk(0x0003, b"", pool.encode(utf8) + bytes(body))


# -- DEX ---------------------------------------------------------------------


def mutf8(s: str) -> bytes:
    out = bytearray()
    units = s.encode("utf-16-be")
    for i in range(0, len(units), 2):
        u = (units[i] << 8) | units[i + 1]
        if 0 < u < 0x80:
            out.append(u)
        elif u < 0x800:
            out += bytes([0xC0 | (u >> 6), 0x80 | (u & 0x3F)])
        else:
            out += bytes([0xE0 | (u >> 12), 0x80 | ((u >> 6) & 0x3F), 0x80 | (u & 0x3F)])
    return bytes(out)


def uleb(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        out.append(b | (0x80 if n else 0))
        if not n:
            return bytes(out)


def dex(strings) -> bytes:
    count = len(strings)
    ids_off = 0x70
    data_off = ids_off + 4 * count
    data = bytearray()
    offsets = []
    for s in strings:
        offsets.append(data_off + len(data))
        data += uleb(len(s.encode("utf-16-le")) // 2) + mutf8(s) + b"\x00"
    header = bytearray(0x70)
    header[0:8] = b"dex\n035\x00"
    struct.pack_into("<I", header, 0x20, 0x70 + 4 * count + len(data))
    struct.pack_into("<I", header, 0x24, 0x70)
    struct.pack_into("<I", header, 0x28, 0x12345678)
    struct.pack_into("<II", header, 0x38, count, ids_off if count else 0)
    return bytes(header) + struct.pack(f"<{count}I", *offsets) + bytes(data)


# -- APK ---------------------------------------------------------------------


@dataclass
class FixtureSpec:
    serials: list[bytes] = field(default_factory=lambda: [bytes.fromhex("936eacbe07f201df")])
    permissions: list[str] = field(default_factory=lambda: ["android.permission.SEND_SMS",
                                                            "android.permission.READ_SMS"])
    dex_pools: list[list[str]] = field(default_factory=lambda: [["a", "getDeviceId", "su"]])
    package: str = "com.example.fixture"
    receivers: list = field(default_factory=list)
    activities: list = field(default_factory=lambda: ["com.example.fixture.Main"])
    utf8_pool: bool = False
    with_manifest: bool = True
    with_signature: bool = True
    compress: bool = True
    padding: int = 0


def write_apk(spec: FixtureSpec) -> bytes:
    buf = io.BytesIO()
    mode = zipfile.ZIP_DEFLATED if spec.compress else zipfile.ZIP_STORED
    with zipfile.ZipFile(buf, "w", mode) as zf:
        if spec.with_manifest:
            zf.writestr("AndroidManifest.xml", axml(spec.package, spec.permissions, spec.receivers,
                                                    spec.activities, spec.utf8_pool))
        for i, pool in enumerate(spec.dex_pools):
            zf.writestr("classes.dex" if i == 0 else f"classes{i + 1}.dex", dex(pool))
        zf.writestr("META-INF/MANIFEST.MF", "Manifest-Version: 1.0\r\n")
        if spec.with_signature:
            zf.writestr("META-INF/CERT.SF", "Signature-Version: 1.0\r\n")
            zf.writestr("META-INF/CERT.RSA", pkcs7([certificate(s) for s in spec.serials]))
        if spec.padding:
            zf.writestr(zipfile.ZipInfo("assets/blob.bin"), bytes(spec.padding))
    return buf.getvalue()
