"""DEX string pool reader.

Header fields used (little-endian):

    0x00  magic            "dex\\n" + 3 version digits + "\\0"
    0x38  string_ids_size  u32
    0x3C  string_ids_off   u32

Each string_id_item is a u32 offset to a string_data_item: a ULEB128 UTF-16
length followed by MUTF-8 bytes and a NUL terminator.
"""

from __future__ import annotations

import re
import struct

from ..errors import DexMalformed

HEADER_SIZE = 0x70
_MAGIC = re.compile(rb"^dex\n\d{3}\x00$")
REPLACEMENT = "�"


def _uleb128(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    for shift in range(0, 35, 7):
        if pos >= len(buf):
            raise IndexError
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
    raise ValueError("ULEB128 too long")


def decode_mutf8(data: bytes) -> str:
    """Decode Modified UTF-8, replacing anything undecodable with U+FFFD.

    Handles the 2-byte NUL (C0 80) and surrogate pairs written as two 3-byte
    sequences; lone surrogates are replaced so results always encode as UTF-8.
    """
    units: list[int] = []
    i, n = 0, len(data)
    while i < n:
        b = data[i]
        if b < 0x80:
            units.append(b)
            i += 1
        elif 0xC0 <= b < 0xE0 and i + 1 < n and data[i + 1] & 0xC0 == 0x80:
            units.append(((b & 0x1F) << 6) | (data[i + 1] & 0x3F))
            i += 2
        elif (0xE0 <= b < 0xF0 and i + 2 < n
              and data[i + 1] & 0xC0 == 0x80 and data[i + 2] & 0xC0 == 0x80):
            units.append(((b & 0x0F) << 12) | ((data[i + 1] & 0x3F) << 6) | (data[i + 2] & 0x3F))
            i += 3
        else:
            units.append(-1)
            i += 1
    out = []
    j = 0
    while j < len(units):
        u = units[j]
        if u < 0:
            out.append(REPLACEMENT)
        elif 0xD800 <= u < 0xDC00 and j + 1 < len(units) and 0xDC00 <= units[j + 1] < 0xE000:
            out.append(chr(0x10000 + ((u - 0xD800) << 10) + (units[j + 1] - 0xDC00)))
            j += 1
        elif 0xD800 <= u < 0xE000:
            out.append(REPLACEMENT)
        else:
            out.append(chr(u))
        j += 1
    return "".join(out)


def read_string_pool(buf: bytes, entry: str = "classes.dex") -> list[str]:
    """Return the strings of the string_ids table in index order."""
    if len(buf) < HEADER_SIZE:
        raise DexMalformed(f"file too short for a DEX header ({len(buf)} bytes)", entry)
    if not _MAGIC.match(buf[:8]):
        raise DexMalformed(f"bad magic {buf[:8]!r}", entry)
    size, off = struct.unpack_from("<II", buf, 0x38)
    if size and (off < HEADER_SIZE or off + 4 * size > len(buf)):
        raise DexMalformed(f"string_ids table ({size} @ {off:#x}) out of range", entry)
    strings = []
    for idx, data_off in enumerate(struct.unpack_from(f"<{size}I", buf, off)):
        if data_off >= len(buf):
            raise DexMalformed(f"string_ids[{idx}] offset {data_off:#x} out of range", entry)
        try:
            _, pos = _uleb128(buf, data_off)
        except (IndexError, ValueError):
            raise DexMalformed(f"string_ids[{idx}] has a bad length prefix", entry) from None
        end = buf.find(b"\x00", pos)
        if end < 0:
            raise DexMalformed(f"string_ids[{idx}] is not NUL-terminated", entry)
        strings.append(decode_mutf8(buf[pos:end]))
    return strings
