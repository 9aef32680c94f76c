"""Certificate serial numbers as creator fingerprints.

A serial is held as the big-endian magnitude of the X.509 ``serialNumber``
INTEGER with leading zero octets removed. DER encodes a positive serial whose
top bit is set with an extra 0x00 octet (``00 93 6e ...``), while some signing
tools emit the bare octets (``93 6e ...``); both read back as
``93:6e:ac:be:07:f2:01:df``, which is the form keytool and openssl print and
the form published test-key lists use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_HEX_PAIR = re.compile(r"^[0-9a-fA-F]{1,2}$")


def _strip(raw: bytes) -> bytes:
    stripped = raw.lstrip(b"\x00")
    return stripped if stripped else b"\x00"


@dataclass(frozen=True, order=True)
class SerialNumber:
    """Normalized serial; equality and hashing use ``value`` only."""

    value: bytes

    def __post_init__(self):
        if not isinstance(self.value, (bytes, bytearray)):
            raise TypeError("SerialNumber value must be bytes")
        object.__setattr__(self, "value", _strip(bytes(self.value)))

    @classmethod
    def from_der_content(cls, content: bytes) -> "SerialNumber":
        return cls(content)

    @classmethod
    def from_display(cls, text: str) -> "SerialNumber":
        """Parse colon-separated hex (``"0A:1b"``); a bare hex run is accepted too."""
        text = text.strip()
        if not text:
            raise ValueError("empty serial")
        if ":" in text:
            parts = text.split(":")
            if not all(_HEX_PAIR.match(p) for p in parts):
                raise ValueError(f"malformed serial {text!r}")
            return cls(bytes(int(p, 16) for p in parts))
        if not re.fullmatch(r"[0-9a-fA-F]+", text):
            raise ValueError(f"malformed serial {text!r}")
        if len(text) % 2:
            text = "0" + text
        return cls(bytes.fromhex(text))

    @classmethod
    def from_int(cls, number: int) -> "SerialNumber":
        if number < 0:
            raise ValueError("negative serial")
        return cls(number.to_bytes(max(1, (number.bit_length() + 7) // 8), "big"))

    @property
    def display(self) -> str:
        return ":".join(f"{b:02x}" for b in self.value)

    def __str__(self) -> str:
        return self.display

    def __repr__(self) -> str:
        return f"SerialNumber({self.display!r})"


def normalize_display(text: str) -> str:
    return SerialNumber.from_display(text).display
