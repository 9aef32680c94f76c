"""Minimal ASN.1 BER/DER walker for pulling certificate serials out of PKCS#7.

Only what the JAR signature blocks need: tag/length decoding (definite and
indefinite lengths), constructed-element traversal, and the fixed path

    ContentInfo ::= SEQUENCE { contentType OID, [0] EXPLICIT SignedData }
    SignedData  ::= SEQUENCE { version, digestAlgorithms SET,
                               contentInfo SEQUENCE,
                               [0] IMPLICIT certificates SET OF Certificate, ... }
    Certificate ::= SEQUENCE { tbsCertificate SEQUENCE {
                               [0] EXPLICIT version OPTIONAL,
                               serialNumber INTEGER, ... }, ... }
"""

from __future__ import annotations

from typing import Iterator, NamedTuple

TAG_INTEGER = 0x02
TAG_OID = 0x06
TAG_SEQUENCE = 0x30
TAG_SET = 0x31
TAG_CTX0 = 0xA0

OID_SIGNED_DATA = bytes.fromhex("2a864886f70d010702")  # 1.2.840.113549.1.7.2

_MAX_DEPTH = 64


class DerError(ValueError):
    pass


class Element(NamedTuple):
    tag: int
    constructed: bool
    start: int          # offset of the identifier octet
    content_start: int
    content_end: int
    end: int            # offset just past the element (incl. end-of-contents)


def read_element(buf: bytes, pos: int, limit: int | None = None, depth: int = 0) -> Element:
    if limit is None:
        limit = len(buf)
    if depth > _MAX_DEPTH:
        raise DerError("nesting too deep")
    if pos >= limit:
        raise DerError(f"truncated identifier at {pos}")
    tag = buf[pos]
    if tag & 0x1F == 0x1F:
        raise DerError(f"high-tag-number form not supported at {pos}")
    constructed = bool(tag & 0x20)
    p = pos + 1
    if p >= limit:
        raise DerError(f"truncated length at {p}")
    first = buf[p]
    p += 1
    if first == 0x80:
        if not constructed:
            raise DerError(f"indefinite length on primitive at {pos}")
        content_start = p
        q = p
        while True:
            if q + 2 > limit:
                raise DerError("unterminated indefinite-length element")
            if buf[q] == 0 and buf[q + 1] == 0:
                return Element(tag, constructed, pos, content_start, q, q + 2)
            q = read_element(buf, q, limit, depth + 1).end
    if first & 0x80:
        n = first & 0x7F
        if n > 4 or p + n > limit:
            raise DerError(f"bad long-form length at {pos}")
        length = int.from_bytes(buf[p:p + n], "big")
        p += n
    else:
        length = first
    if p + length > limit:
        raise DerError(f"element at {pos} overruns its container")
    return Element(tag, constructed, pos, p, p + length, p + length)


def children(buf: bytes, el: Element, depth: int = 0) -> Iterator[Element]:
    if not el.constructed:
        raise DerError(f"element at {el.start} is not constructed")
    pos = el.content_start
    while pos < el.content_end:
        child = read_element(buf, pos, el.content_end, depth + 1)
        yield child
        pos = child.end


def _certificate_serial(buf: bytes, cert: Element) -> bytes:
    if cert.tag != TAG_SEQUENCE:
        raise DerError(f"certificate at {cert.start} is not a SEQUENCE")
    tbs = next(children(buf, cert), None)
    if tbs is None or tbs.tag != TAG_SEQUENCE:
        raise DerError(f"certificate at {cert.start} has no tbsCertificate")
    fields = children(buf, tbs)
    first = next(fields, None)
    if first is not None and first.tag == TAG_CTX0:
        first = next(fields, None)
    if first is None or first.tag != TAG_INTEGER:
        raise DerError(f"tbsCertificate at {tbs.start} has no serialNumber")
    return buf[first.content_start:first.content_end]


def _looks_like_certificate(buf: bytes, el: Element) -> bool:
    try:
        _certificate_serial(buf, el)
    except DerError:
        return False
    return True


def certificate_serials(buf: bytes) -> list[bytes]:
    """Return the raw serialNumber contents of every certificate in a signature block.

    Accepts a PKCS#7 ContentInfo (the usual ``META-INF/*.RSA`` payload) or a
    bare X.509 certificate.
    """
    top = read_element(buf, 0)
    if top.tag != TAG_SEQUENCE:
        raise DerError("signature block does not start with a SEQUENCE")
    parts = list(children(buf, top))
    if parts and parts[0].tag == TAG_OID:
        oid = buf[parts[0].content_start:parts[0].content_end]
        if oid != OID_SIGNED_DATA:
            raise DerError(f"unsupported content type {oid.hex()}")
        if len(parts) < 2 or parts[1].tag != TAG_CTX0:
            raise DerError("SignedData content missing")
        signed_data = next(children(buf, parts[1]), None)
        if signed_data is None or signed_data.tag != TAG_SEQUENCE:
            raise DerError("SignedData is not a SEQUENCE")
        serials = []
        for field in children(buf, signed_data):
            if field.tag == TAG_CTX0:
                for cert in children(buf, field):
                    if cert.tag == TAG_SEQUENCE:
                        serials.append(_certificate_serial(buf, cert))
        return serials
    if _looks_like_certificate(buf, top):
        return [_certificate_serial(buf, top)]
    raise DerError("neither PKCS#7 SignedData nor an X.509 certificate")
