"""Turn APK bytes or profile documents into :class:`RawPackage` records."""

from __future__ import annotations

import hashlib
import io
import json
import re
import struct
import zipfile
import zlib
from dataclasses import dataclass, field

from ..errors import (
    ManifestMissing,
    NoCertificate,
    NotAnArchive,
    SchemaViolation,
)
from ..serial import SerialNumber
from .axml import parse_manifest
from .der import DerError, certificate_serials
from .dex import read_string_pool

__all__ = [
    "IntentFilter",
    "Component",
    "RawManifest",
    "RawPackage",
    "parse_apk",
    "load_profile",
    "dump_profile",
    "normalize_permission",
]

PROFILE_FORMAT_VERSION = 1

_SIG_BLOCK = re.compile(r"^META-INF/[^/]+\.(RSA|DSA|EC)$", re.IGNORECASE)
_DEX_ENTRY = re.compile(r"^classes\d*\.dex$")
_PERMISSION_PREFIX = "android.permission."
COMPONENT_KINDS = ("activity", "service", "receiver", "provider")


def normalize_permission(name: str) -> str:
    name = name.strip()
    if name.startswith(_PERMISSION_PREFIX):
        return name[len(_PERMISSION_PREFIX):]
    return name


@dataclass(frozen=True)
class IntentFilter:
    action: str
    priority: int | None = None


@dataclass(frozen=True)
class Component:
    kind: str
    name: str


@dataclass(frozen=True)
class RawManifest:
    app_name: str = ""
    requested_permissions: frozenset[str] = frozenset()
    intent_filters: tuple[IntentFilter, ...] = ()
    components: tuple[Component, ...] = ()


@dataclass(frozen=True)
class RawPackage:
    sha256: str
    size_bytes: int
    cert_serials: tuple[SerialNumber, ...]
    manifest: RawManifest = field(default_factory=RawManifest)
    dex_strings: tuple[str, ...] = ()


# What the stdlib zip reader can raise on hostile input.
_ZIP_ERRORS = (zipfile.BadZipFile, zlib.error, struct.error, EOFError, NotImplementedError,
               RuntimeError, ValueError, OverflowError, OSError)


def _read_entry(zf: zipfile.ZipFile, info: zipfile.ZipInfo) -> bytes:
    try:
        return zf.read(info)
    except _ZIP_ERRORS as exc:
        raise NotAnArchive(f"unreadable entry ({exc})", info.filename) from None


def parse_apk(data: bytes) -> RawPackage:
    """Parse an APK held in memory.

    Raises a subclass of :class:`~certdroid.errors.IngestError` for anything
    that is not a well-formed package; nothing else escapes.
    """
    data = bytes(data)
    if not data.startswith(b"PK"):
        raise NotAnArchive("bad ZIP magic", "<archive>")
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
        infos = zf.infolist()
    except _ZIP_ERRORS as exc:
        raise NotAnArchive(f"cannot open archive ({exc})", "<archive>") from None

    with zf:
        serials: list[SerialNumber] = []
        blocks = [i for i in infos if _SIG_BLOCK.match(i.filename)]
        if not blocks:
            raise NoCertificate("no META-INF signature block", "META-INF/")
        for info in blocks:
            try:
                contents = certificate_serials(_read_entry(zf, info))
            except DerError as exc:
                raise NoCertificate(f"unparseable signature block ({exc})", info.filename) from None
            for raw in contents:
                sn = SerialNumber.from_der_content(raw)
                if sn not in serials:
                    serials.append(sn)
        if not serials:
            raise NoCertificate("signature block carries no certificate", blocks[0].filename)

        manifest_info = next((i for i in infos if i.filename == "AndroidManifest.xml"), None)
        if manifest_info is None:
            raise ManifestMissing("no AndroidManifest.xml", "AndroidManifest.xml")
        md = parse_manifest(_read_entry(zf, manifest_info), manifest_info.filename)

        dex_strings: list[str] = []
        for info in infos:
            if _DEX_ENTRY.match(info.filename):
                dex_strings.extend(read_string_pool(_read_entry(zf, info), info.filename))

    manifest = RawManifest(
        app_name=md.package,
        requested_permissions=frozenset(normalize_permission(p) for p in md.permissions),
        intent_filters=tuple(IntentFilter(a, p) for a, p in md.intent_filters),
        components=tuple(Component(k, n) for k, n in md.components),
    )
    return RawPackage(
        sha256=hashlib.sha256(data).hexdigest(),
        size_bytes=len(data),
        cert_serials=tuple(serials),
        manifest=manifest,
        dex_strings=tuple(dex_strings),
    )


# -- profile documents -------------------------------------------------------

def _expect(value, kind, path):
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise SchemaViolation(f"expected {names}, got {type(value).__name__}", path)
    return value


def _string_list(doc, key):
    items = _expect(doc.get(key, []), list, f"$.{key}")
    return [_expect(v, str, f"$.{key}[{i}]") for i, v in enumerate(items)]


def load_profile(text: str | bytes) -> RawPackage:
    """Build a RawPackage from a profile document (JSON text).

    Missing collections default to empty. A missing ``sha256`` defaults to the
    digest of the document bytes themselves.
    """
    raw_bytes = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    try:
        doc = json.loads(raw_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"not a UTF-8 JSON document ({exc})") from None
    _expect(doc, dict, "$")

    sha = doc.get("sha256")
    if sha is None:
        sha = hashlib.sha256(raw_bytes).hexdigest()
    else:
        _expect(sha, str, "$.sha256")
        sha = sha.lower()
        if not re.fullmatch(r"[0-9a-f]{64}", sha):
            raise SchemaViolation("sha256 must be 64 hex characters", "$.sha256")
    size = _expect(doc.get("size_bytes", 0), int, "$.size_bytes")
    if size < 0:
        raise SchemaViolation("size_bytes must be non-negative", "$.size_bytes")
    name = _expect(doc.get("name", ""), str, "$.name")

    serials: list[SerialNumber] = []
    for i, s in enumerate(_string_list(doc, "cert_serials")):
        try:
            sn = SerialNumber.from_display(s)
        except ValueError as exc:
            raise SchemaViolation(str(exc), f"$.cert_serials[{i}]") from None
        if sn not in serials:
            serials.append(sn)

    filters = []
    for i, f in enumerate(_expect(doc.get("intent_filters", []), list, "$.intent_filters")):
        path = f"$.intent_filters[{i}]"
        _expect(f, dict, path)
        action = _expect(f.get("action"), str, f"{path}.action")
        prio = f.get("priority")
        if prio is not None:
            _expect(prio, int, f"{path}.priority")
            if not -(1 << 31) <= prio < (1 << 31):
                raise SchemaViolation("priority must fit in 32 bits", f"{path}.priority")
        filters.append(IntentFilter(action, prio))

    components = []
    for i, c in enumerate(_expect(doc.get("components", []), list, "$.components")):
        path = f"$.components[{i}]"
        _expect(c, dict, path)
        kind = _expect(c.get("kind"), str, f"{path}.kind")
        if kind not in COMPONENT_KINDS:
            raise SchemaViolation(f"unknown component kind {kind!r}", f"{path}.kind")
        components.append(Component(kind, _expect(c.get("name"), str, f"{path}.name")))

    manifest = RawManifest(
        app_name=name,
        requested_permissions=frozenset(normalize_permission(p)
                                        for p in _string_list(doc, "requested_permissions")),
        intent_filters=tuple(filters),
        components=tuple(components),
    )
    return RawPackage(
        sha256=sha,
        size_bytes=size,
        cert_serials=tuple(serials),
        manifest=manifest,
        dex_strings=tuple(_string_list(doc, "dex_strings")),
    )


def profile_to_dict(raw: RawPackage) -> dict:
    m = raw.manifest
    return {
        "format_version": PROFILE_FORMAT_VERSION,
        "sha256": raw.sha256,
        "name": m.app_name,
        "size_bytes": raw.size_bytes,
        "cert_serials": [s.display for s in raw.cert_serials],
        "requested_permissions": sorted(m.requested_permissions),
        "intent_filters": [{"action": f.action, "priority": f.priority} for f in m.intent_filters],
        "components": [{"kind": c.kind, "name": c.name} for c in m.components],
        "dex_strings": list(raw.dex_strings),
    }


def dump_profile(raw: RawPackage) -> str:
    """Serialize to a canonical profile document (stable bytes for equal input)."""
    return json.dumps(profile_to_dict(raw), indent=1, ensure_ascii=False) + "\n"


def load_any(data: bytes) -> RawPackage:
    """Dispatch on content: ZIP magic means APK, anything else a profile document."""
    if data.startswith(b"PK"):
        return parse_apk(data)
    if data.lstrip()[:1] == b"{":
        return load_profile(data)
    raise NotAnArchive("neither an APK nor a profile document", "<input>")
