"""Feature extraction: RawPackage -> AppProfile.

Matching of suspicious APIs and root commands is by whole token: a hit needs
a non-identifier character (or the string edge) on both sides, so
``Landroid/telephony/TelephonyManager;->getDeviceId()`` matches
``getDeviceId`` and ``/system/bin/su`` matches ``su`` while ``shell`` does
not match ``sh``.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

from .errors import ConfigInvalid
from .ingest import RawPackage, normalize_permission
from .serial import SerialNumber

CONFIG_FORMAT_VERSION = 1
N_CRITICAL = 26
API_CATEGORIES = ("info_collect", "web_access", "sms_send", "sms_delete", "app_install", "other")
BENIGN = "benign"

SEND_SMS_API = "sendTextMessage"
ABORT_BROADCAST_API = "abortBroadcast"

_IDENT = "A-Za-z0-9_$"


def token_pattern(tokens) -> re.Pattern:
    alternation = "|".join(re.escape(t) for t in sorted(tokens, key=lambda t: (-len(t), t)))
    return re.compile(rf"(?<![{_IDENT}])(?:{alternation})(?![{_IDENT}])")


@dataclass(frozen=True)
class SuspiciousApi:
    name: str
    symbol: str
    category: str


@dataclass(frozen=True)
class FeatureConfig:
    critical_permissions: tuple[str, ...]
    permission_symbols: tuple[str, ...]
    suspicious_apis: tuple[SuspiciousApi, ...]
    api_permission_map: dict[str, frozenset[str]]
    command_list: frozenset[str]
    sensitive_apis: tuple[str, ...]
    test_key_serials: frozenset[SerialNumber]
    sms_priority_floor: int = 1000

    def __post_init__(self):
        perms = self.critical_permissions
        if len(perms) != N_CRITICAL:
            raise ConfigInvalid(f"need exactly {N_CRITICAL} critical permissions, got {len(perms)}")
        if len(set(perms)) != len(perms):
            raise ConfigInvalid("duplicate critical permission")
        if "INTERNET" in perms:
            raise ConfigInvalid("INTERNET must not be a critical permission")
        if "INSTALL_PACKAGES" not in perms:
            raise ConfigInvalid("INSTALL_PACKAGES must be a critical permission")
        _check_alphabet(self.permission_symbols, len(perms), "permission")
        api_names = [a.name for a in self.suspicious_apis]
        if len(set(api_names)) != len(api_names):
            raise ConfigInvalid("duplicate suspicious API")
        _check_alphabet([a.symbol for a in self.suspicious_apis], len(api_names), "API")
        for a in self.suspicious_apis:
            if a.category not in API_CATEGORIES:
                raise ConfigInvalid(f"unknown API category {a.category!r} for {a.name}")
        unknown = set(self.api_permission_map) - set(api_names)
        if unknown:
            raise ConfigInvalid(f"permission map names unknown APIs: {sorted(unknown)}")
        if not set(self.sensitive_apis) <= set(api_names):
            raise ConfigInvalid("sensitive APIs must be suspicious APIs")
        if not self.command_list:
            raise ConfigInvalid("empty command list")

    @cached_property
    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.critical_permissions).encode()).hexdigest()

    @cached_property
    def permission_index(self) -> dict[str, int]:
        return {p: j for j, p in enumerate(self.critical_permissions)}

    @cached_property
    def api_by_name(self) -> dict[str, SuspiciousApi]:
        return {a.name: a for a in self.suspicious_apis}

    @cached_property
    def api_regex(self) -> re.Pattern:
        return token_pattern(a.name for a in self.suspicious_apis)

    @cached_property
    def command_regex(self) -> re.Pattern:
        return token_pattern(self.command_list)

    def perm_string(self, vector) -> str:
        """Sorted symbol string for the 1-entries of a permission vector."""
        return "".join(sorted(s for s, bit in zip(self.permission_symbols, vector) if bit))

    def to_dict(self) -> dict:
        return {
            "format_version": CONFIG_FORMAT_VERSION,
            "critical_permissions": [{"name": p, "symbol": s}
                                     for p, s in zip(self.critical_permissions, self.permission_symbols)],
            "suspicious_apis": [{"name": a.name, "symbol": a.symbol, "category": a.category}
                                for a in self.suspicious_apis],
            "api_permission_map": {k: sorted(v) for k, v in sorted(self.api_permission_map.items())},
            "command_list": sorted(self.command_list),
            "sensitive_apis": list(self.sensitive_apis),
            "test_key_serials": sorted(s.display for s in self.test_key_serials),
            "sms_priority_floor": self.sms_priority_floor,
        }


def _check_alphabet(symbols, expected, what):
    if len(symbols) != expected:
        raise ConfigInvalid(f"{what} alphabet has {len(symbols)} symbols for {expected} entries")
    for s in symbols:
        if not isinstance(s, str) or len(s) != 1:
            raise ConfigInvalid(f"{what} symbol {s!r} is not a single character")
    if len(set(symbols)) != len(symbols):
        raise ConfigInvalid(f"{what} alphabet collision")


def config_from_dict(doc: dict) -> FeatureConfig:
    try:
        perms = doc["critical_permissions"]
        apis = doc["suspicious_apis"]
        return FeatureConfig(
            critical_permissions=tuple(normalize_permission(p["name"]) for p in perms),
            permission_symbols=tuple(p["symbol"] for p in perms),
            suspicious_apis=tuple(SuspiciousApi(a["name"], a["symbol"], a.get("category", "other"))
                                  for a in apis),
            api_permission_map={k: frozenset(normalize_permission(p) for p in v)
                                for k, v in doc.get("api_permission_map", {}).items()},
            command_list=frozenset(doc["command_list"]),
            sensitive_apis=tuple(doc["sensitive_apis"]),
            test_key_serials=frozenset(SerialNumber.from_display(s)
                                       for s in doc.get("test_key_serials", [])),
            sms_priority_floor=int(doc.get("sms_priority_floor", 1000)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"malformed feature config: {exc!r}") from None


def load_config(text: str) -> FeatureConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigInvalid("config must be a JSON object")
    version = doc.get("format_version", CONFIG_FORMAT_VERSION)
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigInvalid(f"unsupported config format_version {version}")
    return config_from_dict(doc)


def dump_config(cfg: FeatureConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=1) + "\n"


_DEFAULT: FeatureConfig | None = None


def default_config() -> FeatureConfig:
    """The shipped configuration (26 critical permissions, 13 commands, two test keys)."""
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("certdroid").joinpath("data/default_config.json").read_text("utf-8")
        _DEFAULT = load_config(text)
    return _DEFAULT


@dataclass(frozen=True)
class AppProfile:
    sha256: str
    serials: tuple[SerialNumber, ...]
    requested_critical: tuple[int, ...]
    api_related_critical: tuple[int, ...]
    api_string: str
    commands: frozenset[str]
    sends_sms: bool
    hides_sms: bool
    sensitive_count: int
    cfg_fingerprint: str
    label: str | None = None
    name: str = ""
    # critical permission -> suspicious APIs that implied it
    api_permission_sources: dict[str, tuple[str, ...]] = field(default_factory=dict, compare=False)

    @property
    def is_malicious(self) -> bool:
        return self.label is not None and self.label != BENIGN

    def with_label(self, label: str | None) -> "AppProfile":
        from dataclasses import replace
        return replace(self, label=label)


def api_occurrences(strings, cfg: FeatureConfig) -> list[str]:
    """Suspicious-API names in pool order, one entry per token occurrence."""
    rx = cfg.api_regex
    return [m.group(0) for s in strings for m in rx.finditer(s)]


def extract_profile(raw: RawPackage, cfg: FeatureConfig, label: str | None = None) -> AppProfile:
    requested = raw.manifest.requested_permissions
    requested_vec = tuple(int(p in requested) for p in cfg.critical_permissions)

    hits = api_occurrences(raw.dex_strings, cfg)
    present = set(hits)
    api_string = "".join(cfg.api_by_name[h].symbol for h in hits)

    sources: dict[str, set[str]] = {}
    for api in present:
        for perm in cfg.api_permission_map.get(api, ()):
            if perm in cfg.permission_index:
                sources.setdefault(perm, set()).add(api)
    api_vec = tuple(int(p in sources) for p in cfg.critical_permissions)

    cmd_rx = cfg.command_regex
    commands = frozenset(m.group(0) for s in raw.dex_strings for m in cmd_rx.finditer(s))

    high_priority_sms = any(
        f.action.endswith("SMS_RECEIVED") and f.priority is not None
        and f.priority >= cfg.sms_priority_floor
        for f in raw.manifest.intent_filters
    )
    return AppProfile(
        sha256=raw.sha256,
        serials=tuple(raw.cert_serials),
        requested_critical=requested_vec,
        api_related_critical=api_vec,
        api_string=api_string,
        commands=commands,
        sends_sms=SEND_SMS_API in present,
        hides_sms=high_priority_sms and ABORT_BROADCAST_API in present,
        sensitive_count=sum(1 for a in cfg.sensitive_apis if a in present),
        cfg_fingerprint=cfg.fingerprint,
        label=label,
        name=raw.manifest.app_name,
        api_permission_sources={p: tuple(sorted(v)) for p, v in sorted(sources.items())},
    )
