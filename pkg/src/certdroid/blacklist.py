"""Certificate-serial blacklist built from a family-labelled malware corpus.

A serial is blacklisted when it signs samples from two or more distinct
families (labels are compared as opaque strings, so variants with distinct
labels count separately). Publicly known test/platform keys are removed
afterwards. Read as ">= 2", the rule balances against the per-family serial
histogram of a 620-serial corpus: 107 + 13 + 12 + 4 = 136 serials span two or
more families, which is the blacklist size that corpus produced.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import EmptyCorpus, UnlabeledSample, VersionMismatch
from .features import BENIGN
from .serial import SerialNumber

BLACKLIST_FORMAT_VERSION = 1
MIN_FAMILIES = 2


@dataclass(frozen=True)
class Provenance:
    families: frozenset[str]
    samples: int


@dataclass(frozen=True)
class SerialBlacklist:
    entries: frozenset[SerialNumber]
    provenance: dict[SerialNumber, Provenance] = field(default_factory=dict, compare=False)
    built_at: str = ""
    excluded_test_keys: frozenset[SerialNumber] = frozenset()

    def __contains__(self, serial: SerialNumber) -> bool:
        return serial in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def _family_sets(profiles) -> tuple[dict[SerialNumber, set[str]], Counter]:
    families: dict[SerialNumber, set[str]] = defaultdict(set)
    samples: Counter = Counter()
    for p in profiles:
        if p.label is None or p.label == BENIGN:
            raise UnlabeledSample(f"profile {p.sha256} lacks a malware family label")
        for s in set(p.serials):
            families[s].add(p.label)
            samples[s] += 1
    return families, samples


def build_blacklist(profiles, cfg, built_at: str | None = None) -> SerialBlacklist:
    families, samples = _family_sets(profiles)
    test_keys = cfg.test_key_serials
    multi = {s for s, fams in families.items() if len(fams) >= MIN_FAMILIES}
    entries = frozenset(multi - test_keys)
    if built_at is None:
        built_at = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    return SerialBlacklist(
        entries=entries,
        provenance={s: Provenance(frozenset(families[s]), samples[s]) for s in sorted(entries)},
        built_at=built_at,
        excluded_test_keys=frozenset(multi & test_keys),
    )


def contains(bl: SerialBlacklist, serials) -> bool:
    return any(s in bl.entries for s in serials)


def family_histogram(profiles, test_keys=frozenset()) -> dict[int, int]:
    """Map number-of-families -> number of serials, test keys left out."""
    families, _ = _family_sets(profiles)
    hist = Counter(len(f) for s, f in families.items() if s not in test_keys)
    return dict(sorted(hist.items()))


@dataclass(frozen=True)
class SerialStats:
    mean_apps_per_serial: float
    frequency: dict[int, int]   # apps signed -> number of serials
    n_profiles: int
    n_serials: int


def serial_stats(profiles) -> SerialStats:
    per_serial: Counter = Counter()
    n = 0
    for p in profiles:
        n += 1
        for s in set(p.serials):
            per_serial[s] += 1
    if not per_serial:
        raise EmptyCorpus("no serials in corpus")
    freq = Counter(per_serial.values())
    return SerialStats(n / len(per_serial), dict(sorted(freq.items())), n, len(per_serial))


# -- text format ---------------------------------------------------------------

def dumps(bl: SerialBlacklist) -> str:
    lines = [
        f"# format_version: {BLACKLIST_FORMAT_VERSION}",
        f"# built_at: {bl.built_at}",
    ]
    for key in sorted(bl.excluded_test_keys):
        lines.append(f"# excluded_test_key: {key.display}")
    for s in sorted(bl.entries):
        prov = bl.provenance.get(s)
        if prov is not None:
            lines.append(f"# {s.display} samples={prov.samples} families={','.join(sorted(prov.families))}")
        lines.append(s.display)
    return "\n".join(lines) + "\n"


def loads(text: str) -> SerialBlacklist:
    """Parse the one-serial-per-line format; comments carry optional metadata."""
    entries = set()
    excluded = set()
    provenance = {}
    built_at = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, _, value = body.partition(":")
            if key == "format_version" and value.strip() != str(BLACKLIST_FORMAT_VERSION):
                raise VersionMismatch(f"blacklist format_version {value.strip()}")
            elif key == "built_at":
                built_at = value.strip()
            elif key == "excluded_test_key":
                excluded.add(SerialNumber.from_display(value))
            elif " samples=" in body and " families=" in body:
                serial_txt, rest = body.split(" samples=", 1)
                count, fams = rest.split(" families=", 1)
                try:
                    provenance[SerialNumber.from_display(serial_txt)] = Provenance(
                        frozenset(f for f in fams.split(",") if f), int(count))
                except ValueError:
                    pass
            continue
        try:
            entries.add(SerialNumber.from_display(line))
        except ValueError as exc:
            raise ValueError(f"blacklist line {lineno}: {exc}") from None
    return SerialBlacklist(frozenset(entries), provenance, built_at, frozenset(excluded))
