"""Naive-Bayes permission likelihood ratio with Laplace smoothing.

For a binary permission vector ``a`` of length m and equal class priors::

    Lambda(a) = prod_j P(a_j | malicious) / P(a_j | benign)
    P(a_j = 1 | c) = (count_c[j] + 1) / (n_c + 2),   P(a_j = 0 | c) = 1 - P(a_j = 1 | c)

Absent permissions (a_j = 0) contribute their factor too. The model keeps raw
counts only; smoothing happens at query time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ConfigMismatch, DimensionMismatch, EmptyCategory, UnlabeledSample, VersionMismatch

MODEL_FORMAT_VERSION = 1
CHANNELS = ("requested", "api_related")


@dataclass(frozen=True)
class ChannelCounts:
    n_benign: int
    n_malicious: int
    counts_benign: tuple[int, ...]
    counts_malicious: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts_benign) != len(self.counts_malicious):
            raise DimensionMismatch("benign and malicious count vectors differ in length")
        for n, counts in ((self.n_benign, self.counts_benign), (self.n_malicious, self.counts_malicious)):
            if n < 0 or any(not 0 <= c <= n for c in counts):
                raise ValueError("counts must satisfy 0 <= count <= n")

    @property
    def dimension(self) -> int:
        return len(self.counts_benign)

    def p_present(self, j: int, malicious: bool) -> float:
        if malicious:
            return (self.counts_malicious[j] + 1) / (self.n_malicious + 2)
        return (self.counts_benign[j] + 1) / (self.n_benign + 2)

    def log_factor(self, j: int, bit: int) -> float:
        pm = self.p_present(j, True)
        pb = self.p_present(j, False)
        if bit:
            return math.log(pm) - math.log(pb)
        return math.log1p(-pm) - math.log1p(-pb)

    def to_dict(self) -> dict:
        return {
            "n_benign": self.n_benign,
            "n_malicious": self.n_malicious,
            "counts_benign": list(self.counts_benign),
            "counts_malicious": list(self.counts_malicious),
        }


@dataclass(frozen=True)
class LikelihoodModel:
    channels: dict[str, ChannelCounts]
    cfg_fingerprint: str

    def channel(self, name: str) -> ChannelCounts:
        try:
            return self.channels[name]
        except KeyError:
            raise ValueError(f"unknown channel {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "cfg_fingerprint": self.cfg_fingerprint,
            **{name: self.channels[name].to_dict() for name in CHANNELS if name in self.channels},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "LikelihoodModel":
        doc = json.loads(text)
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise VersionMismatch(f"model format_version {doc.get('format_version')!r} "
                                  f"(expected {MODEL_FORMAT_VERSION})")
        channels = {
            name: ChannelCounts(
                int(doc[name]["n_benign"]),
                int(doc[name]["n_malicious"]),
                tuple(int(c) for c in doc[name]["counts_benign"]),
                tuple(int(c) for c in doc[name]["counts_malicious"]),
            )
            for name in CHANNELS if name in doc
        }
        return cls(channels, doc["cfg_fingerprint"])


def _vector(profile, channel: str):
    return profile.requested_critical if channel == "requested" else profile.api_related_critical


def train(profiles, cfg) -> LikelihoodModel:
    """Tally per-permission usage counts for each channel and category."""
    fp = cfg.fingerprint
    m = len(cfg.critical_permissions)
    tallies = {ch: {True: [0] * m, False: [0] * m} for ch in CHANNELS}
    n = {True: 0, False: 0}
    for p in profiles:
        if p.label is None:
            raise UnlabeledSample(f"profile {p.sha256} has no label")
        if p.cfg_fingerprint != fp:
            raise ConfigMismatch(f"profile {p.sha256} was extracted under a different config")
        mal = p.is_malicious
        n[mal] += 1
        for ch in CHANNELS:
            vec = _vector(p, ch)
            if len(vec) != m:
                raise DimensionMismatch(f"profile {p.sha256} has a {len(vec)}-dim {ch} vector")
            row = tallies[ch][mal]
            for j, bit in enumerate(vec):
                if bit:
                    row[j] += 1
    if n[True] == 0 or n[False] == 0:
        raise EmptyCategory(f"need both categories (benign={n[False]}, malicious={n[True]})")
    return LikelihoodModel(
        {ch: ChannelCounts(n[False], n[True], tuple(tallies[ch][False]), tuple(tallies[ch][True]))
         for ch in CHANNELS},
        fp,
    )


def log_likelihood_ratio(model: LikelihoodModel, a, channel: str = "requested") -> float:
    counts = model.channel(channel)
    if len(a) != counts.dimension:
        raise DimensionMismatch(f"vector has {len(a)} entries, model has {counts.dimension}")
    return math.fsum(counts.log_factor(j, 1 if bit else 0) for j, bit in enumerate(a))


def likelihood_ratio(model: LikelihoodModel, a, channel: str = "requested") -> float:
    return math.exp(log_likelihood_ratio(model, a, channel))


def exceeds_threshold(model: LikelihoodModel, a, channel: str, threshold: float) -> bool:
    """Strict ``Lambda(a) > threshold``, decided in log space."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    return log_likelihood_ratio(model, a, channel) > math.log(threshold)
