"""Signature similarity and streaming family grouping.

A signature is (suspicious-API string, command set, requested permission
string, API-related permission string). Similarities, each in [0, 1]:

* API strings: Needleman-Wunsch global alignment scored match=1, mismatch=0,
  gap=0, so the optimum is the longest-common-subsequence length; divided by
  the longer length.
* Commands: Jaccard index.
* Permissions: ``1 - levenshtein / max_len`` per channel over the sorted
  symbol strings, averaged over the two channels.

Two empty inputs are identical and score 1 under every measure.

Grouping is single-pass: each sample joins the existing group whose (frozen)
founding signature scores highest, if that score reaches ``T_S``; otherwise it
founds a new group. Ties go to the oldest group.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

from .errors import BadWeights, MissingLabel, VersionMismatch

GROUPS_FORMAT_VERSION = 1
DEFAULT_WEIGHTS = (1 / 3, 1 / 3, 1 / 3)


def needleman_wunsch_score(a, b, match: float = 1.0, mismatch: float = 0.0, gap: float = 0.0) -> float:
    prev = [j * gap for j in range(len(b) + 1)]
    for i, x in enumerate(a, 1):
        cur = [i * gap]
        for j, y in enumerate(b, 1):
            diag = prev[j - 1] + (match if x == y else mismatch)
            cur.append(max(diag, prev[j] + gap, cur[j - 1] + gap))
        prev = cur
    return prev[-1]


def levenshtein(a, b) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def sim_api(s1: str, s2: str) -> float:
    longest = max(len(s1), len(s2))
    if longest == 0:
        return 1.0
    return needleman_wunsch_score(s1, s2) / longest


def sim_cmd(c1, c2) -> float:
    c1, c2 = set(c1), set(c2)
    union = c1 | c2
    if not union:
        return 1.0
    return len(c1 & c2) / len(union)


def perm_string_similarity(s1: str, s2: str) -> float:
    longest = max(len(s1), len(s2))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(s1, s2) / longest


def sim_perm(p1: "GroupSignature", p2: "GroupSignature") -> float:
    return (perm_string_similarity(p1.requested_perm_string, p2.requested_perm_string)
            + perm_string_similarity(p1.api_related_perm_string, p2.api_related_perm_string)) / 2


@dataclass(frozen=True)
class GroupSignature:
    api_string: str
    commands: frozenset[str]
    requested_perm_string: str
    api_related_perm_string: str
    source_sha256: str = ""

    def __post_init__(self):
        for s in (self.requested_perm_string, self.api_related_perm_string):
            if list(s) != sorted(set(s)):
                raise ValueError(f"permission string {s!r} must be sorted and duplicate-free")

    @classmethod
    def from_profile(cls, profile, cfg) -> "GroupSignature":
        return cls(
            api_string=profile.api_string,
            commands=frozenset(profile.commands),
            requested_perm_string=cfg.perm_string(profile.requested_critical),
            api_related_perm_string=cfg.perm_string(profile.api_related_critical),
            source_sha256=profile.sha256,
        )

    def to_dict(self) -> dict:
        return {
            "api_string": self.api_string,
            "commands": sorted(self.commands),
            "requested_perm_string": self.requested_perm_string,
            "api_related_perm_string": self.api_related_perm_string,
            "source_sha256": self.source_sha256,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroupSignature":
        return cls(d["api_string"], frozenset(d["commands"]), d["requested_perm_string"],
                   d["api_related_perm_string"], d.get("source_sha256", ""))


def check_weights(w) -> tuple[float, float, float]:
    w = tuple(float(x) for x in w)
    if len(w) != 3 or any(x < 0 or not math.isfinite(x) for x in w) or abs(sum(w) - 1) > 1e-9:
        raise BadWeights(f"weights must be three non-negative numbers summing to 1, got {w}")
    return w


def component_similarities(a: GroupSignature, b: GroupSignature) -> tuple[float, float, float]:
    return sim_api(a.api_string, b.api_string), sim_cmd(a.commands, b.commands), sim_perm(a, b)


def similarity_score(a: GroupSignature, b: GroupSignature, w=DEFAULT_WEIGHTS) -> float:
    w = check_weights(w)
    return sum(wi * si for wi, si in zip(w, component_similarities(a, b)))


@dataclass
class Group:
    id: int
    signature: GroupSignature
    members: list[str] = field(default_factory=list)


@dataclass
class GroupSet:
    groups: list[Group]
    T_S: float
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS

    def assignment(self) -> dict[str, int]:
        return {m: g.id for g in self.groups for m in g.members}

    def to_dict(self) -> dict:
        return {
            "format_version": GROUPS_FORMAT_VERSION,
            "T_S": self.T_S,
            "weights": list(self.weights),
            "groups": [{"id": g.id, "signature": g.signature.to_dict(), "members": list(g.members)}
                       for g in self.groups],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "GroupSet":
        doc = json.loads(text)
        if doc.get("format_version") != GROUPS_FORMAT_VERSION:
            raise VersionMismatch(f"groups format_version {doc.get('format_version')!r}")
        groups = [Group(g["id"], GroupSignature.from_dict(g["signature"]), list(g["members"]))
                  for g in doc["groups"]]
        return cls(groups, doc["T_S"], tuple(doc["weights"]))


def classify_stream(samples, T_S: float = 0.7, w=DEFAULT_WEIGHTS, cfg=None) -> GroupSet:
    """Group samples (AppProfiles or GroupSignatures) in the order given."""
    w = check_weights(w)
    if not 0 <= T_S <= 1:
        raise ValueError("T_S must lie in [0, 1]")
    groups: list[Group] = []
    for sample in samples:
        if isinstance(sample, GroupSignature):
            sig = sample
        else:
            if cfg is None:
                from .features import default_config
                cfg = default_config()
            sig = GroupSignature.from_profile(sample, cfg)
        best, best_score = None, -1.0
        for g in groups:
            score = similarity_score(sig, g.signature, w)
            if score > best_score:
                best, best_score = g, score
        if best is not None and best_score >= T_S:
            best.members.append(sig.source_sha256)
        else:
            groups.append(Group(len(groups) + 1, sig, [sig.source_sha256]))
    return GroupSet(groups, T_S, w)


@dataclass(frozen=True)
class FamilyAccuracy:
    samples: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.samples if self.samples else 0.0


@dataclass(frozen=True)
class GroupAccuracy:
    group_family: dict[int, str]
    per_family: dict[str, FamilyAccuracy]
    overall: float


def majority_label(labels: list[str]) -> str:
    counts = Counter(labels)
    top = max(counts.values())
    return next(l for l in labels if counts[l] == top)


def group_accuracy(gs: GroupSet, labels: dict[str, str]) -> GroupAccuracy:
    """Each group predicts its majority family; a sample is correct when it matches."""
    group_family = {}
    totals: Counter = Counter()
    correct: Counter = Counter()
    for g in gs.groups:
        try:
            member_labels = [labels[m] for m in g.members]
        except KeyError as exc:
            raise MissingLabel(f"no label for {exc.args[0]}") from None
        predicted = majority_label(member_labels)
        group_family[g.id] = predicted
        for lab in member_labels:
            totals[lab] += 1
            correct[lab] += lab == predicted
    per_family = {f: FamilyAccuracy(totals[f], correct[f]) for f in sorted(totals)}
    n = sum(totals.values())
    overall = sum(correct.values()) / n if n else 0.0
    return GroupAccuracy(group_family, per_family, overall)
