"""Cross-validation harness and synthetic corpora.

The synthetic generators stand in for real malware collections, which cannot be
redistributed. They emit ordinary profile documents, so everything downstream
(feature extraction, training, scanning) runs on them unchanged.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import blacklist as bl_mod
from .classifier import DEFAULT_WEIGHTS, classify_stream, group_accuracy
from .detector import DetectorParams, detect
from .errors import BadSpec, CorpusTooSmall, FoldDegenerate
from .features import BENIGN, AppProfile, FeatureConfig, extract_profile
from .ingest import IntentFilter, RawManifest, RawPackage, dump_profile
from .likelihood import train
from .serial import SerialNumber

# Requested-permission usage rates (percent) per critical permission:
# (benign, malware) for the requested channel, then the API-related channel.
USAGE_RATES = {
    "ACCESS_COARSE_LOCATION": (16.61, 53.78, 20.52, 56.28),
    "ACCESS_FINE_LOCATION": (16.96, 51.89, 17.72, 55.82),
    "CALL_PHONE": (6.57, 26.92, 0, 0),
    "INSTALL_PACKAGES": (0.32, 12.67, 0, 0),
    "PROCESS_OUTGOING_CALLS": (0.63, 1.80, 0, 0),
    "READ_CONTACTS": (5.82, 24.95, 1.72, 0.22),
    "READ_SMS": (1.22, 27.82, 0, 0),
    "SEND_SMS": (1.82, 43.98, 1.04, 35.07),
    "WRITE_CONTACTS": (2.08, 1.47, 1.72, 0.22),
    "BLUETOOTH": (1.51, 4.04, 1.21, 2.37),
    "BLUETOOTH_ADMIN": (1.21, 2.77, 0.95, 0.53),
    "GET_ACCOUNTS": (4.40, 4.90, 3.39, 3.67),
    "MOUNT_UNMOUNT_FILESYSTEMS": (0.80, 20.62, 0, 0),
    "NFC": (0.26, 0.04, 0.15, 0),
    "READ_CALENDAR": (0.97, 0.04, 0, 0),
    "READ_HISTORY_BOOKMARKS": (0.93, 7.88, 0.25, 5.64),
    "READ_LOGS": (1.39, 28.59, 0, 0),
    "READ_PHONE_STATE": (24.10, 96.55, 12.00, 69.19),
    "RECEIVE_MMS": (0.20, 1.05, 0, 0),
    "RECEIVE_SMS": (1.66, 37.66, 0, 0),
    "RECEIVE_WAP_PUSH": (0.05, 3.01, 0, 0),
    "RECORD_AUDIO": (3.13, 22.20, 2.53, 27.84),
    "WRITE_CALENDAR": (0.85, 0, 0, 0),
    "WRITE_EXTERNAL_STORAGE": (32.25, 82.50, 0.10, 0.68),
    "WRITE_HISTORY_BOOKMARKS": (0.57, 7.07, 0.04, 0.02),
    "WRITE_SMS": (0.77, 5.67, 0, 0),
}

# Serials per number-of-families bucket for a 620-serial malware corpus
# (test keys excluded); the last bucket is "5 or more".
FAMILY_SPREAD = {1: 484, 2: 107, 3: 13, 4: 12, 5: 4}


# -- folds and confusion -------------------------------------------------------

@dataclass
class ConfusionMatrix:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def add(self, actual_malicious: bool, predicted_malicious: bool):
        if actual_malicious:
            if predicted_malicious:
                self.tp += 1
            else:
                self.fn += 1
        elif predicted_malicious:
            self.fp += 1
        else:
            self.tn += 1

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fn + other.fn,
                               self.fp + other.fp, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn}


def kfold_split(n: int, k: int = 5, seed: int = 0) -> list[list[int]]:
    """Seeded shuffle of ``range(n)`` dealt round-robin into k folds."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise CorpusTooSmall(f"{n} samples cannot fill {k} folds")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    return [sorted(order[i::k]) for i in range(k)]


@dataclass
class LabeledCorpus:
    profiles: list[AppProfile]
    folds: list[list[int]] | None = None

    def labels(self) -> dict[str, str]:
        return {p.sha256: p.label for p in self.profiles}


@dataclass
class FoldResult:
    index: int
    confusion: ConfusionMatrix
    n_groups: int
    family_samples: dict[str, int]
    family_correct: dict[str, int]
    records: list[dict]


@dataclass
class CVReport:
    folds: list[FoldResult]
    k: int
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def total(self) -> ConfusionMatrix:
        out = ConfusionMatrix()
        for f in self.folds:
            out = out + f.confusion
        return out

    @property
    def mean_accuracy(self) -> float:
        return sum(f.confusion.accuracy for f in self.folds) / len(self.folds)

    def family_counts(self) -> dict[str, tuple[int, int]]:
        """family -> (classified samples, correctly grouped samples), summed over folds."""
        samples: Counter = Counter()
        correct: Counter = Counter()
        for f in self.folds:
            samples.update(f.family_samples)
            correct.update(f.family_correct)
        return {fam: (samples[fam], correct[fam]) for fam in sorted(samples)}

    def family_accuracy(self) -> dict[str, tuple[int, float]]:
        return {fam: (n, c / n) for fam, (n, c) in self.family_counts().items()}

    def classification_accuracy(self, malware_only: bool = True) -> float:
        n = c = 0
        for fam, (count, good) in self.family_counts().items():
            if malware_only and fam == BENIGN:
                continue
            n += count
            c += good
        return c / n if n else 0.0

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "params": self.params,
            "mean_accuracy": self.mean_accuracy,
            "confusion": self.total.to_dict(),
            "folds": [{"index": f.index, "confusion": f.confusion.to_dict(),
                       "accuracy": f.confusion.accuracy, "n_groups": f.n_groups}
                      for f in self.folds],
            "family_accuracy": {fam: {"samples": n, "accuracy": acc}
                                for fam, (n, acc) in self.family_accuracy().items()},
            "classification_accuracy": self.classification_accuracy(),
            "records": [r for f in self.folds for r in f.records],
        }


def run_cv(corpus: LabeledCorpus, cfg: FeatureConfig, params: DetectorParams = DetectorParams(),
           k: int = 5, seed: int = 0, T_S: float = 0.7, weights=DEFAULT_WEIGHTS) -> CVReport:
    """Train the model and blacklist on k-1 folds, detect and classify the held-out fold."""
    profiles = corpus.profiles
    folds = corpus.folds or kfold_split(len(profiles), k, seed)
    results = []
    for i, held_out in enumerate(folds):
        held = set(held_out)
        training = [p for idx, p in enumerate(profiles) if idx not in held]
        malicious = [p for p in training if p.is_malicious]
        if not malicious or len(malicious) == len(training):
            raise FoldDegenerate(f"training split for fold {i} lacks a category")
        model = train(training, cfg)
        blist = bl_mod.build_blacklist(malicious, cfg, built_at="")

        confusion = ConfusionMatrix()
        flagged = []
        records = []
        for idx in held_out:
            p = profiles[idx]
            v = detect(p, blist, model, params)
            confusion.add(p.is_malicious, v.malicious)
            if v.malicious:
                flagged.append(p)
            records.append({"fold": i, "sha256": p.sha256, "label": p.label,
                            "decision": v.decision, "reasons": list(v.reasons), "group": None})
        groups = classify_stream(flagged, T_S, weights, cfg)
        acc = group_accuracy(groups, {p.sha256: p.label for p in flagged})
        assignment = groups.assignment()
        for r in records:
            gid = assignment.get(r["sha256"])
            if gid is not None:
                r["group"] = gid
                r["group_family"] = acc.group_family[gid]
        results.append(FoldResult(
            index=i,
            confusion=confusion,
            n_groups=len(groups.groups),
            family_samples={f: a.samples for f, a in acc.per_family.items()},
            family_correct={f: a.correct for f, a in acc.per_family.items()},
            records=records,
        ))
    return CVReport(results, len(folds), seed, {
        "T_L": params.T_L, "T_S": T_S, "weights": list(weights),
        "sensitive_threshold": params.sensitive_threshold, "short_circuit": params.short_circuit,
    })


# -- synthetic corpora ---------------------------------------------------------

BENIGN_APIS = ("openConnection", "openStream", "loadUrl", "setJavaScriptEnabled", "loadLibrary")
FAMILY_NAMES = (
    "AdWo", "AirPush", "Boxer", "Counterclank", "DroidDream", "DroidKungFu", "FakeApp",
    "FakeBattScar", "FakeInst", "FakeNotify", "Gappusin", "GinMaster", "Kmin", "OpFake",
    "PremiumSMS", "Ropin", "Smslider", "SmsReg", "SmsSend", "SMStado",
)

APIS_PER_FAMILY = 4
COMMANDS_PER_FAMILY = 2
PERMS_PER_FAMILY = 4


@dataclass(frozen=True)
class SyntheticSpec:
    n_families: int = 5
    samples_per_family: int = 80
    n_benign: int = 200
    separable: bool = True        # disjoint per-family APIs, commands and permissions
    variation: bool = True        # small intra-family perturbations
    usage_rates: bool = False     # requested permissions drawn to hit USAGE_RATES exactly
    shared_serials: bool = True   # each family serial also signs the next family

    def validate(self, cfg: FeatureConfig):
        if self.n_families < 1 or self.samples_per_family < 1 or self.n_benign < 0:
            raise BadSpec("sizes must be positive (n_benign may be 0)")
        if self.n_families > len(FAMILY_NAMES) * 10:
            raise BadSpec("too many families")
        if self.separable:
            pool = _malicious_api_pool(cfg)
            cap = min(len(pool) // APIS_PER_FAMILY, len(cfg.command_list) // COMMANDS_PER_FAMILY,
                      len(cfg.critical_permissions) // PERMS_PER_FAMILY)
            if self.n_families > cap:
                raise BadSpec(f"separable mode supports at most {cap} families")


@dataclass
class SyntheticCorpus:
    raws: list[RawPackage]
    labels: dict[str, str]
    ground_truth: dict

    def labeled(self, cfg: FeatureConfig) -> LabeledCorpus:
        return LabeledCorpus([extract_profile(r, cfg, self.labels[r.sha256]) for r in self.raws])

    def write(self, root) -> None:
        root = Path(root)
        (root / "profiles").mkdir(parents=True, exist_ok=True)
        for r in self.raws:
            (root / "profiles" / f"{r.sha256}.json").write_text(dump_profile(r), encoding="utf-8")
        write_labels(root / "labels.tsv", {r.sha256: self.labels[r.sha256] for r in self.raws})
        (root / "ground_truth.json").write_text(
            json.dumps(self.ground_truth, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_labels(path, labels: dict[str, str]) -> None:
    lines = [f"{sha}\t{label}" for sha, label in labels.items()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_labels(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        sha, _, label = line.partition("\t")
        out[sha.strip().lower()] = label.strip()
    return out


def family_name(k: int) -> str:
    base = FAMILY_NAMES[k % len(FAMILY_NAMES)]
    return base if k < len(FAMILY_NAMES) else f"{base}.{k // len(FAMILY_NAMES)}"


def _malicious_api_pool(cfg: FeatureConfig) -> list[str]:
    return [a.name for a in cfg.suspicious_apis if a.name not in BENIGN_APIS]


def _sha(seed: int, tag: str) -> str:
    return hashlib.sha256(f"certdroid-synthetic:{seed}:{tag}".encode()).hexdigest()


def _serial(rng: random.Random, taken: set) -> SerialNumber:
    while True:
        raw = bytes([rng.randrange(1, 256)]) + bytes(rng.randrange(256) for _ in range(7))
        sn = SerialNumber(raw)
        if sn not in taken:
            taken.add(sn)
            return sn


def _api_strings(owner: str, apis: list[str]) -> list[str]:
    return [f"L{owner}/C{i};->{api}()V" for i, api in enumerate(apis)]


def _exact_rate_assignment(rng: random.Random, n: int, rate_percent: float) -> set[int]:
    return set(rng.sample(range(n), round(n * rate_percent / 100)))


def gen_synthetic_corpus(spec: SyntheticSpec, seed: int = 0, cfg: FeatureConfig | None = None) -> SyntheticCorpus:
    """Deterministic corpus of malware families plus benign apps.

    In separable mode family k owns its own slice of suspicious APIs, root
    commands and requested permissions, and shares a signing serial with
    family k+1, so every family serial ends up blacklisted.
    """
    if cfg is None:
        from .features import default_config
        cfg = default_config()
    spec.validate(cfg)
    rng = random.Random(seed)
    taken: set = set()
    pool = _malicious_api_pool(cfg)
    commands = sorted(cfg.command_list)
    perms = list(cfg.critical_permissions)
    spare_perms = perms[spec.n_families * PERMS_PER_FAMILY:] if spec.separable else perms

    families = []
    serials = [_serial(rng, taken) for _ in range(spec.n_families)]
    for k in range(spec.n_families):
        if spec.separable:
            apis = pool[k * APIS_PER_FAMILY:(k + 1) * APIS_PER_FAMILY]
            cmds = commands[k * COMMANDS_PER_FAMILY:(k + 1) * COMMANDS_PER_FAMILY]
            fperms = perms[k * PERMS_PER_FAMILY:(k + 1) * PERMS_PER_FAMILY]
        else:
            apis = rng.sample(pool, APIS_PER_FAMILY)
            cmds = rng.sample(commands, rng.randint(1, 3))
            fperms = rng.sample(perms, rng.randint(3, 6))
        signers = [serials[k]]
        if spec.shared_serials and spec.n_families > 1:
            signers.append(serials[k - 1])
        families.append({"name": family_name(k), "apis": apis, "commands": cmds,
                         "permissions": sorted(fperms), "serials": [s.display for s in signers]})

    n_mal = spec.n_families * spec.samples_per_family
    if spec.usage_rates:
        mal_sets = {p: _exact_rate_assignment(rng, n_mal, USAGE_RATES[p][1]) for p in perms}
        ben_sets = {p: _exact_rate_assignment(rng, spec.n_benign, USAGE_RATES[p][0]) for p in perms}

    raws: list[RawPackage] = []
    labels: dict[str, str] = {}
    i = 0
    for k, fam in enumerate(families):
        for s in range(spec.samples_per_family):
            sha = _sha(seed, f"m{k}-{s}")
            occurrences = fam["apis"] * 2
            requested = set(fam["permissions"])
            if spec.variation and rng.random() < 0.5:
                occurrences = occurrences + fam["apis"][:1]
            if spec.variation and spare_perms and rng.random() < 0.5:
                requested.add(rng.choice(spare_perms))
            if spec.usage_rates:
                requested = {p for p in perms if i in mal_sets[p]}
            filters = []
            if "sendTextMessage" in fam["apis"]:
                filters.append(IntentFilter("android.provider.Telephony.SMS_RECEIVED", 2147483647))
            owner = f"com/{fam['name'].lower()}/s{s}"
            dex = [f"L{owner}/Main;", "<init>", *_api_strings(owner, occurrences),
                   *(f"/system/bin/{c}" for c in fam["commands"])]
            signer = SerialNumber.from_display(fam["serials"][s % len(fam["serials"])])
            raws.append(RawPackage(
                sha256=sha, size_bytes=0, cert_serials=(signer,),
                manifest=RawManifest(app_name=f"com.{fam['name'].lower()}.s{s}",
                                     requested_permissions=frozenset(requested),
                                     intent_filters=tuple(filters)),
                dex_strings=tuple(dex),
            ))
            labels[sha] = fam["name"]
            i += 1

    benign_serials: list[SerialNumber] = []
    for b in range(spec.n_benign):
        sha = _sha(seed, f"b{b}")
        if benign_serials and rng.random() < 0.35:
            signer = rng.choice(benign_serials)
        else:
            signer = _serial(rng, taken)
            benign_serials.append(signer)
        if spec.usage_rates:
            requested = {p for p in perms if b in ben_sets[p]}
        else:
            requested = {p for p in perms if rng.random() < USAGE_RATES[p][0] / 100}
        apis = [rng.choice(BENIGN_APIS) for _ in range(rng.randint(0, 3))]
        owner = f"org/app{b}"
        raws.append(RawPackage(
            sha256=sha, size_bytes=0, cert_serials=(signer,),
            manifest=RawManifest(app_name=f"org.app{b}", requested_permissions=frozenset(requested)),
            dex_strings=(f"L{owner}/Main;", "<init>", "Landroid/app/Activity;", *_api_strings(owner, apis)),
        ))
        labels[sha] = BENIGN

    truth = {
        "seed": seed,
        "spec": {k: getattr(spec, k) for k in spec.__dataclass_fields__},
        "families": families,
        "n_malicious": n_mal,
        "n_benign": spec.n_benign,
    }
    return SyntheticCorpus(raws, labels, truth)


def _minimal_profile(cfg: FeatureConfig, sha: str, serial: SerialNumber, label: str) -> AppProfile:
    raw = RawPackage(sha256=sha, size_bytes=0, cert_serials=(serial,))
    return extract_profile(raw, cfg, label)


def gen_family_spread_corpus(seed: int = 0, cfg: FeatureConfig | None = None,
                      histogram: dict[int, int] = FAMILY_SPREAD) -> tuple[list[AppProfile], dict]:
    """Malware profiles whose serial/family histogram matches ``histogram``,
    plus the shipped test keys each spread over several families."""
    if cfg is None:
        from .features import default_config
        cfg = default_config()
    rng = random.Random(seed)
    taken = set(cfg.test_key_serials)
    families = [family_name(k) for k in range(40)]
    profiles = []
    expected = {}
    counter = 0

    def emit(serial, n_fam):
        nonlocal counter
        for fam in rng.sample(families, n_fam):
            for _ in range(rng.randint(1, 3)):
                profiles.append(_minimal_profile(cfg, _sha(seed, f"fs-{counter}"), serial, fam))
                counter += 1

    for n_fam, count in sorted(histogram.items()):
        for _ in range(count):
            width = n_fam if n_fam < 5 else rng.randint(5, 11)
            emit(_serial(rng, taken), width)
            expected[width] = expected.get(width, 0) + 1
    for key in sorted(cfg.test_key_serials):
        emit(key, rng.randint(3, 11))
    rng.shuffle(profiles)
    return profiles, expected


def gen_serial_corpus(n_samples: int, n_serials: int, seed: int = 0, label: str = "Synthetic",
                      cfg: FeatureConfig | None = None) -> list[AppProfile]:
    """``n_samples`` profiles over exactly ``n_serials`` signers with a heavy-tailed spread."""
    if n_serials < 1 or n_samples < n_serials:
        raise BadSpec("need at least one sample per serial")
    if cfg is None:
        from .features import default_config
        cfg = default_config()
    rng = random.Random(seed)
    taken: set = set()
    serials = [_serial(rng, taken) for _ in range(n_serials)]
    weights = [1.0 / (r + 1) for r in range(n_serials)]
    picks = list(range(n_serials)) + rng.choices(range(n_serials), weights, k=n_samples - n_serials)
    return [_minimal_profile(cfg, _sha(seed, f"sc-{i}"), serials[j], label) for i, j in enumerate(picks)]
