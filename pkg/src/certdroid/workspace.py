"""On-disk workspace: one directory holding every pipeline artifact.

    config.json       feature config
    profiles/         one profile document per package, named <sha256>.json
    profiles/index.txt  extraction order
    labels.tsv        sha256 <TAB> label ("benign" or a family name)
    model.json        likelihood model counts
    blacklist.txt     serial blacklist
    verdicts.jsonl    one verdict per line
    groups.json       family groups
    reports/          tables and figures

A single writer at a time is enforced with an advisory lock on ``.lock``.
"""

from __future__ import annotations

import fcntl
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

from .errors import MissingArtifact, VersionMismatch, WorkspaceLocked
from .features import FeatureConfig, default_config, extract_profile, load_config
from .ingest import PROFILE_FORMAT_VERSION, RawPackage, load_profile

VERDICT_FORMAT_VERSION = 1


def atomic_write(path: Path, text: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode("utf-8") if isinstance(text, str) else text
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Workspace:
    def __init__(self, root):
        self.root = Path(root)

    config_path = property(lambda self: self.root / "config.json")
    profiles_dir = property(lambda self: self.root / "profiles")
    index_path = property(lambda self: self.root / "profiles" / "index.txt")
    labels_path = property(lambda self: self.root / "labels.tsv")
    model_path = property(lambda self: self.root / "model.json")
    blacklist_path = property(lambda self: self.root / "blacklist.txt")
    verdicts_path = property(lambda self: self.root / "verdicts.jsonl")
    groups_path = property(lambda self: self.root / "groups.json")
    reports_dir = property(lambda self: self.root / "reports")

    @contextmanager
    def lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        fh = open(self.root / ".lock", "a+")
        try:
            try:
                fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except BlockingIOError:
                raise WorkspaceLocked(f"another writer holds {self.root / '.lock'}") from None
            yield self
        finally:
            fh.close()

    def require(self, path: Path) -> Path:
        if not path.exists():
            raise MissingArtifact(path)
        return path

    # config

    def config(self, override: str | None = None) -> FeatureConfig:
        if override:
            return load_config(Path(override).read_text(encoding="utf-8"))
        if self.config_path.exists():
            return load_config(self.config_path.read_text(encoding="utf-8"))
        return default_config()

    # profiles

    def profile_order(self) -> list[str]:
        if self.index_path.exists():
            return [l.strip() for l in self.index_path.read_text().splitlines() if l.strip()]
        if self.profiles_dir.exists():
            return sorted(p.stem for p in self.profiles_dir.glob("*.json"))
        return []

    def read_raw(self, sha256: str) -> RawPackage:
        path = self.require(self.profiles_dir / f"{sha256}.json")
        text = path.read_text(encoding="utf-8")
        version = json.loads(text).get("format_version", PROFILE_FORMAT_VERSION)
        if version != PROFILE_FORMAT_VERSION:
            raise VersionMismatch(f"{path}: profile format_version {version}")
        return load_profile(text)

    def labels(self) -> dict[str, str]:
        from .evalkit import read_labels
        return read_labels(self.labels_path) if self.labels_path.exists() else {}

    def profiles(self, cfg: FeatureConfig, labeled_only: bool = False):
        labels = self.labels()
        out = []
        for sha in self.profile_order():
            label = labels.get(sha)
            if labeled_only and label is None:
                continue
            out.append(extract_profile(self.read_raw(sha), cfg, label))
        return out

    # verdicts

    def read_verdicts(self) -> list[dict]:
        path = self.require(self.verdicts_path)
        records = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("format_version", VERDICT_FORMAT_VERSION) != VERDICT_FORMAT_VERSION:
                raise VersionMismatch(f"verdict format_version {rec.get('format_version')}")
            records.append(rec)
        return records
