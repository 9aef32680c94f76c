"""certdroid command line.

Exit status: 0 success, 1 per-item failures, 2 usage errors or missing/incompatible artifacts.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import blacklist as bl_mod
from . import plotting, reports
from .classifier import GroupSet, classify_stream, group_accuracy
from .detector import DetectorParams, detect_batch
from .errors import CertdroidError, IngestError
from .evalkit import (
    ConfusionMatrix,
    LabeledCorpus,
    SyntheticSpec,
    gen_synthetic_corpus,
    read_labels,
    run_cv,
    write_labels,
)
from .features import BENIGN, dump_config, extract_profile
from .ingest import dump_profile, load_any
from .likelihood import LikelihoodModel, train
from .workspace import VERDICT_FORMAT_VERSION, Workspace, atomic_write

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


def _weights(text: str):
    try:
        parts = [float(Fraction(p.strip())) for p in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad weights {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("need three comma-separated weights")
    return tuple(parts)


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _built_at() -> str:
    # Reproducible unless the caller opts in to a timestamp.
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return ""
    return datetime.fromtimestamp(int(epoch), timezone.utc).isoformat()


def _params(args) -> DetectorParams:
    return DetectorParams(T_L=args.threshold_TL, short_circuit=not args.no_short_circuit)


def _labels_of(profiles):
    return {p.sha256: p.label for p in profiles if p.label is not None}


# -- commands -----------------------------------------------------------------

def cmd_extract(args, ws: Workspace) -> int:
    cfg = ws.config(args.config)
    inputs: list[Path] = []
    for name in args.inputs:
        p = Path(name)
        if p.is_dir():
            inputs.extend(sorted(q for q in p.rglob("*") if q.suffix.lower() in (".apk", ".json")))
        else:
            inputs.append(p)
    if not inputs and not args.labels:
        return EXIT_OK

    labels = read_labels(args.labels) if args.labels else {}
    failures = 0
    order = ws.profile_order()
    seen = set(order)
    with ws.lock():
        if args.config or not ws.config_path.exists():
            atomic_write(ws.config_path, dump_config(cfg))
        for path in inputs:
            try:
                raw = load_any(path.read_bytes())
            except (IngestError, OSError) as exc:
                failures += 1
                print(f"error\t{path}\t{exc}")
                continue
            atomic_write(ws.profiles_dir / f"{raw.sha256}.json", dump_profile(raw))
            if raw.sha256 not in seen:
                seen.add(raw.sha256)
                order.append(raw.sha256)
            print(f"ok\t{raw.sha256}\t{path}")
        if inputs:
            atomic_write(ws.index_path, "".join(f"{s}\n" for s in order))
        if labels:
            merged = ws.labels()
            merged.update(labels)
            write_labels(ws.labels_path, dict(sorted(merged.items())))
    return EXIT_PARTIAL if inputs and failures == len(inputs) else EXIT_OK


def cmd_train(args, ws: Workspace) -> int:
    cfg = ws.config(args.config)
    profiles = ws.profiles(cfg, labeled_only=True)
    model = train(profiles, cfg)
    with ws.lock():
        atomic_write(ws.model_path, model.dumps())
    req = model.channel("requested")
    print(f"trained on {req.n_benign} benign / {req.n_malicious} malicious -> {ws.model_path}")
    return EXIT_OK


def cmd_blacklist(args, ws: Workspace) -> int:
    cfg = ws.config(args.config)
    malicious = [p for p in ws.profiles(cfg, labeled_only=True) if p.is_malicious]
    bl = bl_mod.build_blacklist(malicious, cfg, built_at=_built_at())
    with ws.lock():
        atomic_write(ws.blacklist_path, bl_mod.dumps(bl))
    print(f"{len(bl)} serials blacklisted "
          f"({len(bl.excluded_test_keys)} test keys excluded) -> {ws.blacklist_path}")
    return EXIT_OK


def cmd_scan(args, ws: Workspace) -> int:
    cfg = ws.config(args.config)
    model = LikelihoodModel.loads(ws.require(ws.model_path).read_text(encoding="utf-8"))
    bl = bl_mod.loads(ws.require(ws.blacklist_path).read_text(encoding="utf-8"))
    params = _params(args)
    profiles = ws.profiles(cfg)
    results = detect_batch(profiles, bl, model, params, workers=args.jobs)

    lines, errors = [], 0
    labels = _labels_of(profiles)
    cm = ConfusionMatrix()
    n_mal = 0
    for sha, v in results:
        if isinstance(v, Exception):
            errors += 1
            print(f"error\t{sha}\t{v}", file=sys.stderr)
            continue
        rec = v.to_record(sha)
        rec["format_version"] = VERDICT_FORMAT_VERSION
        lines.append(json.dumps(rec))
        n_mal += v.malicious
        if sha in labels:
            cm.add(labels[sha] != BENIGN, v.malicious)
    with ws.lock():
        atomic_write(ws.verdicts_path, "".join(l + "\n" for l in lines))
        if cm.total:
            atomic_write(ws.reports_dir / "scan_confusion.json",
                         json.dumps(cm.to_dict(), indent=1) + "\n")
    print(f"scanned {len(lines)}: {n_mal} malicious, {len(lines) - n_mal} benign"
          + (f", {errors} errors" if errors else ""))
    if cm.total:
        print(reports.confusion_table(cm), end="")
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_classify(args, ws: Workspace) -> int:
    cfg = ws.config(args.config)
    records = ws.read_verdicts()
    flagged = [r["sha256"] for r in records if r["decision"] == "malicious"]
    if args.order == "sha256":
        flagged.sort()
    labels = ws.labels()
    profiles = [extract_profile(ws.read_raw(sha), cfg, labels.get(sha)) for sha in flagged]
    gs = classify_stream(profiles, args.threshold_TS, args.weights, cfg)
    with ws.lock():
        atomic_write(ws.groups_path, gs.dumps())
        if flagged and all(s in labels for s in flagged):
            acc = group_accuracy(gs, {s: labels[s] for s in flagged})
            rows = [(f, a.samples, a.correct, f"{a.accuracy:.4f}") for f, a in acc.per_family.items()]
            atomic_write(ws.reports_dir / "classify_accuracy.tsv",
                         reports.tsv(["category", "samples", "correct", "accuracy"], rows))
    print(f"{len(flagged)} malicious samples -> {len(gs.groups)} groups (T_S={args.threshold_TS})")
    for g in gs.groups:
        print(f"group {g.id}\t{len(g.members)}\t{g.signature.source_sha256}")
    return EXIT_OK


def cmd_eval(args, ws: Workspace) -> int:
    cfg = ws.config(args.config)
    corpus = LabeledCorpus(ws.profiles(cfg, labeled_only=True))
    report = run_cv(corpus, cfg, _params(args), k=args.folds, seed=args.seed,
                    T_S=args.threshold_TS, weights=args.weights)
    text = reports.cv_text(report)
    with ws.lock():
        out = ws.reports_dir
        atomic_write(out / "cv_report.json", json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
        atomic_write(out / "cv_report.txt", text)
        cm = report.total
        atomic_write(out / "cv_confusion.tsv",
                     reports.tsv(["actual", "predicted_malicious", "predicted_benign"],
                                 [("malicious", cm.tp, cm.fn), ("benign", cm.fp, cm.tn)]))
        fam = report.family_accuracy()
        atomic_write(out / "cv_family_accuracy.tsv",
                     reports.tsv(["category", "samples", "accuracy"],
                                 [(f, n, f"{a:.4f}") for f, (n, a) in fam.items()]))
        plotting.confusion_matrix(cm, out / "cv_confusion.png")
        plotting.family_accuracy(fam, out / "cv_family_accuracy.png")
    print(text, end="")
    return EXIT_OK


def cmd_report(args, ws: Workspace) -> int:
    cfg = ws.config(args.config)
    profiles = ws.profiles(cfg)
    out = ws.reports_dir
    written = []

    def emit(name, content):
        atomic_write(out / name, content)
        written.append(name)

    with ws.lock():
        out.mkdir(parents=True, exist_ok=True)
        by_class = {"benign": [p for p in profiles if p.label == BENIGN],
                    "malware": [p for p in profiles if p.is_malicious]}
        freq = {}
        rows = []
        for name, group in by_class.items():
            if group:
                st = bl_mod.serial_stats(group)
                freq[name] = st.frequency
                rows += [(name, k, v) for k, v in st.frequency.items()]
                rows.append((name, "mean", f"{st.mean_apps_per_serial:.4f}"))
        if freq:
            emit("serial_frequency.tsv", reports.tsv(["corpus", "apps_signed", "serials"], rows))
            plotting.serial_frequency(freq, out / "serial_frequency.png")
            written.append("serial_frequency.png")
        if by_class["malware"]:
            hist = bl_mod.family_histogram(by_class["malware"], cfg.test_key_serials)
            emit("family_histogram.tsv", reports.family_histogram_table(hist))
            plotting.family_histogram(hist, out / "family_histogram.png")
            written.append("family_histogram.png")
        if ws.verdicts_path.exists():
            labels = _labels_of(profiles)
            records = ws.read_verdicts()
            logs: dict[str, list[float]] = {}
            cm = ConfusionMatrix()
            for r in records:
                lab = labels.get(r["sha256"])
                cls = "unlabeled" if lab is None else ("benign" if lab == BENIGN else "malware")
                lam = r["lambda_requested"]
                logs.setdefault(cls, []).append(math.log(lam) if lam > 0 else -math.inf)
                if lab is not None:
                    cm.add(lab != BENIGN, r["decision"] == "malicious")
            plotting.likelihood_distribution(logs, out / "likelihood.png")
            written.append("likelihood.png")
            if cm.total:
                emit("confusion.tsv", reports.tsv(["actual", "predicted_malicious", "predicted_benign"],
                                                  [("malicious", cm.tp, cm.fn), ("benign", cm.fp, cm.tn)]))
                plotting.confusion_matrix(cm, out / "confusion.png")
                written.append("confusion.png")
        if ws.groups_path.exists():
            gs = GroupSet.loads(ws.groups_path.read_text(encoding="utf-8"))
            emit("groups.tsv", reports.tsv(["group", "members", "founder"],
                                           [(g.id, len(g.members), g.signature.source_sha256)
                                            for g in gs.groups]))
            plotting.group_sizes([len(g.members) for g in gs.groups], out / "group_sizes.png")
            written.append("group_sizes.png")
    for name in written:
        print(out / name)
    return EXIT_OK


def cmd_synth(args, ws: Workspace) -> int:
    spec = SyntheticSpec(n_families=args.families, samples_per_family=args.per_family,
                         n_benign=args.benign, separable=not args.overlapping,
                         usage_rates=args.usage_rates)
    corpus = gen_synthetic_corpus(spec, args.seed, ws.config(args.config))
    corpus.write(args.out)
    print(f"{len(corpus.raws)} profiles -> {args.out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workspace", "-w", default=".", help="workspace directory (default: .)")
    common.add_argument("--config", help="feature config JSON (default: workspace or shipped config)")
    common.add_argument("--threshold-TL", dest="threshold_TL", type=_positive, default=1.0)
    common.add_argument("--threshold-TS", dest="threshold_TS", type=float, default=0.7)
    common.add_argument("--weights", type=_weights, default=(1 / 3, 1 / 3, 1 / 3),
                        help="API,command,permission weights (default 1/3,1/3,1/3)")
    common.add_argument("--order", choices=("input", "sha256"), default="input")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--no-short-circuit", action="store_true")
    common.add_argument("--folds", type=int, default=5)
    common.add_argument("--jobs", type=int, default=4)

    parser = argparse.ArgumentParser(prog="certdroid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="parse APKs / profile documents into the workspace")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--labels", help="labels file (sha256<TAB>label) to merge into the workspace")
    p.set_defaults(func=cmd_extract)

    for name, func, text in (
        ("train", cmd_train, "train the permission likelihood model"),
        ("blacklist", cmd_blacklist, "build the serial blacklist"),
        ("scan", cmd_scan, "run the detector over every profile"),
        ("classify", cmd_classify, "group detected malware into families"),
        ("eval", cmd_eval, "k-fold cross-validation"),
        ("report", cmd_report, "write tables and figures"),
    ):
        sub.add_parser(name, parents=[common], help=text).set_defaults(func=func)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic labelled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--families", type=int, default=5)
    p.add_argument("--per-family", type=int, default=80)
    p.add_argument("--benign", type=int, default=200)
    p.add_argument("--usage-rates", action="store_true", help="draw requested permissions at the reference usage rates")
    p.add_argument("--overlapping", action="store_true", help="let family features overlap")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ws = Workspace(args.workspace)
    try:
        return args.func(args, ws)
    except (CertdroidError, ValueError, OSError) as exc:
        print(f"certdroid {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
