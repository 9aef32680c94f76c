"""Plain-text and tab-separated renderings of detection and grouping results."""

from __future__ import annotations

import csv
import io

from .features import BENIGN


def tsv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def confusion_table(cm) -> str:
    """Confusion matrix laid out as actual-by-predicted."""
    w = max(len(f"{v:,}") for v in (cm.tp, cm.fn, cm.fp, cm.tn)) + 8
    lines = [
        f"{'':<24}{'Predicted':^{2 * w}}",
        f"{'':<24}{'Malicious':>{w}}{'Benign':>{w}}",
        f"{'Actual  Malicious':<24}{f'{cm.tp:,} (TP)':>{w}}{f'{cm.fn:,} (FN)':>{w}}",
        f"{'        Benign':<24}{f'{cm.fp:,} (FP)':>{w}}{f'{cm.tn:,} (TN)':>{w}}",
        "",
        f"accuracy {cm.accuracy:.4f}  (n = {cm.total:,})",
    ]
    return "\n".join(lines) + "\n"


def family_table(acc: dict[str, tuple[int, float]], benign: tuple[int, float] | None = None) -> str:
    """Per-category sample counts and accuracy, malware first, then averages."""
    rows = [(fam, n, a) for fam, (n, a) in acc.items() if fam != BENIGN]
    width = max([len(r[0]) for r in rows] + [22])
    out = [f"{'Category':<{width}}  {'Samples':>8}  {'Accuracy':>8}"]
    for fam, n, a in rows:
        out.append(f"{fam:<{width}}  {n:>8,}  {a:>8.2f}")
    n_mal = sum(n for _, n, _ in rows)
    if n_mal:
        mean = sum(n * a for _, n, a in rows) / n_mal
        out.append(f"{'Average (malware)':<{width}}  {n_mal:>8,}  {mean:>8.2f}")
    if benign is not None:
        out.append(f"{'Benign application':<{width}}  {benign[0]:>8,}  {benign[1]:>8.2f}")
        total = n_mal + benign[0]
        if total:
            avg = (sum(n * a for _, n, a in rows) + benign[0] * benign[1]) / total
            out.append(f"{'Average (total)':<{width}}  {total:>8,}  {avg:>8.2f}")
    return "\n".join(out) + "\n"


def family_histogram_table(hist: dict[int, int], cap: int = 5) -> str:
    buckets: dict[int, int] = {}
    for n, c in hist.items():
        buckets[min(n, cap)] = buckets.get(min(n, cap), 0) + c
    rows = [(str(n) if n < cap else f"{cap}+", buckets.get(n, 0)) for n in range(1, cap + 1)]
    rows.append(("Total", sum(buckets.values())))
    return tsv(["families", "serials"], rows)


def cv_text(report) -> str:
    parts = ["Detection (all folds)", "", confusion_table(report.total)]
    parts.append("Per-fold accuracy: " + ", ".join(f"{f.confusion.accuracy:.4f}" for f in report.folds))
    parts.append(f"Mean accuracy: {report.mean_accuracy:.4f}")
    parts.append("Groups per fold: " + ", ".join(str(f.n_groups) for f in report.folds))
    parts.append("")
    parts.append("Classification")
    parts.append("")
    cm = report.total
    benign_n = cm.fp + cm.tn
    parts.append(family_table(report.family_accuracy(),
                              (benign_n, cm.tn / benign_n) if benign_n else None))
    return "\n".join(parts)
