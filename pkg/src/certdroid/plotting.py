"""Matplotlib figures for scan and evaluation reports.

Everything renders through the Agg backend to files; nothing opens a window.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "legend.fontsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

GOLDEN = (math.sqrt(5) - 1.0) / 2.0


def new_figure(width=6.4, height=None):
    plt.rcParams.update(_STYLE)
    if height is None:
        height = width * GOLDEN
    return plt.subplots(figsize=(width, height))


def save(fig, path):
    # No timestamps in the file, so identical inputs give identical bytes.
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)


def serial_frequency(freq_by_corpus: dict[str, dict[int, int]], path):
    """Serials vs. number of apps each signs, one series per corpus, log-log."""
    fig, ax = new_figure()
    markers = "os^dv"
    for i, (name, freq) in enumerate(sorted(freq_by_corpus.items())):
        if not freq:
            continue
        xs = sorted(freq)
        ax.plot(xs, [freq[x] for x in xs], marker=markers[i % len(markers)], linestyle="-",
                markersize=4, label=name)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("applications signed per serial")
    ax.set_ylabel("number of serials")
    ax.set_title("Signing-serial frequency")
    if freq_by_corpus:
        ax.legend(frameon=False)
    save(fig, path)


def family_histogram(hist: dict[int, int], path, cap: int = 5):
    """Bar chart of serial counts by number of malware families (last bar is ``cap``+)."""
    buckets: dict[int, int] = {}
    for n, count in hist.items():
        buckets[min(n, cap)] = buckets.get(min(n, cap), 0) + count
    xs = list(range(1, cap + 1))
    fig, ax = new_figure()
    bars = ax.bar([str(x) if x < cap else f"{cap}+" for x in xs], [buckets.get(x, 0) for x in xs],
                  color="0.35")
    ax.bar_label(bars, fontsize=8)
    ax.set_xlabel("malware families per serial")
    ax.set_ylabel("number of serials")
    ax.set_title("Serials by family count (test keys excluded)")
    save(fig, path)


def confusion_matrix(cm, path):
    values = [[cm.tp, cm.fn], [cm.fp, cm.tn]]
    fig, ax = new_figure(4.2, 3.6)
    ax.imshow(values, cmap="Greys", vmin=0, vmax=max(1, cm.total))
    labels = [["TP", "FN"], ["FP", "TN"]]
    for i in range(2):
        for j in range(2):
            dark = values[i][j] > cm.total / 2
            ax.text(j, i, f"{values[i][j]:,}\n({labels[i][j]})", ha="center", va="center",
                    color="white" if dark else "black")
    ax.set_xticks([0, 1], ["malicious", "benign"])
    ax.set_yticks([0, 1], ["malicious", "benign"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    ax.set_title(f"Detection (accuracy {cm.accuracy:.3f})")
    save(fig, path)


def family_accuracy(acc: dict[str, tuple[int, float]], path):
    names = list(acc)
    fig, ax = new_figure(6.4, max(2.5, 0.28 * len(names) + 1))
    ax.barh(names, [acc[n][1] for n in names], color="0.45")
    for y, n in enumerate(names):
        ax.text(min(acc[n][1], 1.0) + 0.01, y, f"{acc[n][1]:.2f} (n={acc[n][0]})",
                va="center", fontsize=8)
    ax.set_xlim(0, 1.25)
    ax.invert_yaxis()
    ax.set_xlabel("classification accuracy")
    ax.set_title("Per-family grouping accuracy")
    save(fig, path)


def likelihood_distribution(log_lambdas: dict[str, list[float]], path, threshold: float = 1.0):
    """Histogram of log-likelihood ratios per class, with the decision threshold marked."""
    fig, ax = new_figure()
    finite = [v for vals in log_lambdas.values() for v in vals if math.isfinite(v)]
    if finite:
        lo, hi = min(finite), max(finite)
        if lo == hi:
            lo, hi = lo - 1, hi + 1
        bins = [lo + (hi - lo) * i / 30 for i in range(31)]
        for name in sorted(log_lambdas):
            ax.hist(log_lambdas[name], bins=bins, alpha=0.55, label=name)
    ax.axvline(math.log(threshold), color="black", linestyle="--", linewidth=1, label="log T_L")
    ax.set_xlabel("log likelihood ratio (requested permissions)")
    ax.set_ylabel("applications")
    ax.legend(frameon=False)
    save(fig, path)


def group_sizes(sizes: list[int], path):
    fig, ax = new_figure()
    ax.bar(range(1, len(sizes) + 1), sizes, color="0.4")
    ax.set_xlabel("group id")
    ax.set_ylabel("members")
    ax.set_title(f"{len(sizes)} groups")
    save(fig, path)
