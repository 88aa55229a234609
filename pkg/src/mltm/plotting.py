"""Figures written next to the tabular reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .corpus import DatasetStats  # noqa: E402
from .evaluate import EvalReport  # noqa: E402


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    # Fixed metadata keeps repeated runs byte-stable.
    fig.savefig(path, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_label_frequencies(stats: DatasetStats, out_dir) -> Path:
    """Number of labels per training-document frequency, log-log."""
    freqs = np.array(sorted(stats.label_freq_histogram))
    counts = np.array([stats.label_freq_histogram[f] for f in freqs])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    keep = freqs > 0
    ax.loglog(freqs[keep], counts[keep], "o", ms=4)
    ax.set_xlabel("documents per label")
    ax.set_ylabel("number of labels")
    ax.set_title(f"label frequencies (D={stats.D}, C={stats.C})")
    fig.tight_layout()
    return _save(fig, Path(out_dir) / "label_frequencies.png")


def plot_eval(report: EvalReport, out_dir) -> list[Path]:
    """Per-item AUC-ROC histogram and F1 by cutoff for one pivot."""
    out = Path(out_dir)
    auc = np.array([m.auc_roc for m in report.per_item.values()])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(auc, bins=np.linspace(0, 1, 21), color="tab:blue", edgecolor="white")
    ax.axvline(report.macro["auc_roc"], color="k", ls="--", lw=1)
    ax.set_xlabel("AUC-ROC")
    ax.set_ylabel(f"{report.pivot}s")
    ax.set_title(f"{report.pivot}-pivoted AUC-ROC (n={report.n_evaluated})")
    fig.tight_layout()
    paths = [_save(fig, out / f"{report.pivot}_auc_roc.png")]

    if report.f1:
        names = list(report.f1)
        micro = [report.f1[c][0] for c in names]
        macro = [report.f1[c][1] for c in names]
        x = np.arange(len(names))
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.bar(x - 0.2, micro, 0.4, label="micro")
        ax.bar(x + 0.2, macro, 0.4, label="macro")
        ax.set_xticks(x, names)
        ax.set_ylim(0, 1)
        ax.set_ylabel("F1")
        ax.legend()
        ax.set_title(f"{report.pivot}-pivoted F1 by cutoff")
        fig.tight_layout()
        paths.append(_save(fig, out / f"{report.pivot}_f1.png"))
    return paths
