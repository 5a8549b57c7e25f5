"""Figures rendered next to the CSV reports (PNG, Agg backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no version string or timestamp in the file, so reruns are byte-identical
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def _bins():
    return np.linspace(0.0, 1.0, 21)


def similarity_histograms(geo: Sequence[float], sem: Sequence[float], path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2), sharey=True)
    for ax, values, title in zip(axes, (geo, sem), ("geographic similarity", "semantic similarity")):
        ax.hist(values, bins=_bins(), color="0.4")
        ax.set_xlabel(title)
    axes[0].set_ylabel("user pairs")
    return _save(fig, path)


def histogram(values: Sequence[float], path, xlabel: str, bins=None) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.hist(values, bins=_bins() if bins is None else bins, color="0.4")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    return _save(fig, path)


def qq_plot(qa: Sequence[float], qb: Sequence[float], path, xlabel="real", ylabel="fake") -> Path:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(qa, qb, "o", ms=3, color="0.2")
    lo = float(min(np.min(qa), np.min(qb)))
    hi = float(max(np.max(qa), np.max(qb)))
    ax.plot([lo, hi], [lo, hi], "--", color="0.6", lw=1)
    ax.set_xlabel(f"{xlabel} quantiles")
    ax.set_ylabel(f"{ylabel} quantiles")
    return _save(fig, path)


def privacy_tradeoff(summary: Sequence[Mapping], path) -> Path:
    """Median privacy against diversity and semantic overhead, one line per method."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
    methods = list(dict.fromkeys(r["method"] for r in summary))
    markers = "osd^v<>"
    for i, m in enumerate(methods):
        rows = sorted((r for r in summary if r["method"] == m), key=lambda r: r["num_fakes"])
        y = [r["median_privacy"] for r in rows]
        for ax, key in zip(axes, ("mean_diversity_overhead", "mean_semantic_overhead")):
            ax.plot([r[key] for r in rows], y, marker=markers[i % len(markers)], label=m)
    axes[0].set_xlabel("diversity overhead")
    axes[1].set_xlabel("semantic overhead")
    axes[0].set_ylabel("privacy (attack error)")
    axes[0].set_ylim(-0.02, 1.02)
    axes[1].legend(fontsize=8)
    return _save(fig, path)
