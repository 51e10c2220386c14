"""Figure rendering for the report path.

The metrics library stays plot-free; this module turns its tables into PNG
files next to the delimited output: reliability diagrams, phrasing-variant
comparisons and confidence-threshold sweeps.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .calibration import ReliabilityBin


def render_reliability_diagram(
    table: Sequence[ReliabilityBin], path: str | Path, title: str = "Reliability diagram"
) -> Path:
    """Predicted confidence versus observed accuracy, with the identity diagonal."""
    occupied = [b for b in table if b.count > 0]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=1, label="perfect calibration")
    if occupied:
        xs = [b.mean_confidence for b in occupied]
        ys = [b.accuracy for b in occupied]
        sizes = [20 + 180 * b.count / max(b.count for b in occupied) for b in occupied]
        ax.scatter(xs, ys, s=sizes, color="tab:blue", alpha=0.8, zorder=3, label="bins (area ~ count)")
        ax.plot(xs, ys, color="tab:blue", linewidth=1, alpha=0.6)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("mean predicted confidence")
    ax.set_ylabel("observed accuracy")
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_variant_comparison(summaries: Mapping[str, dict], path: str | Path) -> Path:
    """Grouped bars of AUROC and ECE per phrasing variant."""
    variants = list(summaries)
    aurocs = [summaries[v].get("auroc") or 0.0 for v in variants]
    eces = [summaries[v]["ece"] for v in variants]
    positions = range(len(variants))
    width = 0.38

    fig, ax = plt.subplots(figsize=(max(5, 1.6 * len(variants)), 4))
    ax.bar([p - width / 2 for p in positions], aurocs, width, label="AUROC", color="tab:blue")
    ax.bar([p + width / 2 for p in positions], eces, width, label="ECE", color="tab:orange")
    ax.axhline(0.5, linestyle=":", color="gray", linewidth=1)
    ax.set_xticks(list(positions))
    ax.set_xticklabels(variants, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("metric value")
    ax.set_title("Judge phrasing variants: discrimination vs calibration")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_threshold_sweep(rows: Sequence[tuple[float, int, int]], path: str | Path) -> Path:
    """Surviving correct/incorrect counts as the confidence threshold rises."""
    thresholds = [r[0] for r in rows]
    passing = [r[1] for r in rows]
    failing = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(thresholds, passing, marker="o", markersize=3, label="surviving, validation pass", color="tab:green")
    ax.plot(thresholds, failing, marker="o", markersize=3, label="surviving, validation fail", color="tab:red")
    ax.set_xlabel("confidence threshold")
    ax.set_ylabel("surviving rules")
    ax.set_title("Confidence threshold as a pre-filter")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
