"""Calibration and discrimination metrics over (confidence, correctness) pairs.

ECE uses equal-width bins with right-inclusive upper edges; AUROC is the
rank statistic (midranks for ties), equal to the pairwise definition:
the probability a randomly chosen correct sample outscores an incorrect one,
ties counting one half.
"""

from __future__ import annotations

import csv
import json
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

DEFAULT_BINS = 10


class EmptyInput(ValueError):
    """Metric called on an empty sample list."""


class DegenerateLabels(ValueError):
    """AUROC needs at least one correct and one incorrect sample."""


@dataclass(frozen=True)
class ScoredOutcome:
    confidence: float
    correct: bool
    variant: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")


@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    mean_confidence: float
    accuracy: float
    count: int


def _bin_index(confidence: float, edges: Sequence[float]) -> int:
    """Right-inclusive binning: bin b covers (edges[b-1], edges[b]], bin 0 includes 0."""
    return min(bisect_left(edges, confidence), len(edges) - 1)


def _bin_edges(num_bins: int) -> list[float]:
    return [(i + 1) / num_bins for i in range(num_bins)]


def compute_ece(samples: Sequence[ScoredOutcome], num_bins: int = DEFAULT_BINS) -> float:
    """Expected calibration error; empty bins contribute nothing.

    Raises:
        EmptyInput: no samples.
    """
    if not samples:
        raise EmptyInput("ECE needs at least one sample")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    edges = _bin_edges(num_bins)
    conf_sum = [0.0] * num_bins
    hit_sum = [0] * num_bins
    count = [0] * num_bins
    for sample in samples:
        b = _bin_index(sample.confidence, edges)
        conf_sum[b] += sample.confidence
        hit_sum[b] += 1 if sample.correct else 0
        count[b] += 1
    total = len(samples)
    ece = 0.0
    for b in range(num_bins):
        if count[b]:
            accuracy = hit_sum[b] / count[b]
            mean_confidence = conf_sum[b] / count[b]
            ece += (count[b] / total) * abs(accuracy - mean_confidence)
    return ece


def compute_auroc(samples: Sequence[ScoredOutcome]) -> float:
    """Probability a random correct sample outscores a random incorrect one.

    Computed via the rank-sum statistic with midranks, which equals the
    pairwise mean of [score_correct > score_incorrect] with ties as 0.5.

    Raises:
        EmptyInput: no samples.
        DegenerateLabels: all samples share one label.
    """
    if not samples:
        raise EmptyInput("AUROC needs samples")
    n_correct = sum(1 for s in samples if s.correct)
    n_incorrect = len(samples) - n_correct
    if n_correct == 0 or n_incorrect == 0:
        raise DegenerateLabels("AUROC needs both correct and incorrect samples")

    ordered = sorted(range(len(samples)), key=lambda i: samples[i].confidence)
    ranks = [0.0] * len(samples)
    position = 0
    while position < len(ordered):
        tie_end = position
        score = samples[ordered[position]].confidence
        while tie_end + 1 < len(ordered) and samples[ordered[tie_end + 1]].confidence == score:
            tie_end += 1
        midrank = (position + 1 + tie_end + 1) / 2  # 1-based midrank, multiple of 0.5
        for k in range(position, tie_end + 1):
            ranks[ordered[k]] = midrank
        position = tie_end + 1

    rank_sum_correct = sum(ranks[i] for i, s in enumerate(samples) if s.correct)
    u_statistic = rank_sum_correct - n_correct * (n_correct + 1) / 2
    return u_statistic / (n_correct * n_incorrect)


def reliability_table(samples: Sequence[ScoredOutcome], num_bins: int = DEFAULT_BINS) -> list[ReliabilityBin]:
    """Per-bin mean confidence, accuracy and count; bins partition [0,1].

    Empty bins are kept with count 0 (mean confidence and accuracy 0.0).

    Raises:
        EmptyInput: no samples.
    """
    if not samples:
        raise EmptyInput("reliability table needs at least one sample")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    edges = _bin_edges(num_bins)
    conf_sum = [0.0] * num_bins
    hit_sum = [0] * num_bins
    count = [0] * num_bins
    for sample in samples:
        b = _bin_index(sample.confidence, edges)
        conf_sum[b] += sample.confidence
        hit_sum[b] += 1 if sample.correct else 0
        count[b] += 1
    table: list[ReliabilityBin] = []
    for b in range(num_bins):
        table.append(
            ReliabilityBin(
                lower=b / num_bins,
                upper=(b + 1) / num_bins,
                mean_confidence=conf_sum[b] / count[b] if count[b] else 0.0,
                accuracy=hit_sum[b] / count[b] if count[b] else 0.0,
                count=count[b],
            )
        )
    return table


def threshold_sweep(
    samples: Sequence[ScoredOutcome], thresholds: Sequence[float] | None = None
) -> list[tuple[float, int, int]]:
    """(threshold, surviving_correct, surviving_incorrect) rows for a sweep.

    Survivors are samples with confidence >= threshold; the incorrect-survivor
    count is monotone non-increasing as the threshold rises.
    """
    if thresholds is None:
        thresholds = [i / 20 for i in range(20)]
    rows: list[tuple[float, int, int]] = []
    for threshold in thresholds:
        surviving = [s for s in samples if s.confidence >= threshold]
        good = sum(1 for s in surviving if s.correct)
        rows.append((threshold, good, len(surviving) - good))
    return rows


# ── serialization ────────────────────────────────────────────────────────────


def load_outcomes(source: IO[str] | Iterable[str]) -> list[ScoredOutcome]:
    """ScoredOutcome JSONL: {"confidence": float, "correct": bool, "variant": str?}."""
    samples: list[ScoredOutcome] = []
    for line in source:
        if not line.strip():
            continue
        obj = json.loads(line)
        samples.append(
            ScoredOutcome(
                confidence=float(obj["confidence"]),
                correct=bool(obj["correct"]),
                variant=str(obj.get("variant", "")),
            )
        )
    return samples


def metrics_summary(samples: Sequence[ScoredOutcome], num_bins: int = DEFAULT_BINS) -> dict:
    """Metrics JSON payload: auroc (null when degenerate), ece, n, bins."""
    try:
        auroc: float | None = compute_auroc(samples)
    except DegenerateLabels:
        auroc = None
    return {
        "auroc": auroc,
        "ece": compute_ece(samples, num_bins),
        "n": len(samples),
        "num_bins": num_bins,
        "bins": [
            {
                "bin_lower": b.lower,
                "bin_upper": b.upper,
                "mean_conf": b.mean_confidence,
                "accuracy": b.accuracy,
                "count": b.count,
            }
            for b in reliability_table(samples, num_bins)
        ],
    }


def write_reliability_csv(path: str | Path, table: Sequence[ReliabilityBin]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lower", "bin_upper", "mean_conf", "accuracy", "count"])
        for b in table:
            writer.writerow([b.lower, b.upper, b.mean_confidence, b.accuracy, b.count])
