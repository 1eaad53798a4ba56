"""Change-class evaluation metrics accumulated over a dataset."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .grids import InvalidInputError

METRIC_KEYS = ("precision", "recall", "f1", "iou", "oa")


@dataclass
class ConfusionCounts:
    """Pixel counts with the change class as positive."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def merge(self, other: "ConfusionCounts") -> "ConfusionCounts":
        """Parallel-reduction primitive: combine two independent accumulators."""
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )


def binarize(p: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold a probability map; ties (p == threshold) count as change."""
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError(f"threshold must lie in (0, 1), got {threshold}")
    return (np.asarray(p) >= threshold).astype(np.uint8)


def accumulate(pred: np.ndarray, gt: np.ndarray, counts: ConfusionCounts) -> ConfusionCounts:
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    counts.tp += int(np.count_nonzero(pred & gt))
    counts.fp += int(np.count_nonzero(pred & ~gt))
    counts.fn += int(np.count_nonzero(~pred & gt))
    counts.tn += int(np.count_nonzero(~pred & ~gt))
    return counts


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def compute(counts: ConfusionCounts) -> Dict[str, float]:
    """Precision, recall, F1, IoU and overall accuracy; 0/0 cases evaluate to 0."""
    if counts.total == 0:
        raise InvalidInputError("cannot compute metrics from all-zero counts")
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    iou = _ratio(counts.tp, counts.tp + counts.fp + counts.fn)
    oa = _ratio(counts.tp + counts.tn, counts.total)
    return {"precision": precision, "recall": recall, "f1": f1, "iou": iou, "oa": oa}


def degenerate(counts: ConfusionCounts) -> bool:
    """True when any metric took the 0/0 -> 0 convention (no positives anywhere)."""
    return counts.tp == 0 and (counts.fp == 0 or counts.fn == 0)


def to_kv_lines(record: Dict[str, float]) -> str:
    """Serialize a metrics record as one key=value pair per line."""
    return "\n".join(f"{key}={record[key]:.6f}" for key in record)
