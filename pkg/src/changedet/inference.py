"""Evaluation over sample sets and prediction export to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
from PIL import Image

from .data import SamplePair, to_batch
from .grids import InvalidInputError
from .metrics import ConfusionCounts, accumulate, binarize, compute
from .model import ChangeDetectionNet


@torch.no_grad()
def predict_probabilities(model: ChangeDetectionNet, samples: Sequence[SamplePair],
                          batch_size: int = 6) -> List[np.ndarray]:
    """Fused-head change probabilities per sample, eval-mode normalisation."""
    was_training = model.training
    model.eval()
    maps: List[np.ndarray] = []
    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        a, b, _ = to_batch(batch)
        probs = model(a, b).probabilities().squeeze(1).cpu().numpy()
        maps.extend(np.asarray(p, dtype=np.float64) for p in probs)
    if was_training:
        model.train()
    return maps


def evaluate_samples(model: ChangeDetectionNet, samples: Sequence[SamplePair],
                     threshold: float = 0.5, batch_size: int = 6,
                     macro: bool = False) -> Tuple[Dict[str, float], ConfusionCounts]:
    """Metrics over a sample set: binarise each tile and accumulate counts.

    Micro-averaged by default (counts pooled before computing); macro=True
    averages per-tile metrics instead.
    """
    if not samples:
        raise InvalidInputError("cannot evaluate an empty sample set")
    counts = ConfusionCounts()
    per_tile = []
    probs = predict_probabilities(model, samples, batch_size=batch_size)
    for pair, prob in zip(samples, probs):
        tile_counts = accumulate(binarize(prob, threshold), pair.mask, ConfusionCounts())
        if macro:
            per_tile.append(compute(tile_counts))
        counts = counts.merge(tile_counts)
    if macro:
        averaged = {key: float(np.mean([m[key] for m in per_tile])) for key in per_tile[0]}
        return averaged, counts
    return compute(counts), counts


def mask_contour(mask: np.ndarray) -> np.ndarray:
    """Change pixels with at least one non-change 4-neighbour (the outline)."""
    m = mask.astype(bool)
    interior = np.zeros_like(m)
    interior[1:-1, 1:-1] = (
        m[1:-1, 1:-1] & m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    )
    return m & ~interior


def predict_files(model: ChangeDetectionNet, path_a: str | Path, path_b: str | Path,
                  out_dir: str | Path, threshold: float = 0.5) -> Dict[str, Path]:
    """Run one pair and write probability (16-bit), mask (0/255) and overlay rasters."""
    img_a = np.asarray(Image.open(path_a).convert("RGB"), dtype=np.uint8)
    img_b = np.asarray(Image.open(path_b).convert("RGB"), dtype=np.uint8)
    if img_a.shape != img_b.shape:
        raise InvalidInputError(
            f"input pair dimension mismatch: {img_a.shape} vs {img_b.shape}"
        )
    pair = SamplePair(img_a, img_b, np.zeros(img_a.shape[:2], dtype=np.uint8), "predict")
    prob = predict_probabilities(model, [pair], batch_size=1)[0]
    mask = binarize(prob, threshold)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "probability": out / "probability.png",
        "mask": out / "mask.png",
        "overlay": out / "overlay.png",
    }
    prob16 = np.round(prob * 65535.0).astype(np.uint16)
    Image.fromarray(prob16).save(paths["probability"])
    Image.fromarray((mask * 255).astype(np.uint8)).save(paths["mask"])
    overlay = img_b.copy()
    overlay[mask_contour(mask)] = (255, 0, 0)
    Image.fromarray(overlay).save(paths["overlay"])
    return paths
