"""Dataset ingestion, tiling, augmentation and synthetic change-pair generation.

On-disk layout: <root>/<split>/{A,B,label}/<name>.png with filename-matched
triples; labels are 8-bit with values {0, 255} (or already {0, 1}).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import torch
from PIL import Image

from .grids import InvalidInputError

NOISE_SIGMA = 0.02  # fraction of the 8-bit dynamic range
MIN_CHANGE_FRACTION = 0.01
MAX_CHANGE_FRACTION = 0.5


class IngestionError(ValueError):
    """Raised when the on-disk dataset layout or contents are invalid."""


@dataclass
class SamplePair:
    """A dual-phase RGB pair and its binary change mask."""

    image_a: np.ndarray  # (H, W, 3) uint8
    image_b: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray     # (H, W) uint8 in {0, 1}
    id: str

    def validate(self) -> "SamplePair":
        if self.image_a.shape != self.image_b.shape:
            raise InvalidInputError(f"{self.id}: image dims differ")
        if self.image_a.shape[:2] != self.mask.shape:
            raise InvalidInputError(f"{self.id}: mask dims differ from images")
        values = np.unique(self.mask)
        if not np.isin(values, (0, 1)).all():
            raise InvalidInputError(f"{self.id}: mask is not binary, values {values}")
        return self


@dataclass
class SampleLocator:
    id: str
    path_a: Path
    path_b: Path
    path_label: Path


@dataclass
class DatasetManifest:
    root: Path
    split: str
    entries: List[SampleLocator]
    tile_size: int = 256
    seed: int = 0

    def __len__(self) -> int:
        return len(self.entries)


def _read_rgb(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def _read_label(path: Path, sample_id: str) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    values = set(np.unique(arr).tolist())
    if values <= {0, 255}:
        return (arr == 255).astype(np.uint8)
    if values <= {0, 1}:
        return arr.astype(np.uint8)
    raise IngestionError(
        f"label for '{sample_id}' is not binary: found values {sorted(values)[:8]}"
    )


def load_manifest(root: str | os.PathLike, split: str, validate_labels: bool = True) -> DatasetManifest:
    """Index filename-matched A/B/label triples, sorted by name for determinism."""
    base = Path(root) / split
    dirs = {name: base / name for name in ("A", "B", "label")}
    for name, d in dirs.items():
        if not d.is_dir():
            raise IngestionError(f"missing directory {d}")
    stems = {name: {p.stem: p for p in sorted(d.iterdir()) if p.is_file()}
             for name, d in dirs.items()}
    for name, files in stems.items():
        seen = [p.stem for p in sorted(dirs[name].iterdir()) if p.is_file()]
        if len(seen) != len(set(seen)):
            dupes = sorted({s for s in seen if seen.count(s) > 1})
            raise IngestionError(f"duplicate ids in {name}/: {dupes}")
    all_ids = sorted(set().union(*(files.keys() for files in stems.values())))
    entries = []
    for sample_id in all_ids:
        missing = [name for name in ("A", "B", "label") if sample_id not in stems[name]]
        if missing:
            raise IngestionError(f"sample '{sample_id}' missing from {missing}")
        entries.append(SampleLocator(
            id=sample_id,
            path_a=stems["A"][sample_id],
            path_b=stems["B"][sample_id],
            path_label=stems["label"][sample_id],
        ))
    if validate_labels:
        for entry in entries:
            _read_label(entry.path_label, entry.id)
    return DatasetManifest(root=Path(root), split=split, entries=entries)


def load_sample(locator: SampleLocator) -> SamplePair:
    return SamplePair(
        image_a=_read_rgb(locator.path_a),
        image_b=_read_rgb(locator.path_b),
        mask=_read_label(locator.path_label, locator.id),
        id=locator.id,
    ).validate()


def load_all(manifest: DatasetManifest) -> List[SamplePair]:
    return [load_sample(entry) for entry in manifest.entries]


def tile(pair: SamplePair, size: int = 256) -> List[SamplePair]:
    """Non-overlapping grid tiles; right/bottom remainders are discarded."""
    h, w = pair.mask.shape
    if size > h or size > w:
        raise InvalidInputError(f"{pair.id}: tile size {size} exceeds image dims {(h, w)}")
    tiles = []
    for row, y in enumerate(range(0, h - size + 1, size)):
        for col, x in enumerate(range(0, w - size + 1, size)):
            tiles.append(SamplePair(
                image_a=pair.image_a[y:y + size, x:x + size].copy(),
                image_b=pair.image_b[y:y + size, x:x + size].copy(),
                mask=pair.mask[y:y + size, x:x + size].copy(),
                id=f"{pair.id}_y{row}_x{col}",
            ))
    return tiles


def augment(pair: SamplePair, seed: int | Sequence[int]) -> SamplePair:
    """One seeded draw from {rot90 k in 0..3} x {identity, horizontal flip},
    applied identically to both images and the mask."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, 4))
    flip = bool(rng.integers(0, 2))

    def apply(arr: np.ndarray) -> np.ndarray:
        out = np.rot90(arr, k, axes=(0, 1))
        if flip:
            out = out[:, ::-1]
        return np.ascontiguousarray(out)

    return SamplePair(apply(pair.image_a), apply(pair.image_b), apply(pair.mask), pair.id)


def resize_pair(pair: SamplePair, target: int) -> SamplePair:
    """Bilinear for the images, nearest-neighbour for the mask (stays binary)."""
    if target < 32:
        raise InvalidInputError(f"resize target must be >= 32, got {target}")
    if pair.mask.shape == (target, target):
        return pair

    def bilinear(arr: np.ndarray) -> np.ndarray:
        return np.asarray(Image.fromarray(arr).resize((target, target), Image.BILINEAR))

    mask = np.asarray(Image.fromarray(pair.mask).resize((target, target), Image.NEAREST))
    return SamplePair(bilinear(pair.image_a), bilinear(pair.image_b), mask, pair.id)


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Textured backdrop: oriented gradients plus band-limited noise, mid-toned."""
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    img = np.zeros((size, size, 3), dtype=np.float64)
    for c in range(3):
        gy, gx = rng.uniform(-60, 60, size=2)
        base = rng.uniform(90, 160)
        coarse = rng.normal(0, 25, size=(size // 8 + 1, size // 8 + 1))
        coarse = np.asarray(Image.fromarray(coarse).resize((size, size), Image.BILINEAR))
        img[..., c] = base + gy * yy + gx * xx + coarse
    return np.clip(img, 30, 225).astype(np.uint8)


def _draw_shape(rng: np.random.Generator, canvas: np.ndarray) -> None:
    """Burn one random rectangle or ellipse with a colour far from the local mean."""
    size = canvas.shape[0]
    half = int(rng.integers(max(3, size // 16), max(4, size // 5)))
    cy = int(rng.integers(half, size - half))
    cx = int(rng.integers(half, size - half))
    ry = max(2, int(rng.integers(half // 2, half + 1)))
    rx = max(2, int(rng.integers(half // 2, half + 1)))
    yy, xx = np.ogrid[:size, :size]
    if rng.integers(0, 2) == 0:
        region = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    else:
        region = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    local_mean = canvas[region].reshape(-1, 3).mean(axis=0)
    for _ in range(32):
        color = rng.integers(0, 256, size=3)
        if np.abs(color - local_mean).max() >= 60:
            break
    canvas[region] = color.astype(np.uint8)


def synth_generate(seed: int, n: int, size: int) -> List[SamplePair]:
    """Seeded synthetic change pairs: shared textured background, 1-5 shapes
    inserted into or removed from phase B, masks exact to the pre-noise pixel
    difference, then independent low-amplitude noise on both phases."""
    if n < 1:
        raise InvalidInputError(f"need n >= 1 samples, got {n}")
    if size < 32:
        raise InvalidInputError(f"need size >= 32, got {size}")
    samples = []
    for i in range(n):
        for attempt in range(64):
            rng = np.random.default_rng([seed, i, attempt])
            background = _background(rng, size)
            img_a = background.copy()
            img_b = background.copy()
            for _ in range(int(rng.integers(1, 6))):
                target = img_a if rng.integers(0, 2) == 0 else img_b
                _draw_shape(rng, target)
            mask = (img_a.astype(np.int16) != img_b.astype(np.int16)).any(axis=2)
            fraction = mask.mean()
            if MIN_CHANGE_FRACTION <= fraction <= MAX_CHANGE_FRACTION:
                break
        else:
            raise RuntimeError(f"could not sample a valid change fraction for sample {i}")
        sigma = NOISE_SIGMA * 255.0
        noisy_a = img_a + rng.normal(0, sigma, size=img_a.shape)
        noisy_b = img_b + rng.normal(0, sigma, size=img_b.shape)
        samples.append(SamplePair(
            image_a=np.clip(noisy_a, 0, 255).astype(np.uint8),
            image_b=np.clip(noisy_b, 0, 255).astype(np.uint8),
            mask=mask.astype(np.uint8),
            id=f"synth_{seed}_{i:04d}",
        ).validate())
    return samples


def split_samples(samples: Sequence[SamplePair], fractions: dict, seed: int) -> dict:
    """Seeded shuffle split into named parts, e.g. {"train": .8, "val": .1, "test": .1}.

    The seed is the reproducibility record for datasets without a published
    split; re-running with the same seed yields the same partition.
    """
    if abs(sum(fractions.values()) - 1.0) > 1e-9:
        raise InvalidInputError(f"split fractions must sum to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(len(samples))
    parts = {}
    start = 0
    names = list(fractions)
    for i, name in enumerate(names):
        if i == len(names) - 1:
            take = len(samples) - start
        else:
            take = int(round(fractions[name] * len(samples)))
        parts[name] = [samples[j] for j in order[start:start + take]]
        start += take
    return parts


def write_samples(samples: Sequence[SamplePair], root: str | os.PathLike, split: str) -> Path:
    """Write pairs in the standard layout; labels stored as 0/255."""
    base = Path(root) / split
    for name in ("A", "B", "label"):
        (base / name).mkdir(parents=True, exist_ok=True)
    for pair in samples:
        Image.fromarray(pair.image_a).save(base / "A" / f"{pair.id}.png")
        Image.fromarray(pair.image_b).save(base / "B" / f"{pair.id}.png")
        Image.fromarray((pair.mask * 255).astype(np.uint8)).save(base / "label" / f"{pair.id}.png")
    return base


def to_batch(samples: Sequence[SamplePair], device: torch.device | None = None
             ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack pairs into model tensors: images scaled to [0, 1], masks float."""
    a = torch.from_numpy(np.stack([p.image_a for p in samples])).permute(0, 3, 1, 2)
    b = torch.from_numpy(np.stack([p.image_b for p in samples])).permute(0, 3, 1, 2)
    m = torch.from_numpy(np.stack([p.mask for p in samples]))
    a = a.to(device=device, dtype=torch.float32) / 255.0
    b = b.to(device=device, dtype=torch.float32) / 255.0
    return a, b, m.to(device=device, dtype=torch.float32)
