"""Training loop, schedule, dataset resolution and checkpointed evaluation."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch

from .checkpoint import build_model, load_checkpoint, restore_model, save_checkpoint
from .config import TrainConfig
from .data import SamplePair, augment, load_all, load_manifest, resize_pair, synth_generate, tile, to_batch
from .grids import InvalidInputError
from .inference import evaluate_samples
from .losses import class_frequencies, total_loss
from .model import ChangeDetectionNet

LOG_COLUMNS = ("epoch", "lr", "train_loss", "val_f1", "val_iou")


class TrainingDivergedError(RuntimeError):
    """Raised when a loss term stops being finite; names the offending term."""

    def __init__(self, term: str, step: int):
        super().__init__(f"non-finite loss term '{term}' at step {step}")
        self.term = term
        self.step = step


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Stepped decay: lr * factor^(epoch // every).

    Decimal arithmetic keeps the decade steps exact (1e-3 -> 1e-4 -> 1e-5)
    instead of accumulating binary float drift.
    """
    if not 0 <= epoch < cfg.epochs:
        raise InvalidInputError(f"epoch {epoch} outside [0, {cfg.epochs})")
    k = epoch // cfg.lr_decay_every
    return float(Decimal(repr(cfg.lr)) * Decimal(repr(cfg.lr_decay_factor)) ** k)


def parameter_groups(model: ChangeDetectionNet, cfg: TrainConfig,
                     pretrained_names: frozenset = frozenset()) -> List[dict]:
    """Imported parameters train at the base rate; fresh ones at multiplier x base."""
    pretrained, fresh = [], []
    for name, param in model.named_parameters():
        (pretrained if name in pretrained_names else fresh).append(param)
    groups = []
    if pretrained:
        groups.append({"params": pretrained, "lr_scale": 1.0})
    if fresh:
        groups.append({"params": fresh, "lr_scale": cfg.new_layer_lr_multiplier})
    return groups


def _prepare(samples: Sequence[SamplePair], cfg: TrainConfig) -> List[SamplePair]:
    """Tile oversized scenes, then resize everything to the model input size."""
    out: List[SamplePair] = []
    for pair in samples:
        h, w = pair.mask.shape
        if cfg.tile_size > 0 and min(h, w) >= cfg.tile_size and (h, w) != (cfg.tile_size, cfg.tile_size):
            parts = tile(pair, cfg.tile_size)
        else:
            parts = [pair]
        out.extend(
            resize_pair(p, cfg.input_size) if p.mask.shape != (cfg.input_size, cfg.input_size) else p
            for p in parts
        )
    return out


def resolve_datasets(cfg: TrainConfig) -> Tuple[List[SamplePair], List[SamplePair]]:
    """Train/val sample lists from disk, or the seeded synthetic set when no root."""
    if cfg.data_root:
        train = _prepare(load_all(load_manifest(cfg.data_root, "train")), cfg)
        val_dir = Path(cfg.data_root) / "val"
        if val_dir.is_dir():
            val = _prepare(load_all(load_manifest(cfg.data_root, "val")), cfg)
        else:
            val = train
        return train, val
    synth = synth_generate(cfg.seed, cfg.synth_count, cfg.input_size)
    return synth, synth


def resolve_split(cfg: TrainConfig, split: str) -> List[SamplePair]:
    if not split:
        raise InvalidInputError("split must be named")
    if cfg.data_root:
        return _prepare(load_all(load_manifest(cfg.data_root, split)), cfg)
    # no dataset on disk: every split maps to the seeded synthetic set
    return synth_generate(cfg.seed, cfg.synth_count, cfg.input_size)


@dataclass
class TrainResult:
    model: ChangeDetectionNet
    history: List[Dict[str, float]] = field(default_factory=list)
    best_val_f1: float = 0.0
    best_epoch: int = -1
    frequencies: Tuple[float, float] = (0.5, 0.5)
    best_path: Path | None = None
    last_path: Path | None = None
    log_path: Path | None = None
    steps: int = 0


def fit_model(cfg: TrainConfig, train_samples: Sequence[SamplePair],
              val_samples: Sequence[SamplePair],
              model: ChangeDetectionNet | None = None,
              pretrained_names: frozenset = frozenset(),
              out_dir: str | Path | None = None,
              log_fn=None) -> TrainResult:
    """SGD with momentum over shuffled batches, validated every epoch.

    Checkpoints the best-validation-F1 and the last state when out_dir is set.
    """
    cfg.validate()
    if model is None:
        model = build_model(cfg)
    frequencies = class_frequencies([p.mask for p in train_samples])
    loss_cfg = cfg.loss_config(frequencies)
    optimizer = torch.optim.SGD(
        parameter_groups(model, cfg, pretrained_names),
        lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay,
    )
    result = TrainResult(model=model, frequencies=frequencies)

    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.log_path = out_dir / "log.csv"
        log_file = result.log_path.open("w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(LOG_COLUMNS)

    step = 0
    stop = False
    try:
        for epoch in range(cfg.epochs):
            base_lr = lr_schedule(epoch, cfg)
            for group in optimizer.param_groups:
                group["lr"] = base_lr * group["lr_scale"]
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_samples))
            model.train()
            losses = []
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                if len(idx) < 2:
                    continue  # batch statistics need at least two samples
                batch = [train_samples[i] for i in idx]
                if cfg.augment:
                    batch = [augment(p, [cfg.seed, epoch, int(i)]) for p, i in zip(batch, idx)]
                images_a, images_b, masks = to_batch(batch)
                preds = model(images_a, images_b)
                loss, terms = total_loss(preds, masks, loss_cfg, return_terms=True)
                for term_name, value in terms.items():
                    if not torch.isfinite(value):
                        raise TrainingDivergedError(term_name, step)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                step += 1
                losses.append(float(loss.detach()))
                if cfg.max_steps and step >= cfg.max_steps:
                    stop = True
                    break

            val_metrics, _ = evaluate_samples(model, val_samples, cfg.threshold, cfg.batch_size)
            row = {
                "epoch": epoch,
                "lr": base_lr,
                "train_loss": float(np.mean(losses)) if losses else float("nan"),
                "val_f1": val_metrics["f1"],
                "val_iou": val_metrics["iou"],
            }
            result.history.append(row)
            if writer is not None:
                writer.writerow([row[c] for c in LOG_COLUMNS])
            if log_fn is not None:
                log_fn(row)
            if val_metrics["f1"] > result.best_val_f1 or result.best_epoch < 0:
                result.best_val_f1 = val_metrics["f1"]
                result.best_epoch = epoch
                if out_dir is not None:
                    result.best_path = save_checkpoint(
                        out_dir / "best.pt", model, cfg, epoch, optimizer,
                        extra={"val_f1": val_metrics["f1"]},
                    )
            if out_dir is not None:
                result.last_path = save_checkpoint(
                    out_dir / "last.pt", model, cfg, epoch, optimizer,
                    extra={"val_f1": val_metrics["f1"]},
                )
            if stop:
                break
    finally:
        if writer is not None:
            log_file.close()
    result.steps = step
    return result


def train(cfg: TrainConfig, log_fn=None) -> TrainResult:
    """Resolve datasets per config and fit, checkpointing into cfg.out_dir."""
    cfg.validate()
    train_samples, val_samples = resolve_datasets(cfg)
    return fit_model(cfg, train_samples, val_samples, out_dir=cfg.out_dir, log_fn=log_fn)


def evaluate_checkpoint(ckpt_path: str | Path, split: str,
                        root: str | None = None) -> Dict[str, float]:
    """Load a checkpoint, run its config's eval pipeline on a split."""
    record = load_checkpoint(ckpt_path)
    model, cfg = restore_model(record)
    if root:
        cfg = dataclasses.replace(cfg, data_root=root)
    samples = resolve_split(cfg, split)
    if not samples:
        raise InvalidInputError(f"split '{split}' is empty")
    metrics, _ = evaluate_samples(model, samples, cfg.threshold, cfg.batch_size)
    return metrics
