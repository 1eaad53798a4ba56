"""Boundary-aware composite losses for deeply-supervised change prediction.

All per-map losses take probabilities in [0, 1] and binary reference masks with
matching shapes (leading batch dimensions allowed). The total objective applies
a sigmoid to each logit map and sums the fused term with weighted side terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from .decoder import PredictionSet
from .grids import ConfigurationError, InvalidInputError

LOG_CLAMP = 1e-7   # probability clamp for log terms
SIOU_EPS = 1e-7    # denominator guard for the soft IoU
FREQ_FLOOR = 1e-6  # keeps both class frequencies strictly positive


@dataclass
class LossConfig:
    frequencies: Tuple[float, float] = (0.5, 0.5)  # (no-change, change)
    boundary_weight: float = 2.0
    ssim_window: int = 11
    ssim_eps: float = 1e-4
    side_weights: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)
    use_wbce: bool = True
    use_ssim: bool = True
    use_siou: bool = True
    # literal reading of the weighting rule: derive class/boundary weights from
    # the binarised prediction instead of the ground truth
    weights_from_prediction: bool = False

    def validate(self) -> None:
        f0, f1 = self.frequencies
        if not (f0 > 0 and f1 > 0 and abs(f0 + f1 - 1.0) < 1e-9):
            raise ConfigurationError(f"class frequencies must be positive and sum to 1, got {self.frequencies}")
        if self.boundary_weight < 0:
            raise ConfigurationError("boundary weight must be >= 0")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ConfigurationError(f"ssim window must be odd and >= 3, got {self.ssim_window}")
        if self.ssim_eps <= 0:
            raise ConfigurationError("ssim eps must be > 0")
        if any(a < 0 for a in self.side_weights):
            raise ConfigurationError("side weights must be >= 0")
        if not (self.use_wbce or self.use_ssim or self.use_siou):
            raise ConfigurationError("at least one loss term must be enabled")


def class_frequencies(masks: Iterable[np.ndarray]) -> Tuple[float, float]:
    """Pixel fraction per class over the whole collection, floored away from 0."""
    total = 0
    changed = 0
    for mask in masks:
        arr = np.asarray(mask)
        total += arr.size
        changed += int(np.count_nonzero(arr))
    if total == 0:
        raise InvalidInputError("class_frequencies requires a non-empty mask collection")
    f1 = min(max(changed / total, FREQ_FLOOR), 1.0 - FREQ_FLOOR)
    return (1.0 - f1, f1)


def _check_shapes(p: torch.Tensor, g: torch.Tensor) -> None:
    if p.shape != g.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(p.shape)} vs {tuple(g.shape)}")


def boundary_map(mask: torch.Tensor) -> torch.Tensor:
    """1.0 where any 4-neighbour of the reference map differs, else 0.0."""
    m = mask.bool()
    b = torch.zeros_like(m)
    dv = m[..., 1:, :] != m[..., :-1, :]
    b[..., 1:, :] |= dv
    b[..., :-1, :] |= dv
    dh = m[..., :, 1:] != m[..., :, :-1]
    b[..., :, 1:] |= dh
    b[..., :, :-1] |= dh
    return b.to(mask.dtype if mask.is_floating_point() else torch.get_default_dtype())


def wbce_weights(mask: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Median-frequency class weights plus a boundary bonus, from the reference map."""
    f = cfg.frequencies
    med = float(np.median(f))
    m = mask.to(torch.get_default_dtype() if not mask.is_floating_point() else mask.dtype)
    class_term = torch.where(mask.bool(), torch.as_tensor(med / f[1], dtype=m.dtype),
                             torch.as_tensor(med / f[0], dtype=m.dtype))
    return class_term + cfg.boundary_weight * boundary_map(mask).to(m.dtype)


def wbce_loss(p: torch.Tensor, g: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Weighted binary cross-entropy, averaged over pixels."""
    _check_shapes(p, g)
    _check_shapes(p, w)
    p = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)
    g = g.to(p.dtype)
    ll = g * torch.log(p) + (1.0 - g) * torch.log(1.0 - p)
    return -(w * ll).mean()


def _window_means(x: torch.Tensor, window: int) -> torch.Tensor:
    pad = window // 2
    x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    return F.avg_pool2d(x, kernel_size=window, stride=1)


def ssim_loss(p: torch.Tensor, g: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """One minus the mean local structural similarity over all pixel positions.

    Uniform NxN sliding windows with reflective padding; population statistics.
    """
    _check_shapes(p, g)
    if p.shape[-2] < cfg.ssim_window or p.shape[-1] < cfg.ssim_window:
        raise InvalidInputError(
            f"map {tuple(p.shape[-2:])} smaller than ssim window {cfg.ssim_window}"
        )
    eps = cfg.ssim_eps
    x = p.reshape(-1, 1, p.shape[-2], p.shape[-1])
    y = g.to(p.dtype).reshape(-1, 1, p.shape[-2], p.shape[-1])
    mu_x = _window_means(x, cfg.ssim_window)
    mu_y = _window_means(y, cfg.ssim_window)
    var_x = _window_means(x * x, cfg.ssim_window) - mu_x * mu_x
    var_y = _window_means(y * y, cfg.ssim_window) - mu_y * mu_y
    cov = _window_means(x * y, cfg.ssim_window) - mu_x * mu_y
    ssim = ((2 * mu_x * mu_y + eps) * (2 * cov + eps)) / (
        (mu_x * mu_x + mu_y * mu_y + eps) * (var_x + var_y + eps)
    )
    return 1.0 - ssim.mean()


def siou_loss(p: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Differentiable soft IoU loss; an empty mask perfectly predicted costs 0."""
    _check_shapes(p, g)
    g = g.to(p.dtype)
    intersection = (p * g).sum()
    union = (p + g - p * g).sum()
    if union.detach() == 0:
        return p.sum() * 0.0
    return 1.0 - intersection / (union + SIOU_EPS)


def combined_loss(p: torch.Tensor, g: torch.Tensor, cfg: LossConfig,
                  return_terms: bool = False):
    """WBCE + SSIM + SIoU on one probability map, each gated by its flag."""
    cfg.validate()
    terms: Dict[str, torch.Tensor] = {}
    if cfg.use_wbce:
        reference = (p >= 0.5).detach().to(p.dtype) if cfg.weights_from_prediction else g
        terms["wbce"] = wbce_loss(p, g, wbce_weights(reference, cfg))
    if cfg.use_ssim:
        terms["ssim"] = ssim_loss(p, g, cfg)
    if cfg.use_siou:
        terms["siou"] = siou_loss(p, g)
    total = sum(terms.values())
    return (total, terms) if return_terms else total


def total_loss(preds: PredictionSet, g: torch.Tensor, cfg: LossConfig,
               return_terms: bool = False):
    """Fused-map loss plus weighted side-output losses (deep supervision)."""
    if len(preds.side_logits) != len(cfg.side_weights):
        raise InvalidInputError(
            f"expected {len(cfg.side_weights)} side outputs, got {len(preds.side_logits)}"
        )
    gsq = g.to(preds.fused_logits.dtype)
    total, terms = combined_loss(
        torch.sigmoid(preds.fused_logits.squeeze(1)), gsq, cfg, return_terms=True
    )
    all_terms = {f"fused/{k}": v for k, v in terms.items()}
    for s, (alpha, logits) in enumerate(zip(cfg.side_weights, preds.side_logits), start=1):
        side_total, side_terms = combined_loss(
            torch.sigmoid(logits.squeeze(1)), gsq, cfg, return_terms=True
        )
        total = total + alpha * side_total
        for k, v in side_terms.items():
            all_terms[f"side{s}/{k}"] = v
    return (total, all_terms) if return_terms else total
