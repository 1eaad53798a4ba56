"""Independent oracles and finite-difference utilities shared by the tests.

Everything here recomputes results through a different route than the library
(numpy loops, explicit index arithmetic) so the checks stay meaningful.
"""

from __future__ import annotations

import numpy as np
import torch


def rel_error(a: torch.Tensor, b: torch.Tensor) -> float:
    a = a.detach().double().reshape(-1)
    b = b.detach().double().reshape(-1)
    denom = max(a.norm().item(), b.norm().item(), 1e-12)
    return (a - b).norm().item() / denom


def fd_gradient(scalar_fn, tensor: torch.Tensor, step: float = 1e-4,
                max_coords: int | None = None, seed: int = 0) -> tuple[torch.Tensor, list[int]]:
    """Central-difference gradient of scalar_fn w.r.t. selected tensor coords.

    scalar_fn must recompute its value from the tensor's current data on every
    call. Returns (gradient values, flat indices checked).
    """
    assert tensor.is_contiguous()
    n = tensor.numel()
    if max_coords is not None and n > max_coords:
        rng = np.random.default_rng(seed)
        indices = sorted(rng.choice(n, size=max_coords, replace=False).tolist())
    else:
        indices = list(range(n))
    grads = []
    with torch.no_grad():
        flat = tensor.view(-1)
        for i in indices:
            orig = flat[i].item()
            flat[i] = orig + step
            f_plus = float(scalar_fn())
            flat[i] = orig - step
            f_minus = float(scalar_fn())
            flat[i] = orig
            grads.append((f_plus - f_minus) / (2.0 * step))
    return torch.tensor(grads, dtype=tensor.dtype), indices


def gradient_check(scalar_fn, tensor: torch.Tensor, step: float = 1e-4,
                   max_coords: int | None = None, seed: int = 0) -> float:
    """Relative error between the autograd gradient and central differences."""
    tensor.requires_grad_(True)
    if tensor.grad is not None:
        tensor.grad = None
    scalar_fn().backward()
    analytic = tensor.grad.detach().clone().reshape(-1)
    fd, indices = fd_gradient(scalar_fn, tensor, step=step, max_coords=max_coords, seed=seed)
    return rel_error(analytic[indices], fd)


def global_attention_oracle(module, x: np.ndarray) -> np.ndarray:
    """Brute-force full-grid attention with the module's weights.

    Plain numpy: LayerNorm, qkv projection, per-head softmax over all tokens
    with the relative-position bias gathered by explicit index arithmetic,
    value mixing, output projection, residual add. Valid when the module's
    window covers the whole grid and shift is 0.
    """
    H, W, C = x.shape
    assert module.shift == 0 and module.window_size == H == W
    n_heads = module.num_heads
    dh = C // n_heads
    N = H * W

    gamma = module.norm.weight.detach().numpy().astype(np.float64)
    beta = module.norm.bias.detach().numpy().astype(np.float64)
    w_qkv = module.qkv.weight.detach().numpy().astype(np.float64)
    b_qkv = module.qkv.bias.detach().numpy().astype(np.float64)
    w_proj = module.proj.weight.detach().numpy().astype(np.float64)
    b_proj = module.proj.bias.detach().numpy().astype(np.float64)
    table = module.relative_bias_table.detach().numpy().astype(np.float64)

    seq = x.reshape(N, C).astype(np.float64)
    mu = seq.mean(axis=1, keepdims=True)
    var = seq.var(axis=1, keepdims=True)
    normed = (seq - mu) / np.sqrt(var + module.norm.eps) * gamma + beta

    qkv = normed @ w_qkv.T + b_qkv
    q, k, v = qkv[:, :C], qkv[:, C:2 * C], qkv[:, 2 * C:]

    out = np.zeros((N, C))
    span = 2 * module.window_size - 1
    for h in range(n_heads):
        qh = q[:, h * dh:(h + 1) * dh] * dh ** -0.5
        kh = k[:, h * dh:(h + 1) * dh]
        vh = v[:, h * dh:(h + 1) * dh]
        scores = qh @ kh.T
        for i in range(N):
            yi, xi = divmod(i, W)
            for j in range(N):
                yj, xj = divmod(j, W)
                idx = (yi - yj + module.window_size - 1) * span + (xi - xj + module.window_size - 1)
                scores[i, j] += table[idx, h]
        scores -= scores.max(axis=1, keepdims=True)
        probs = np.exp(scores)
        probs /= probs.sum(axis=1, keepdims=True)
        out[:, h * dh:(h + 1) * dh] = probs @ vh

    projected = out @ w_proj.T + b_proj
    return x.astype(np.float64) + projected.reshape(H, W, C)


def ssim_loss_oracle(p: np.ndarray, g: np.ndarray, window: int, eps: float) -> float:
    """Sliding-window SSIM loss by explicit loops with reflective padding."""
    pad = window // 2
    pp = np.pad(p.astype(np.float64), pad, mode="reflect")
    gg = np.pad(g.astype(np.float64), pad, mode="reflect")
    h, w = p.shape
    values = []
    for i in range(h):
        for j in range(w):
            xs = pp[i:i + window, j:j + window].ravel()
            ys = gg[i:i + window, j:j + window].ravel()
            mx, my = xs.mean(), ys.mean()
            vx, vy = xs.var(), ys.var()
            cov = ((xs - mx) * (ys - my)).mean()
            values.append(
                ((2 * mx * my + eps) * (2 * cov + eps))
                / ((mx * mx + my * my + eps) * (vx + vy + eps))
            )
    return 1.0 - float(np.mean(values))
