"""Input validation helpers for the array-facing estimator API."""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .data import SamplePair
from .grids import InvalidInputError


def check_image_stack(arr, name: str) -> np.ndarray:
    """Validate one temporal phase: (n, H, W, 3), finite, values in [0, 255]."""
    arr = np.asarray(arr)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise InvalidInputError(f"{name} must have shape (n, H, W, 3), got {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    if arr.min() < 0 or arr.max() > 255:
        raise InvalidInputError(f"{name} values must lie in [0, 255]")
    # float arrays in [0, 1] are accepted and rescaled to 8-bit
    if np.issubdtype(arr.dtype, np.floating) and arr.max() <= 1.0:
        arr = arr * 255.0
    return np.clip(np.round(arr), 0, 255).astype(np.uint8)


def check_image_pairs(X) -> Tuple[np.ndarray, np.ndarray]:
    """Accept (A, B) stacks or one (n, 2, H, W, 3) array; return aligned uint8 stacks."""
    if isinstance(X, (tuple, list)) and len(X) == 2:
        a, b = X
    else:
        arr = np.asarray(X)
        if arr.ndim == 5 and arr.shape[1] == 2:
            a, b = arr[:, 0], arr[:, 1]
        else:
            raise InvalidInputError(
                "X must be a pair (A, B) of (n, H, W, 3) stacks or one (n, 2, H, W, 3) array"
            )
    a = check_image_stack(a, "A")
    b = check_image_stack(b, "B")
    if a.shape != b.shape:
        raise InvalidInputError(f"A and B differ in shape: {a.shape} vs {b.shape}")
    return a, b


def check_masks(y, image_shape: Tuple[int, ...]) -> np.ndarray:
    """Validate masks: (n, H, W) binary, aligned with the image stacks."""
    y = np.asarray(y)
    if y.ndim != 3:
        raise InvalidInputError(f"y must have shape (n, H, W), got {y.shape}")
    if y.shape != image_shape[:3]:
        raise InvalidInputError(f"y shape {y.shape} does not match images {image_shape[:3]}")
    values = np.unique(y)
    if np.isin(values, (0, 1)).all():
        return y.astype(np.uint8)
    if np.isin(values, (0, 255)).all():
        return (y == 255).astype(np.uint8)
    raise InvalidInputError(f"y must be binary (0/1 or 0/255), found values {values[:8]}")


def pairs_to_samples(a: np.ndarray, b: np.ndarray, masks: np.ndarray | None,
                     prefix: str) -> List[SamplePair]:
    n = a.shape[0]
    empty = np.zeros(a.shape[1:3], dtype=np.uint8)
    return [
        SamplePair(
            image_a=a[i],
            image_b=b[i],
            mask=masks[i] if masks is not None else empty.copy(),
            id=f"{prefix}_{i:05d}",
        )
        for i in range(n)
    ]
