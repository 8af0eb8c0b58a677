"""Pure-numpy implementations of the hot compositing kernels.

Fallback backend for :mod:`advcf.kernels`. Must stay bit-identical to the
compiled backend: same float64 expressions, round-half-up via floor(v + 0.5),
staged rounding between the blend and brightness passes.
"""
from __future__ import annotations

import numpy as np

BACKEND = "pure"


def blend_uniform(img: np.ndarray, color: tuple[int, int, int], intensity: float) -> np.ndarray:
    """out = round((1 - I) * img + I * color), per channel, clamped to [0, 255]."""
    keep = 1.0 - intensity
    tint = intensity * np.asarray(color, dtype=np.float64)
    mixed = keep * img.astype(np.float64) + tint
    return np.clip(np.floor(mixed + 0.5), 0.0, 255.0).astype(np.uint8)


def shift_blend_scale(
    img: np.ndarray,
    color: tuple[int, int, int],
    intensity: float,
    dx: int,
    dy: int,
    brightness: float,
) -> np.ndarray:
    """Shift the scene by (dx, dy) with edge replication, blend the film over
    it, then scale all pixels by ``brightness``. Both the blend and the scale
    round half up and clamp to [0, 255] before the next stage."""
    h, w = img.shape[0], img.shape[1]
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    shifted = img[rows][:, cols]
    blended = blend_uniform(shifted, color, intensity)
    scaled = np.floor(blended.astype(np.float64) * brightness + 0.5)
    return np.clip(scaled, 0.0, 255.0).astype(np.uint8)
