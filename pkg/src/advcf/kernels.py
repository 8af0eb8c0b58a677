"""Kernel backend selection: compiled extension if available, numpy fallback.

Set ADVCF_PURE_PYTHON=1 to force the fallback (used by the benchmark and to
verify bit-equality of both backends).
"""
from __future__ import annotations

import os

import numpy as np

from . import _blendpure

if os.environ.get("ADVCF_PURE_PYTHON") == "1":
    _impl = _blendpure
else:
    try:
        from . import _blendcore as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _blendpure

BACKEND: str = _impl.BACKEND


def _check_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 array, got {getattr(img, 'shape', type(img))}")
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {img.dtype}")
    return np.ascontiguousarray(img)


def blend_uniform(img: np.ndarray, color: tuple[int, int, int], intensity: float) -> np.ndarray:
    """Blend a uniform color layer over ``img``: round((1-I)*x + I*c), clamped."""
    img = _check_image(img)
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity {intensity} outside [0, 1]")
    return _impl.blend_uniform(img, tuple(int(c) for c in color), float(intensity))


def shift_blend_scale(
    img: np.ndarray,
    color: tuple[int, int, int],
    intensity: float,
    dx: int,
    dy: int,
    brightness: float,
) -> np.ndarray:
    """Edge-replicated (dx, dy) scene shift, then blend, then brightness scale."""
    img = _check_image(img)
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity {intensity} outside [0, 1]")
    if brightness < 0.0:
        raise ValueError(f"brightness {brightness} must be non-negative")
    return _impl.shift_blend_scale(
        img, tuple(int(c) for c in color), float(intensity), int(dx), int(dy), float(brightness)
    )
