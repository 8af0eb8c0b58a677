"""Random image transformations and the Monte-Carlo confidence expectation.

Each transform instance combines a brightness change, an integer pixel offset
of the scene under the film, and a per-channel scaling of the film color.
Averaging the ground-truth confidence over such instances gives the robust
fitness used when optimizing films that must survive capture conditions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import kernels
from .film import FilmParams

if TYPE_CHECKING:
    from .oracle import Oracle


@dataclass(frozen=True)
class EotConfig:
    """Transform sampling ranges.

    brightness_range: multiplicative pixel scale interval.
    offset_fraction: max |dx|,|dy| as a fraction of the image side.
    color_jitter_range: per-channel multiplicative interval on the film color.
    n_samples: Monte-Carlo sample count per expectation.
    enabled: when off, expectations collapse to a single untransformed query.
    """

    brightness_range: tuple[float, float] = (0.7, 1.3)
    offset_fraction: float = 0.05
    color_jitter_range: tuple[float, float] = (0.9, 1.1)
    n_samples: int = 8
    enabled: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "brightness_range", tuple(float(v) for v in self.brightness_range))
        object.__setattr__(self, "color_jitter_range", tuple(float(v) for v in self.color_jitter_range))
        for name, (lo, hi) in (
            ("brightness_range", self.brightness_range),
            ("color_jitter_range", self.color_jitter_range),
        ):
            if lo > hi:
                raise ValueError(f"{name} {lo, hi} is inverted")
            if lo < 0:
                raise ValueError(f"{name} lower bound {lo} is negative")
        if not 0.0 <= self.offset_fraction <= 1.0:
            raise ValueError(f"offset_fraction {self.offset_fraction} outside [0, 1]")
        if self.n_samples < 1:
            raise ValueError(f"n_samples {self.n_samples} must be >= 1")

    def as_json(self) -> dict:
        return {
            "brightness_range": list(self.brightness_range),
            "offset_fraction": self.offset_fraction,
            "color_jitter_range": list(self.color_jitter_range),
            "n_samples": self.n_samples,
            "enabled": self.enabled,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EotConfig":
        kwargs = {}
        for key in ("brightness_range", "color_jitter_range"):
            if key in obj:
                kwargs[key] = tuple(obj[key])
        for key in ("offset_fraction", "n_samples", "enabled"):
            if key in obj:
                kwargs[key] = obj[key]
        return cls(**kwargs)


@dataclass(frozen=True)
class TransformInstance:
    """One concrete draw: brightness scalar, pixel offset, film color scale."""

    brightness: float
    offset: tuple[int, int]
    color_scale: tuple[float, float, float]

    @property
    def is_identity(self) -> bool:
        return (
            self.brightness == 1.0
            and self.offset == (0, 0)
            and self.color_scale == (1.0, 1.0, 1.0)
        )


IDENTITY_TRANSFORM = TransformInstance(1.0, (0, 0), (1.0, 1.0, 1.0))


def sample_transform(
    cfg: EotConfig, rng: np.random.Generator, image_shape: tuple[int, int]
) -> TransformInstance:
    """Draw one transform, each field uniform over its configured range.

    The offset bound is ``floor(offset_fraction * min(h, w))`` whole pixels.
    Draw order is fixed (brightness, dx, dy, three channel scales) so a given
    rng state always yields the same instance.
    """
    lo, hi = cfg.brightness_range
    brightness = float(rng.uniform(lo, hi)) if hi > lo else lo
    max_off = int(math.floor(cfg.offset_fraction * min(image_shape)))
    if max_off > 0:
        dx = int(rng.integers(-max_off, max_off + 1))
        dy = int(rng.integers(-max_off, max_off + 1))
    else:
        dx = dy = 0
    jlo, jhi = cfg.color_jitter_range
    if jhi > jlo:
        color_scale = tuple(float(rng.uniform(jlo, jhi)) for _ in range(3))
    else:
        color_scale = (jlo, jlo, jlo)
    return TransformInstance(brightness, (dx, dy), color_scale)


def _jitter_color(color: tuple[int, int, int], scale: tuple[float, float, float]) -> tuple[int, int, int]:
    return tuple(
        int(min(max(math.floor(c * s + 0.5), 0), 255)) for c, s in zip(color, scale)
    )


def apply_transform(x: np.ndarray, p: FilmParams, t: TransformInstance) -> np.ndarray:
    """Composite under the transform: jitter the film color, composite onto
    the offset scene with edge replication, then scale brightness.

    Identity instances reduce bit-exactly to plain compositing.
    """
    color = _jitter_color(p.color, t.color_scale)
    dx, dy = t.offset
    return kernels.shift_blend_scale(x, color, p.intensity, dx, dy, t.brightness)


def expected_confidence(
    oracle: "Oracle",
    x: np.ndarray,
    p: FilmParams,
    cfg: EotConfig,
    label: int,
    rng: np.random.Generator,
) -> float:
    """Mean ground-truth confidence over n_samples random transforms.

    With EOT disabled this is a single query on the untransformed composite.
    Samples are averaged in draw order (stable summation).
    """
    if not cfg.enabled:
        adv = kernels.blend_uniform(x, p.color, p.intensity)
        return float(oracle.classify(adv).scores[label])
    total = 0.0
    for _ in range(cfg.n_samples):
        t = sample_transform(cfg, rng, x.shape[:2])
        total += float(oracle.classify(apply_transform(x, p, t)).scores[label])
    return total / cfg.n_samples


def queries_per_evaluation(cfg: EotConfig) -> int:
    return cfg.n_samples if cfg.enabled else 1
