"""Color film model: parameters, the binary genotype codec, and compositing.

A film is a spatially uniform translucent layer described by an RGB color and
an intensity (opacity). Films are encoded for the genetic search as fixed-width
binary chromosomes: 8 bits per color channel plus 2 bits selecting one of four
intensity levels, 26 bits total. A reduced-width codec (fewer color bits) is
supported for exhaustive-search test spaces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

DEFAULT_INTENSITY_LEVELS: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6)
COLOR_BITS = 8
GENOTYPE_LENGTH = 26


class EncodingError(ValueError):
    """Genotype/phenotype conversion failed."""


@dataclass(frozen=True)
class FilmParams:
    """Film phenotype: color (r, g, b) in [0, 255] and intensity in [0, 1]."""

    color: tuple[int, int, int]
    intensity: float

    def __post_init__(self) -> None:
        if len(self.color) != 3:
            raise ValueError(f"color must have 3 channels, got {self.color!r}")
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))
        for c in self.color:
            if not 0 <= c <= 255:
                raise ValueError(f"color channel {c} outside [0, 255]")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity {self.intensity} outside [0, 1]")

    def as_json(self) -> dict:
        return {"color": list(self.color), "intensity": self.intensity}

    @classmethod
    def from_json(cls, obj: dict) -> "FilmParams":
        return cls(color=tuple(obj["color"]), intensity=float(obj["intensity"]))


@dataclass(frozen=True)
class ParamBounds:
    """Inclusive componentwise bounds on film parameters."""

    lower: FilmParams
    upper: FilmParams

    def __post_init__(self) -> None:
        for lo, hi in zip(self.lower.color, self.upper.color):
            if lo > hi:
                raise ValueError(f"lower color bound {self.lower.color} exceeds upper {self.upper.color}")
        if self.lower.intensity > self.upper.intensity:
            raise ValueError("lower intensity bound exceeds upper")

    @classmethod
    def default(cls) -> "ParamBounds":
        return cls(
            lower=FilmParams((0, 0, 0), DEFAULT_INTENSITY_LEVELS[0]),
            upper=FilmParams((255, 255, 255), DEFAULT_INTENSITY_LEVELS[-1]),
        )

    def contains(self, p: FilmParams) -> bool:
        return all(
            lo <= c <= hi for lo, c, hi in zip(self.lower.color, p.color, self.upper.color)
        ) and self.lower.intensity <= p.intensity <= self.upper.intensity

    def as_json(self) -> dict:
        return {"lower": self.lower.as_json(), "upper": self.upper.as_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "ParamBounds":
        return cls(FilmParams.from_json(obj["lower"]), FilmParams.from_json(obj["upper"]))


@dataclass(frozen=True)
class Genotype:
    """Fixed-width binary chromosome, most-significant bit first per field."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise EncodingError(f"genotype bits must be 0/1, got {self.bits!r}")

    def __len__(self) -> int:
        return len(self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class GenotypeSpec:
    """Chromosome layout: 3 color fields of ``color_bits`` each, then an
    intensity index field wide enough for ``len(intensity_levels)`` entries.

    The default layout (8 color bits, 4 levels) is the 26-bit chromosome.
    Narrower color fields map their value range onto [0, 255] by rounding,
    giving the reduced search spaces used for exhaustive verification.
    """

    color_bits: int = COLOR_BITS
    intensity_levels: tuple[float, ...] = DEFAULT_INTENSITY_LEVELS

    def __post_init__(self) -> None:
        if not 1 <= self.color_bits <= 8:
            raise ValueError(f"color_bits {self.color_bits} outside [1, 8]")
        levels = tuple(float(v) for v in self.intensity_levels)
        object.__setattr__(self, "intensity_levels", levels)
        n = len(levels)
        if n < 1 or n & (n - 1):
            raise ValueError(f"intensity level count {n} must be a power of two")
        if len(set(levels)) != n:
            raise ValueError("intensity levels must be distinct")
        for v in levels:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"intensity level {v} outside [0, 1]")

    @property
    def intensity_bits(self) -> int:
        return (len(self.intensity_levels) - 1).bit_length() if len(self.intensity_levels) > 1 else 1

    @property
    def length(self) -> int:
        return 3 * self.color_bits + self.intensity_bits

    @property
    def space_size(self) -> int:
        return 1 << self.length

    def _channel_value(self, field: int) -> int:
        vmax = (1 << self.color_bits) - 1
        if vmax == 255:
            return field
        return int(np.floor(field * 255.0 / vmax + 0.5))

    def decode(self, g: "Genotype | np.ndarray") -> FilmParams:
        bits = g.bits if isinstance(g, Genotype) else tuple(int(b) for b in g)
        if len(bits) != self.length:
            raise EncodingError(f"expected {self.length} bits, got {len(bits)}")
        if any(b not in (0, 1) for b in bits):
            raise EncodingError("genotype bits must be 0/1")
        fields = []
        pos = 0
        for _ in range(3):
            v = 0
            for b in bits[pos : pos + self.color_bits]:
                v = (v << 1) | b
            fields.append(self._channel_value(v))
            pos += self.color_bits
        idx = 0
        for b in bits[pos:]:
            idx = (idx << 1) | b
        return FilmParams(tuple(fields), self.intensity_levels[idx])

    def encode(self, p: FilmParams) -> Genotype:
        if p.intensity not in self.intensity_levels:
            raise EncodingError(
                f"intensity {p.intensity} not in level set {self.intensity_levels}"
            )
        bits: list[int] = []
        vmax = (1 << self.color_bits) - 1
        for c in p.color:
            if vmax == 255:
                v = c
            else:
                v = int(np.floor(c * vmax / 255.0 + 0.5))
                if self._channel_value(v) != c:
                    raise EncodingError(
                        f"color channel {c} not representable with {self.color_bits} bits"
                    )
            bits.extend((v >> k) & 1 for k in range(self.color_bits - 1, -1, -1))
        idx = self.intensity_levels.index(p.intensity)
        bits.extend((idx >> k) & 1 for k in range(self.intensity_bits - 1, -1, -1))
        return Genotype(tuple(bits))

    def decode_int(self, value: int) -> FilmParams:
        """Decode a genotype given as an integer (MSB-first bit string)."""
        bits = tuple((value >> k) & 1 for k in range(self.length - 1, -1, -1))
        return self.decode(Genotype(bits))


DEFAULT_SPEC = GenotypeSpec()


def decode_genotype(
    g: Genotype | np.ndarray, levels: tuple[float, ...] = DEFAULT_INTENSITY_LEVELS
) -> FilmParams:
    """Binary-to-phenotype conversion for the 26-bit chromosome."""
    return GenotypeSpec(intensity_levels=tuple(levels)).decode(g)


def encode_phenotype(
    p: FilmParams, levels: tuple[float, ...] = DEFAULT_INTENSITY_LEVELS
) -> Genotype:
    """Inverse of :func:`decode_genotype`; rejects intensities outside the level set."""
    return GenotypeSpec(intensity_levels=tuple(levels)).encode(p)


def composite(x: np.ndarray, p: FilmParams) -> np.ndarray:
    """Synthesize the adversarial sample: blend the film uniformly over ``x``.

    out = round((1 - I) * x + I * color) per pixel and channel, clamped to
    [0, 255], round half up. Dimensions are preserved; the input is not
    modified.
    """
    return kernels.blend_uniform(x, p.color, p.intensity)


def clamp_to_bounds(
    p: FilmParams,
    b: ParamBounds,
    levels: tuple[float, ...] = DEFAULT_INTENSITY_LEVELS,
) -> FilmParams:
    """Project film parameters into inclusive bounds.

    Colors clip componentwise. Intensity is projected to the nearest level of
    ``levels`` lying within the bounds (ties toward the smaller level).
    Idempotent; a no-op object-wise on in-bounds inputs.
    """
    in_levels = [v for v in levels if b.lower.intensity <= v <= b.upper.intensity]
    if not in_levels:
        raise ValueError(f"no intensity level of {levels} lies within bounds")
    if b.contains(p) and p.intensity in in_levels:
        return p
    color = tuple(
        min(max(c, lo), hi) for c, lo, hi in zip(p.color, b.lower.color, b.upper.color)
    )
    target = min(max(p.intensity, b.lower.intensity), b.upper.intensity)
    intensity = min(in_levels, key=lambda v: (abs(v - target), v))
    return FilmParams(color, intensity)
