"""Black-box adversarial color-film attack and its evaluation harness."""
from .film import (
    DEFAULT_INTENSITY_LEVELS,
    EncodingError,
    FilmParams,
    Genotype,
    GenotypeSpec,
    ParamBounds,
    clamp_to_bounds,
    composite,
    decode_genotype,
    encode_phenotype,
)

__version__ = "1.0.0"

__all__ = [
    "DEFAULT_INTENSITY_LEVELS",
    "EncodingError",
    "FilmParams",
    "Genotype",
    "GenotypeSpec",
    "ParamBounds",
    "clamp_to_bounds",
    "composite",
    "decode_genotype",
    "encode_phenotype",
    "__version__",
]
