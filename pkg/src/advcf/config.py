"""Run configuration: one JSON document describing oracle, dataset, search
parameters, and per-command options. Validated against a closed schema
(unknown keys rejected) before anything touches an oracle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .eot import EotConfig
from .film import GenotypeSpec, ParamBounds
from .ga import GaConfig

_COLOR = {
    "type": "array",
    "items": {"type": "integer", "minimum": 0, "maximum": 255},
    "minItems": 3,
    "maxItems": 3,
}

_FILM_PARAMS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["color", "intensity"],
    "properties": {
        "color": _COLOR,
        "intensity": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

_INTERVAL = {
    "type": "array",
    "items": {"type": "number", "minimum": 0},
    "minItems": 2,
    "maxItems": 2,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "oracle": {"type": "string", "minLength": 1},
        "dataset": {"type": "string", "minLength": 1},
        "out_dir": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "jobs": {"type": "integer", "minimum": 1},
        "record_timestamps": {"type": "boolean"},
        "svg": {"type": "boolean"},
        "ga": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed_count": {"type": "integer", "minimum": 1},
                "step_count": {"type": "integer", "minimum": 1},
                "pc": {"type": "number", "minimum": 0, "maximum": 1},
                "pm": {"type": "number", "minimum": 0, "maximum": 1},
                "cull_fraction": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "exclusiveMaximum": 1,
                },
                "mutation_mode": {"enum": ["per_individual", "per_bit"]},
                "color_bits": {"type": "integer", "minimum": 1, "maximum": 8},
                "intensity_levels": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0, "maximum": 1},
                    "minItems": 1,
                },
                "bounds": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["lower", "upper"],
                    "properties": {"lower": _FILM_PARAMS, "upper": _FILM_PARAMS},
                },
            },
        },
        "eot": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "brightness_range": _INTERVAL,
                "offset_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                "color_jitter_range": _INTERVAL,
                "n_samples": {"type": "integer", "minimum": 1},
                "enabled": {"type": "boolean"},
            },
        },
        "attack": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "image": {"type": "string", "minLength": 1},
                "label": {"type": "integer", "minimum": 0},
            },
        },
        "ablate_intensity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "levels": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0, "maximum": 1},
                    "minItems": 1,
                },
                "colors_per_image": {"type": "integer", "minimum": 1},
            },
        },
        "build_corpus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "colors": {"type": "array", "items": _COLOR, "minItems": 1},
                "intensity": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "ablate_color": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"corpus_manifest": {"type": "string", "minLength": 1}},
        },
        "transfer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sources": {
                    "type": "object",
                    "additionalProperties": {"type": "string", "minLength": 1},
                    "minProperties": 1,
                },
                "victims": {
                    "type": "object",
                    "additionalProperties": {"type": "string", "minLength": 1},
                    "minProperties": 1,
                },
            },
        },
    },
}


class ConfigError(ValueError):
    """Configuration file unreadable or schema-invalid."""


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration document plus typed accessors."""

    raw: dict

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        errors = sorted(
            jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(obj),
            key=lambda e: list(e.absolute_path),
        )
        if errors:
            lines = [
                f"  at {'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                for e in errors
            ]
            raise ConfigError("invalid config:\n" + "\n".join(lines))
        return cls(obj)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        try:
            obj = json.loads(text)
        except ValueError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(obj, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        return cls.from_dict(obj)

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    def section(self, key: str) -> dict:
        return dict(self.raw.get(key, {}))

    def ga_config(self, seed_override: int | None = None) -> GaConfig:
        ga = self.section("ga")
        kwargs = {
            k: ga[k]
            for k in ("seed_count", "step_count", "pc", "pm", "cull_fraction", "mutation_mode")
            if k in ga
        }
        spec_kwargs = {}
        if "color_bits" in ga:
            spec_kwargs["color_bits"] = int(ga["color_bits"])
        if "intensity_levels" in ga:
            spec_kwargs["intensity_levels"] = tuple(ga["intensity_levels"])
        if spec_kwargs:
            kwargs["genotype"] = GenotypeSpec(**spec_kwargs)
        if "bounds" in ga:
            kwargs["bounds"] = ParamBounds.from_json(ga["bounds"])
        if "eot" in self.raw:
            kwargs["eot"] = EotConfig.from_json(self.raw["eot"])
        seed = seed_override if seed_override is not None else self.raw.get("seed", 0)
        return GaConfig(rng_seed=int(seed), **kwargs)
