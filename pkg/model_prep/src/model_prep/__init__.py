"""Fixture-model tooling: trains a small classifier and exports it in the
bundle layout the attack toolkit's oracle loader consumes.
"""
from .bundle import FixtureBundle, validate_bundle, write_bundle
from .data import DATASETS, load_dataset
from .pretrained import export_pretrained, supported_names
from .train import train_toy_classifier

__version__ = "1.0.0"

__all__ = [
    "DATASETS",
    "FixtureBundle",
    "export_pretrained",
    "load_dataset",
    "supported_names",
    "train_toy_classifier",
    "validate_bundle",
    "write_bundle",
    "__version__",
]
