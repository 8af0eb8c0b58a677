"""Fixture bundle layout: the directory format the attack toolkit's
`--oracle onnx:PATH` consumes.

    bundle/
      model.onnx            inference graph ending in class scores
      preprocessing.json    input pipeline constants
      labels.json           class-index -> name table
      metadata.json         {"accuracy", "seed", "dataset", "classes"}
      probe/*.png           probe images
      probe.json            exporter-side predictions for the probe set

Nothing outside preprocessing.json carries preprocessing constants.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


def _dump(obj, path: Path) -> None:
    path.write_text(
        json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


@dataclass(frozen=True)
class FixtureBundle:
    root: Path
    metadata: dict

    @property
    def model_path(self) -> Path:
        return self.root / "model.onnx"

    @classmethod
    def load(cls, root: str | Path) -> "FixtureBundle":
        root = Path(root)
        meta = json.loads((root / "metadata.json").read_text(encoding="utf-8"))
        return cls(root, meta)


def write_bundle(
    root: str | Path,
    model_bytes: bytes,
    preprocessing: dict,
    label_names: list[str],
    metadata: dict,
    probe_images: np.ndarray,
    probe_entries: list[dict],
) -> FixtureBundle:
    for key in ("accuracy", "seed", "dataset", "classes"):
        if key not in metadata:
            raise ValueError(f"metadata missing {key!r}")
    root = Path(root)
    (root / "probe").mkdir(parents=True, exist_ok=True)
    (root / "model.onnx").write_bytes(model_bytes)
    _dump(preprocessing, root / "preprocessing.json")
    _dump(label_names, root / "labels.json")
    _dump(metadata, root / "metadata.json")
    for i, img in enumerate(probe_images):
        Image.fromarray(img, mode="RGB").save(root / "probe" / f"{i:04d}.png")
    _dump(probe_entries, root / "probe.json")
    return FixtureBundle(root, dict(metadata))


def validate_bundle(root: str | Path) -> dict:
    """Load the bundle through the attack toolkit's oracle and check that
    it reproduces the exporter's probe predictions and accuracy.
    """
    from advcf.images import load_image
    from advcf.onnx_model import open_model_oracle

    root = Path(root)
    bundle = FixtureBundle.load(root)
    oracle = open_model_oracle(root)
    probe = json.loads((root / "probe.json").read_text(encoding="utf-8"))

    agree = 0
    correct = 0
    for entry in probe:
        pred = oracle.classify(load_image(root / entry["file"]))
        agree += int(pred.label == entry["predicted"])
        correct += int(pred.label == entry["label"])
    total = len(probe)
    probe_accuracy = correct / total if total else 0.0
    ok = (
        agree == total
        and abs(probe_accuracy - float(bundle.metadata["accuracy"])) <= 0.01
    )
    return {
        "probe_total": total,
        "probe_agreement": agree,
        "probe_accuracy": probe_accuracy,
        "metadata_accuracy": float(bundle.metadata["accuracy"]),
        "ok": ok,
    }
