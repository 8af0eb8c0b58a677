"""Export of standard pretrained torchvision classifiers as bundles.

Optional full-scale path; the toy trainer covers everything the desk-scale
fixtures need. Weight downloads happen through torchvision's own cache.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .bundle import FixtureBundle, write_bundle

# canonical ImageNet input pipeline per architecture
_PRETRAINED = {
    "resnet18": {"input_size": 224},
    "resnet50": {"input_size": 224},
    "alexnet": {"input_size": 224},
    "vgg19": {"input_size": 224},
    "inception_v3": {"input_size": 299},
}

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


def supported_names() -> tuple[str, ...]:
    return tuple(sorted(_PRETRAINED))


def export_pretrained(name: str, out_dir: str | Path) -> FixtureBundle:
    """Download a pretrained classifier and export it as a bundle.

    The graph serializer here only covers the small-net operator set, so
    full pretrained exports additionally require the onnx package; without
    it this reports the supported names and fails cleanly.
    """
    if name not in _PRETRAINED:
        raise ValueError(
            f"unknown pretrained model {name!r}; supported: {', '.join(supported_names())}"
        )
    import torch
    import torchvision.models as models

    try:
        net = getattr(models, name)(weights="DEFAULT")
    except Exception as e:
        raise RuntimeError(f"pretrained weights for {name!r} unavailable: {e}") from e
    net.eval()

    size = _PRETRAINED[name]["input_size"]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.onnx"
    try:
        torch.onnx.export(
            net,
            torch.zeros(1, 3, size, size),
            str(model_path),
            input_names=["input"],
            output_names=["scores"],
            opset_version=13,
        )
    except Exception as e:
        raise RuntimeError(
            f"full-architecture export needs the onnx exporter stack: {e}"
        ) from e

    model_bytes = model_path.read_bytes()
    preprocessing = {
        "input_size": [size, size],
        "mean": list(_IMAGENET_MEAN),
        "std": list(_IMAGENET_STD),
        "channel_order": "rgb",
        "scale": 1.0 / 255.0,
    }
    labels = [str(i) for i in range(1000)]
    metadata = {
        "accuracy": float("nan"),
        "seed": -1,
        "dataset": "imagenet",
        "classes": 1000,
    }
    # probe: random-noise sanity images scored by the exporter itself
    rng = np.random.default_rng(0)
    probe = rng.integers(0, 256, size=(8, size, size, 3), dtype=np.uint8)
    from .net import normalize

    with torch.no_grad():
        scores = torch.softmax(net(normalize(probe)), dim=1).numpy()
    entries = [
        {
            "file": f"probe/{i:04d}.png",
            "label": int(scores[i].argmax()),
            "predicted": int(scores[i].argmax()),
            "scores": [float(s) for s in scores[i]],
        }
        for i in range(len(probe))
    ]
    return write_bundle(
        out_dir, model_bytes, preprocessing, labels, metadata, probe, entries
    )
