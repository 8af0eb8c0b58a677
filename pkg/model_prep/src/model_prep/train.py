"""Seeded training of the toy classifier plus bundle export.

Training is deliberately brief and narrow: the fixture classifier has to
clear the accuracy floor comfortably while staying vulnerable to strong
color overlays, so attack campaigns against it actually succeed at desk
scale. Longer or wider training washes that vulnerability out.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .bundle import FixtureBundle, write_bundle
from .data import CLASS_COUNT, IMAGE_SIZE, load_dataset
from .net import MEAN, STD, ToyNet, normalize, serialize_net

ACCURACY_FLOOR = 0.6
PROBE_COUNT = 50


def _forward_scores(net: ToyNet, images_u8: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        logits = net(normalize(images_u8))
        return torch.softmax(logits, dim=1).numpy().astype(np.float64)


def _select_probe(
    predictions: np.ndarray, labels: np.ndarray, accuracy: float, count: int
) -> np.ndarray:
    """Pick probe indices whose correct fraction is the closest multiple of
    1/count to the full test accuracy, keeping the bundle's headline number
    reproducible from the probe set alone."""
    want_correct = round(count * accuracy)
    correct_idx = np.flatnonzero(predictions == labels)
    wrong_idx = np.flatnonzero(predictions != labels)
    if len(wrong_idx) < count - want_correct:
        want_correct = count - len(wrong_idx)
    take = list(correct_idx[:want_correct]) + list(wrong_idx[: count - want_correct])
    return np.sort(np.array(take, dtype=np.int64))


def train_toy_classifier(
    dataset: str = "digits",
    seed: int = 0,
    out_dir: str | Path | None = None,
    epochs: int = 1,
    batch_size: int = 64,
    width: int = 8,
    accuracy_floor: float = ACCURACY_FLOOR,
) -> FixtureBundle:
    """Train, evaluate, and export one fixture bundle.

    Raises ValueError when test accuracy lands below the floor; nothing is
    written in that case.
    """
    train_x, train_y, test_x, test_y = load_dataset(dataset, seed)
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)

    net = ToyNet(CLASS_COUNT, width=width)
    optim = torch.optim.Adam(net.parameters(), lr=1e-3)
    loss_fn = torch.nn.CrossEntropyLoss()

    x01_all = torch.from_numpy(
        np.ascontiguousarray(
            train_x.astype(np.float32).transpose(0, 3, 1, 2) / 255.0
        )
    )
    y_all = torch.from_numpy(train_y)
    mean_t = torch.tensor(MEAN).view(1, 3, 1, 1)
    std_t = torch.tensor(STD).view(1, 3, 1, 1)

    net.train()
    n = len(x01_all)
    for _ in range(epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch = (x01_all[idx] - mean_t) / std_t
            optim.zero_grad()
            loss = loss_fn(net(batch), y_all[idx])
            loss.backward()
            optim.step()

    net.eval()
    scores = _forward_scores(net, test_x)
    predictions = scores.argmax(axis=1)
    accuracy = float((predictions == test_y).mean())
    if accuracy < accuracy_floor:
        raise ValueError(
            f"test accuracy {accuracy:.3f} below floor {accuracy_floor}; bundle rejected"
        )

    metadata = {
        "accuracy": accuracy,
        "seed": int(seed),
        "dataset": dataset,
        "classes": CLASS_COUNT,
    }
    preprocessing = {
        "input_size": [IMAGE_SIZE, IMAGE_SIZE],
        "mean": list(MEAN),
        "std": list(STD),
        "channel_order": "rgb",
        "scale": 1.0 / 255.0,
    }
    label_names = [str(i) for i in range(CLASS_COUNT)]

    probe_idx = _select_probe(predictions, test_y, accuracy, PROBE_COUNT)
    probe_entries = [
        {
            "file": f"probe/{j:04d}.png",
            "label": int(test_y[i]),
            "predicted": int(predictions[i]),
            "scores": [float(s) for s in scores[i]],
        }
        for j, i in enumerate(probe_idx)
    ]

    if out_dir is None:
        out_dir = Path(f"bundle_{dataset}_seed{seed}")
    return write_bundle(
        out_dir,
        serialize_net(net, CLASS_COUNT),
        preprocessing,
        label_names,
        metadata,
        test_x[probe_idx],
        probe_entries,
    )
