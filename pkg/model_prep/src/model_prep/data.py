"""Fixture dataset: the classic 10-class handwritten digits set, upscaled
from 8x8 grayscale to 32x32 RGB so the classifier sees film-sized inputs.
"""
from __future__ import annotations

import numpy as np
from PIL import Image
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split

DATASETS = ("digits",)
IMAGE_SIZE = 32
CLASS_COUNT = 10


def _upscale_rgb(img8: np.ndarray) -> np.ndarray:
    """8x8 float [0,16] -> 32x32x3 uint8, nearest-neighbor blocks."""
    gray = np.clip(np.floor(img8 / 16.0 * 255.0 + 0.5), 0, 255).astype(np.uint8)
    pil = Image.fromarray(gray, mode="L").resize(
        (IMAGE_SIZE, IMAGE_SIZE), Image.NEAREST
    )
    up = np.asarray(pil, dtype=np.uint8)
    return np.repeat(up[:, :, None], 3, axis=2)


def load_dataset(name: str, seed: int):
    """Returns (train_x, train_y, test_x, test_y); images HxWx3 uint8.

    The split is a deterministic function of the seed, so two seeds yield
    models trained on different subsets.
    """
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}; supported: {', '.join(DATASETS)}")
    raw = load_digits()
    images = np.stack([_upscale_rgb(img) for img in raw.images])
    labels = raw.target.astype(np.int64)
    train_x, test_x, train_y, test_y = train_test_split(
        images, labels, test_size=0.25, random_state=seed, stratify=labels
    )
    return train_x, train_y, test_x, test_y
