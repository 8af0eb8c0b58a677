"""Raster image I/O: PNG/JPEG loading, deterministic PNG output, PNG bytes."""
from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path: str | Path) -> np.ndarray:
    """Load an image file as an HxWx3 uint8 RGB array.

    PNG and JPEG both ingest; anything Pillow can open and convert to RGB
    is accepted.
    """
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def _check_raster(pixels: np.ndarray) -> np.ndarray:
    pixels = np.ascontiguousarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValueError(
            f"expected HxWx3 uint8 array, got shape {pixels.shape} dtype {pixels.dtype}"
        )
    return pixels


def save_png(pixels: np.ndarray, path: str | Path) -> None:
    """Write lossless PNG. Output bytes depend only on pixel content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_check_raster(pixels), mode="RGB").save(path, format="PNG")


def png_bytes(pixels: np.ndarray) -> bytes:
    """Encode to PNG in memory (wire format for remote oracles)."""
    buf = io.BytesIO()
    Image.fromarray(_check_raster(pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_base64(pixels: np.ndarray) -> str:
    return base64.b64encode(png_bytes(pixels)).decode("ascii")


def decode_png_base64(data: str) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    with Image.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
