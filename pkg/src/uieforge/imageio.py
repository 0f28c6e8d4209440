"""8-bit PNG/JPEG reading and writing as float (3, H, W) arrays in [0, 1]."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

EXTENSIONS = (".png", ".jpg", ".jpeg")


def list_images(directory) -> list[Path]:
    d = Path(directory)
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in EXTENSIONS)


def to_array(im: Image.Image) -> np.ndarray:
    arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def to_pil(arr: np.ndarray) -> Image.Image:
    arr = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    return Image.fromarray(np.round(arr.transpose(1, 2, 0) * 255.0).astype(np.uint8), "RGB")


def load_image(path, size: int | None = None) -> np.ndarray:
    with Image.open(path) as im:
        im.load()
        if size is not None and im.size != (size, size):
            im = im.convert("RGB").resize((size, size), Image.BILINEAR)
        return to_array(im)


def save_image(path, arr: np.ndarray) -> None:
    to_pil(arr).save(path, format="PNG")


def resize(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a float (3, H, W) array, per channel in float precision."""
    if arr.shape[1:] == (height, width):
        return np.asarray(arr, dtype=np.float32)
    chans = [Image.fromarray(np.asarray(c, dtype=np.float32), "F").resize((width, height), Image.BILINEAR) for c in arr]
    return np.clip(np.stack([np.asarray(c) for c in chans]), 0.0, 1.0).astype(np.float32)
