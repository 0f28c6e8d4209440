"""Synthetic paired data: smooth textured references and an underwater-style degradation.

The degradation follows the usual image formation model
``raw = ref * t + veil * (1 - t)`` with per-channel transmission
``t = exp(-beta * depth)``; red attenuates fastest.
"""
from __future__ import annotations

import numpy as np

from .trainer import PairedSample

BETA = (1.6, 0.55, 0.35)
VEIL = (0.08, 0.42, 0.55)


def reference_image(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((3, size, size))
    base = rng.uniform(0.2, 0.8, size=3)
    img += base[:, None, None]
    img += rng.uniform(-0.3, 0.3, size=(3, 1, 1)) * (xx - 0.5) + rng.uniform(-0.3, 0.3, size=(3, 1, 1)) * (yy - 0.5)
    for _ in range(6):
        cy, cx = rng.uniform(0, 1, 2)
        r = rng.uniform(0.05, 0.25)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
        img += rng.uniform(-0.5, 0.5, size=(3, 1, 1)) * blob
    freq = rng.uniform(2, 6)
    angle = rng.uniform(0, np.pi)
    stripes = np.sin(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy))
    img += 0.08 * rng.uniform(-1, 1, size=(3, 1, 1)) * stripes
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def degrade(ref: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    size = ref.shape[-1]
    yy, xx = np.mgrid[0:size, 0:size] / size
    depth = 0.6 + rng.uniform(0.3, 1.0) * (0.6 * yy + 0.4 * rng.uniform(0, 1) * xx)
    t = np.exp(-np.asarray(BETA)[:, None, None] * depth)
    veil = np.asarray(VEIL)[:, None, None] * rng.uniform(0.8, 1.2)
    return np.clip(ref * t + veil * (1 - t), 0.0, 1.0).astype(np.float32)


def make_pairs(n: int, size: int, seed: int = 0) -> list[PairedSample]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        ref = reference_image(size, rng)
        out.append(PairedSample(degrade(ref, rng), ref, f"synthetic_{i:03d}"))
    return out
