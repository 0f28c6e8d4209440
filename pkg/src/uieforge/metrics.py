"""Full-reference (PSNR, SSIM) and no-reference (UIQM, UCIQE) image quality metrics.

Images are float arrays in [0, 1] laid out ``(3, H, W)`` (or ``(B, 3, H, W)``
for PSNR/SSIM).  Torch tensors are accepted and converted.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage, signal

from . import color

PSNR_CAP = 100.0
LUMA = (0.299, 0.587, 0.114)

# combination weights of the published metric definitions
UIQM_WEIGHTS = (0.0282, 0.2953, 3.5753)
UCIQE_WEIGHTS = (0.4680, 0.2745, 0.2576)
UIQM_TRIM = (0.1, 0.1)
EME_BLOCK = 8
LOGAMEE_BLOCK = 16
PLIP_GAMMA = 1026.0

COLUMNS = ("psnr", "ssim", "uiqm", "uciqe")


def _np(img) -> np.ndarray:
    if isinstance(img, torch.Tensor):
        img = img.detach().cpu().numpy()
    return np.asarray(img, dtype=np.float64)


def _same(op, a, b):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def psnr(a, b) -> float:
    a, b = _np(a), _np(b)
    _same("psnr", a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gray(img) -> np.ndarray:
    img = _np(img)
    if img.shape[-3] == 1:
        return img[..., 0, :, :]
    r, g, b = img[..., 0, :, :], img[..., 1, :, :], img[..., 2, :, :]
    return LUMA[0] * r + LUMA[1] * g + LUMA[2] * b


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all fully-contained windows of the luma images."""
    a, b = _np(a), _np(b)
    _same("ssim", a, b)
    ga, gb = gray(a), gray(b)
    if min(ga.shape[-2:]) < window:
        raise ValueError(f"ssim: image {ga.shape[-2:]} smaller than the {window}x{window} window")
    w = gaussian_window(window, sigma)
    c1, c2 = k1**2, k2**2
    scores = []
    for x, y in zip(ga.reshape(-1, *ga.shape[-2:]), gb.reshape(-1, *gb.shape[-2:])):
        filt = lambda z: signal.correlate2d(z, w, mode="valid")  # noqa: E731
        mx, my = filt(x), filt(y)
        sxx = filt(x * x) - mx * mx
        syy = filt(y * y) - my * my
        sxy = filt(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# UIQM


def _trimmed_stats(x: np.ndarray, trim=UIQM_TRIM) -> tuple[float, float]:
    x = np.sort(x, axis=None)
    lo, hi = int(trim[0] * x.size), int(trim[1] * x.size)
    x = x[lo : x.size - hi]
    mu = float(np.mean(x))
    return mu, float(np.mean((x - mu) ** 2))


def uicm(img) -> float:
    """Colourfulness from alpha-trimmed statistics of the opponent channels."""
    rgb = _np(img) * 255.0
    r, g, b = rgb
    mu_rg, var_rg = _trimmed_stats(r - g)
    mu_yb, var_yb = _trimmed_stats((r + g) / 2 - b)
    return -0.0268 * math.sqrt(mu_rg**2 + mu_yb**2) + 0.1586 * math.sqrt(var_rg + var_yb)


def sobel_magnitude(ch: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude, scaled so a unit step gives at most 1."""
    sx = ndimage.sobel(ch, axis=1, mode="reflect") / 4.0
    sy = ndimage.sobel(ch, axis=0, mode="reflect") / 4.0
    return np.sqrt((sx * sx + sy * sy) / 2.0)


def _blocks(shape, size):
    nx, ny = math.ceil(shape[0] / size), math.ceil(shape[1] / size)
    for i in range(nx):
        x1 = shape[0] if i == nx - 1 else (i + 1) * size
        for j in range(ny):
            y1 = shape[1] if j == ny - 1 else (j + 1) * size
            yield slice(i * size, x1), slice(j * size, y1)


def eme(ch: np.ndarray, block: int = EME_BLOCK) -> float:
    nx, ny = math.ceil(ch.shape[0] / block), math.ceil(ch.shape[1] / block)
    w = 2.0 / (nx * ny)
    total = 0.0
    for sx, sy in _blocks(ch.shape, block):
        lo, hi = float(ch[sx, sy].min()), float(ch[sx, sy].max())
        total += w * math.log((hi or 1.0) / (lo or 1.0))
    return total


def uism(img) -> float:
    """Sharpness: luma-weighted EME of each channel's edge-weighted map."""
    rgb = _np(img)
    out = 0.0
    for weight, ch in zip(LUMA, rgb):
        edges = np.clip(np.round(255.0 * ch * sobel_magnitude(ch)), 0, 255)
        out += weight * eme(edges)
    return out


def _plip_sum(a, b, g=PLIP_GAMMA):
    return a + b - a * b / g


def _plip_sub(a, b, k=PLIP_GAMMA):
    return k * (a - b) / (k - b)


def _plip_scale(c, a, g=PLIP_GAMMA):
    return g - g * (1 - a / g) ** c


def logamee(ch: np.ndarray, block: int = LOGAMEE_BLOCK) -> float:
    nx, ny = math.ceil(ch.shape[0] / block), math.ceil(ch.shape[1] / block)
    s = 0.0
    for sx, sy in _blocks(ch.shape, block):
        lo, hi = float(ch[sx, sy].min()), float(ch[sx, sy].max())
        bottom = _plip_sum(hi, lo)
        m = 0.0 if bottom == 0 else _plip_sub(hi, lo) / bottom
        if m != 0:
            s += m * math.log(m)
    return _plip_scale(1.0 / (nx * ny), s)


def uiconm(img) -> float:
    return logamee(gray(img) * 255.0)


def uiqm(img, weights=UIQM_WEIGHTS) -> float:
    img = _np(img)
    if img.shape[0] != 3:
        raise ValueError(f"uiqm: expected (3, H, W), got {img.shape}")
    c1, c2, c3 = weights
    return c1 * uicm(img) + c2 * uism(img) + c3 * uiconm(img)


# ---------------------------------------------------------------------------
# UCIQE


def uciqe(img, weights=UCIQE_WEIGHTS) -> float:
    """Chroma spread, luminance contrast and mean saturation on LAB scaled to [0, 1]."""
    img = _np(img)
    if img.shape[0] != 3:
        raise ValueError(f"uciqe: expected (3, H, W), got {img.shape}")
    lab = color.rgb_to_lab(torch.from_numpy(img)).numpy()
    lum = lab[0] / 100.0
    chroma = np.hypot(lab[1], lab[2]) / 100.0
    sigma_c = float(np.std(chroma))
    top = max(1, int(round(0.01 * lum.size)))
    ordered = np.sort(lum, axis=None)
    con_l = float(np.mean(ordered[-top:]) - np.mean(ordered[:top]))
    ok = (chroma != 0) & (lum != 0)
    sat = np.divide(chroma, lum, out=np.zeros_like(chroma), where=ok)
    c1, c2, c3 = weights
    return c1 * sigma_c + c2 * con_l + c3 * float(np.mean(sat))


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricReport:
    rows: dict[str, dict[str, float | None]] = field(default_factory=dict)

    def add(self, name: str, **values) -> None:
        self.rows[name] = {k: values.get(k) for k in COLUMNS}

    def column(self, key: str) -> list[float]:
        return [r[key] for r in self.rows.values() if r.get(key) is not None]

    @property
    def mean(self) -> dict[str, float | None]:
        return {k: (float(np.mean(v)) if (v := self.column(k)) else None) for k in COLUMNS}

    @property
    def std(self) -> dict[str, float | None]:
        return {k: (float(np.std(v)) if (v := self.column(k)) else None) for k in COLUMNS}

    def write_csv(self, path) -> None:
        fmt = lambda v: "" if v is None else f"{v:.6f}"  # noqa: E731
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(("image",) + COLUMNS)
            for name in sorted(self.rows):
                out.writerow([name] + [fmt(self.rows[name][k]) for k in COLUMNS])
            means = self.mean
            out.writerow(["__mean__"] + [fmt(means[k]) for k in COLUMNS])


def score_image(img, reference=None) -> dict[str, float | None]:
    out = {"psnr": None, "ssim": None, "uiqm": uiqm(img), "uciqe": uciqe(img)}
    if reference is not None:
        out["psnr"] = psnr(img, reference)
        out["ssim"] = ssim(img, reference)
    return out
