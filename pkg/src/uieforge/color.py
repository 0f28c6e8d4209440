"""Differentiable sRGB <-> CIELAB <-> LCH conversions and soft quantisation.

Images are ``(..., 3, H, W)`` tensors; LAB/LCH results keep that layout with
channels ordered (L, A, B) and (L, C, H).  D65 white, standard sRGB transfer.
"""
from __future__ import annotations

import math

import torch

from . import ops

# sRGB primaries -> XYZ (D65)
_RGB2XYZ = (
    (0.4124564, 0.3575761, 0.1804375),
    (0.2126729, 0.7151522, 0.0721750),
    (0.0193339, 0.1191920, 0.9503041),
)
# white point = image of (1, 1, 1), so white maps to exactly a = b = 0
_WHITE = tuple(sum(row) for row in _RGB2XYZ)

_DELTA = 6.0 / 29.0
_KINK = _DELTA**3

L_RANGE = (0.0, 100.0)
AB_RANGE = (-128.0, 127.0)
DEFAULT_BINS = 256
# chroma below this is rounding noise from the white-point matrices; such pixels are grey
ACHROMATIC_CHROMA = 1e-9


def _channels(img: torch.Tensor, op: str) -> torch.Tensor:
    if img.dim() < 3 or img.shape[-3] != 3:
        raise ops.ShapeError(f"{op}: expected 3 channels on axis -3, got shape {tuple(img.shape)}")
    return img


def _mix(img: torch.Tensor, matrix) -> torch.Tensor:
    m = torch.tensor(matrix, dtype=img.dtype, device=img.device)
    return torch.einsum("ij,...jhw->...ihw", m, img)


def srgb_to_linear(c: torch.Tensor) -> torch.Tensor:
    lo = c / 12.92
    hi = ((torch.clamp(c, min=0.04045) + 0.055) / 1.055) ** 2.4
    return torch.where(c <= 0.04045, lo, hi)


def linear_to_srgb(c: torch.Tensor) -> torch.Tensor:
    lo = c * 12.92
    hi = 1.055 * torch.clamp(c, min=0.0031308) ** (1 / 2.4) - 0.055
    return torch.where(c <= 0.0031308, lo, hi)


def _f(t: torch.Tensor) -> torch.Tensor:
    lin = t / (3 * _DELTA**2) + 4.0 / 29.0
    cube = torch.clamp(t, min=_KINK) ** (1.0 / 3.0)
    return torch.where(t > _KINK, cube, lin)


def _f_inv(t: torch.Tensor) -> torch.Tensor:
    return torch.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_to_lab(img: torch.Tensor) -> torch.Tensor:
    img = torch.clamp(_channels(img, "rgb_to_lab"), 0.0, 1.0)
    xyz = _mix(srgb_to_linear(img), _RGB2XYZ)
    white = torch.tensor(_WHITE, dtype=img.dtype, device=img.device).view(3, 1, 1)
    fx, fy, fz = _f(xyz / white).unbind(dim=-3)
    L = 116.0 * fy - 16.0
    A = 500.0 * (fx - fy)
    B = 200.0 * (fy - fz)
    return torch.stack((L, A, B), dim=-3)


def lab_to_rgb(lab: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`rgb_to_lab`; out-of-gamut colours are clamped."""
    L, A, B = _channels(lab, "lab_to_rgb").unbind(dim=-3)
    fy = (L + 16.0) / 116.0
    fx = fy + A / 500.0
    fz = fy - B / 200.0
    white = torch.tensor(_WHITE, dtype=lab.dtype, device=lab.device).view(3, 1, 1)
    xyz = _f_inv(torch.stack((fx, fy, fz), dim=-3)) * white
    inv = torch.linalg.inv(torch.tensor(_RGB2XYZ, dtype=torch.float64)).to(lab.dtype)
    lin = torch.einsum("ij,...jhw->...ihw", inv, xyz)
    return torch.clamp(linear_to_srgb(lin), 0.0, 1.0)


def lab_to_lch(lab: torch.Tensor) -> torch.Tensor:
    L, A, B = _channels(lab, "lab_to_lch").unbind(dim=-3)
    C = ops.sqrt(A * A + B * B)
    H = ops.atan2(B, A)
    H = torch.where(C < ACHROMATIC_CHROMA, torch.zeros_like(H), H)
    return torch.stack((L, C, H), dim=-3)


def rgb_to_lch(img: torch.Tensor) -> torch.Tensor:
    return lab_to_lch(rgb_to_lab(img))


def wrap_angle(h: torch.Tensor) -> torch.Tensor:
    """Map angles into (-pi, pi]."""
    return math.pi - torch.remainder(math.pi - h, 2 * math.pi)


def bin_centers(lo: float, hi: float, bins: int = DEFAULT_BINS) -> torch.Tensor:
    return torch.linspace(lo, hi, bins, dtype=torch.float64)


def quantize_soft(channel: torch.Tensor, lo: float, hi: float, bins: int = DEFAULT_BINS) -> torch.Tensor:
    """Soft histogram assignment with a triangular kernel.

    Returns ``channel.shape + (bins,)``.  Bin centres are evenly spaced with
    the first at ``lo`` and the last at ``hi``; each value splits its unit
    mass linearly between the two centres that bracket it.
    """
    if bins < 2 or not hi > lo:
        raise ValueError(f"quantize_soft needs bins >= 2 and hi > lo, got {bins}, [{lo}, {hi}]")
    width = (hi - lo) / (bins - 1)
    pos = (torch.clamp(channel, lo, hi) - lo) / width
    centers = torch.arange(bins, dtype=channel.dtype, device=channel.device)
    return torch.relu(1.0 - torch.abs(pos.unsqueeze(-1) - centers))
