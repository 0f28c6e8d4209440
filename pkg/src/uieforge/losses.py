"""Training objectives: RGB, LAB, LCH, perceptual, adversarial and their weighted sum."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import torch
from torch import nn

from . import color, ops

EPS = 1e-8


class NonFiniteLoss(FloatingPointError):
    """A loss component became NaN or infinite."""

    def __init__(self, part: str, value):
        super().__init__(f"loss component {part!r} is not finite ({value})")
        self.part = part


@dataclass
class LossWeights:
    lab: float = 0.001
    lch: float = 1.0
    rgb: float = 0.1
    perceptual: float = 100.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {name} must be nonnegative, got {v}")


@dataclass
class LossReport:
    rgb: float = 0.0
    lab: float = 0.0
    lch: float = 0.0
    perceptual: float = 0.0
    adversarial_g: float = 0.0
    adversarial_d: float = 0.0
    total: float = 0.0


def _same(op: str, a, b):
    if a.shape != b.shape:
        raise ops.ShapeError(f"{op}: incompatible shapes {tuple(a.shape)} and {tuple(b.shape)}")


def loss_rgb(gen, ref, phase: str = "early"):
    """Squared error before the switch epoch, absolute error after it."""
    _same("loss_rgb", gen, ref)
    diff = ops.sub(gen, ref)
    if phase == "early":
        return ops.mean(ops.square(diff))
    if phase == "late":
        return ops.mean(ops.absolute(diff))
    raise ValueError(f"phase must be 'early' or 'late', got {phase!r}")


def soft_cross_entropy(target, pred, lo: float, hi: float, bins: int = color.DEFAULT_BINS):
    """Per-pixel -sum_k Q(target)_k log Q(pred)_k, logs clamped at EPS."""
    qt = color.quantize_soft(target, lo, hi, bins)
    qp = color.quantize_soft(pred, lo, hi, bins)
    return -ops.total(qt * ops.log_eps(qp, EPS), axis=-1)


def loss_lab(gen, ref, bins: int = color.DEFAULT_BINS):
    _same("loss_lab", gen, ref)
    Lg, Ag, Bg = color.rgb_to_lab(gen).unbind(dim=-3)
    Ly, Ay, By = color.rgb_to_lab(ref).unbind(dim=-3)
    per_pixel = (
        ops.square(ops.sub(Ly, Lg))
        + soft_cross_entropy(Ay, Ag, *color.AB_RANGE, bins)
        + soft_cross_entropy(By, Bg, *color.AB_RANGE, bins)
    )
    return ops.mean(per_pixel)


def hue_difference(h_ref, h_gen):
    return color.wrap_angle(ops.sub(h_ref, h_gen))


def loss_lch(gen, ref, bins: int = color.DEFAULT_BINS):
    _same("loss_lch", gen, ref)
    Lg, Cg, Hg = color.rgb_to_lch(gen).unbind(dim=-3)
    Ly, Cy, Hy = color.rgb_to_lch(ref).unbind(dim=-3)
    per_pixel = (
        soft_cross_entropy(Ly, Lg, *color.L_RANGE, bins)
        + ops.square(ops.sub(Cy, Cg))
        + ops.square(hue_difference(Hy, Hg))
    )
    return ops.mean(per_pixel)


class PerceptualExtractor(nn.Module):
    """Frozen strided conv pyramid with seed-determined weights.

    Stand-in for a pretrained classification backbone; real weights can be
    dropped in with :meth:`load` (names under ``perceptual/``).
    """

    def __init__(self, seed: int = 0, widths=(16, 32, 64, 128)):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        convs, cin = [], 3
        for w in widths:
            bound = 1.0 / math.sqrt(cin * 9)
            weight = (torch.rand(w, cin, 3, 3, generator=gen) * 2 - 1) * bound
            convs.append(nn.ParameterDict({"weight": nn.Parameter(weight), "bias": nn.Parameter(torch.zeros(w))}))
            cin = w
        self.stages = nn.ModuleList(convs)
        self.requires_grad_(False)

    def forward(self, x):
        side = 2 ** len(self.stages)
        if x.dim() != 4 or x.shape[1] != 3 or x.shape[-1] % side or x.shape[-2] % side:
            raise ops.ShapeError(f"perceptual extractor: input {tuple(x.shape)} needs 3 channels and sides divisible by {side}")
        taps = []
        for p in self.stages:
            x = ops.leaky_relu(ops.conv2d(x, p["weight"], p["bias"], stride=2))
            taps.append(x)
        return taps

    def load(self, path) -> None:
        from .checkpoint import load_checkpoint

        tensors, _ = load_checkpoint(path)
        state = {k[len("perceptual/"):]: v for k, v in tensors.items() if k.startswith("perceptual/")}
        self.load_state_dict(state)
        self.requires_grad_(False)


def loss_perceptual(gen, ref, extractor):
    """Mean over extractor taps of the feature-space mean squared error."""
    _same("loss_perceptual", gen, ref)
    fg, fr = extractor(gen), extractor(ref)
    if isinstance(fg, torch.Tensor):
        fg, fr = [fg], [fr]
    terms = [ops.mean(ops.square(ops.sub(a, b))) for a, b in zip(fg, fr)]
    return ops.mean(torch.stack(terms))


def loss_gan(real_logits, fake_logits):
    """Returns ``(d_loss, g_loss)``; the generator side is non-saturating."""
    _same("loss_gan", real_logits, fake_logits)
    d_loss = -ops.mean(ops.log_sigmoid(real_logits)) - ops.mean(ops.log_sigmoid(-fake_logits))
    return d_loss, generator_adversarial(fake_logits)


def generator_adversarial(fake_logits):
    return -ops.mean(ops.log_sigmoid(fake_logits))


_PARTS = ("adversarial_g", "lab", "lch", "rgb", "perceptual")


def total_generator_loss(parts, weights: LossWeights | None = None):
    """adversarial_g + lab*w.lab + lch*w.lch + rgb*w.rgb + perceptual*w.perceptual."""
    w = weights or LossWeights()
    if isinstance(parts, LossReport):
        parts = asdict(parts)
    if not isinstance(parts, Mapping):
        raise TypeError("parts must be a LossReport or a mapping")
    for name in _PARTS:
        v = parts[name]
        finite = torch.isfinite(v).all() if isinstance(v, torch.Tensor) else math.isfinite(v)
        if not finite:
            raise NonFiniteLoss(name, v)
    return (
        parts["adversarial_g"]
        + w.lab * parts["lab"]
        + w.lch * parts["lch"]
        + w.rgb * parts["rgb"]
        + w.perceptual * parts["perceptual"]
    )
