"""Multi-scale-gradient patch discriminator.

Block ``j`` runs at scale ``1/2**j`` and sees three inputs concatenated on the
channel axis: the previous block's output (the candidate image itself for the
first block), the matching tap, and a 1x1 projection of the candidate pooled
to that scale.  For generated candidates the taps are the decoder stage
outputs; for references they come from :meth:`Discriminator.real_side_taps`.
"""
from __future__ import annotations

import torch
from torch import nn

from . import ops
from .generator import ConfigError, GeneratorConfig
from .layers import Conv, ConvUnit


class DiscriminatorBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.units = nn.Sequential(ConvUnit(cin, cout), ConvUnit(cout, cout), ConvUnit(cout, cout, stride=2))

    def forward(self, x):
        return self.units(x)


class Discriminator(nn.Module):
    def __init__(self, cfg: GeneratorConfig | None = None):
        super().__init__()
        self.cfg = cfg or GeneratorConfig()
        if self.cfg.image_size < 32:
            # the last block would instance-normalise a 1x1 map, which is identically zero
            raise ConfigError(f"image_size: discriminator needs >= 32, got {self.cfg.image_size}")
        taps = self.cfg.channels
        self.tap_widths = taps
        self.image_proj = nn.ModuleList([Conv(3, w, 1) for w in taps])
        self.reference_proj = nn.ModuleList([Conv(3, w, 1) for w in taps])
        blocks, prev = [], 3
        for w in taps:
            blocks.append(DiscriminatorBlock(prev + 2 * w, w))
            prev = w
        self.blocks = nn.ModuleList(blocks)
        self.head = Conv(prev, 1, 1)

    def real_side_taps(self, reference):
        """Tap stand-ins for a reference image: pooled, then 1x1-projected."""
        self._check_image(reference)
        return [proj(ops.avgpool(reference, 2**j)) for j, proj in enumerate(self.reference_proj)]

    def _check_image(self, img):
        s = self.cfg.image_size
        if img.dim() != 4 or img.shape[1] != 3 or tuple(img.shape[-2:]) != (s, s):
            raise ops.ShapeError(f"discriminator: expected (B, 3, {s}, {s}) image, got {tuple(img.shape)}")

    def forward(self, image, taps):
        """Patch logits at 1/16 scale, shape (B, 1, S/16, S/16); no sigmoid."""
        self._check_image(image)
        if taps is None or len(taps) != 4 or any(t is None for t in taps):
            raise ValueError("discriminator: need four scale taps (fine to coarse)")
        x = image
        for j, (block, proj, tap) in enumerate(zip(self.blocks, self.image_proj, taps)):
            side = self.cfg.image_size // 2**j
            if tuple(tap.shape[-3:]) != (self.tap_widths[j], side, side):
                raise ops.ShapeError(
                    f"discriminator: tap {j} has shape {tuple(tap.shape)}, "
                    f"expected (B, {self.tap_widths[j]}, {side}, {side})"
                )
            x = block(torch.cat([x, tap, proj(ops.avgpool(image, 2**j))], dim=1))
        return self.head(x)
