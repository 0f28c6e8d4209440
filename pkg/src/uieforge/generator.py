"""U-Net generator: multi-scale encoder, spatial transformer bottleneck,
channel-wise multi-scale fusion transformer on the skips, and decoder.

Feature lists are ordered fine to coarse: index 0 is full resolution.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from . import ops
from .layers import Conv, ConvBlock, FeedForward, LayerNorm, Linear


class ConfigError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    patch_size: int = 32
    widths: tuple[int, int, int, int] = (64, 128, 256, 512)
    heads: int = 4
    layers: int = 4
    image_size: int = 256
    width_mult: float = 1.0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.validate()

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(max(1, int(round(w * self.width_mult))) for w in self.widths)

    @property
    def total_channels(self) -> int:
        return sum(self.channels)

    @property
    def tokens(self) -> int:
        """Tokens per scale in the fusion transformer."""
        return (self.image_size // self.patch_size) ** 2

    @property
    def bottleneck_tokens(self) -> int:
        return (self.image_size // 16) ** 2

    def validate(self) -> None:
        s, p = self.image_size, self.patch_size
        if len(self.widths) != 4:
            raise ConfigError(f"widths: need 4 entries, got {self.widths}")
        if not 0 < self.width_mult <= 1:
            raise ConfigError(f"width_mult: must lie in (0, 1], got {self.width_mult}")
        if s <= 0 or s % 16:
            raise ConfigError(f"image_size: {s} is not divisible by 16")
        if p < 8 or p % 8:
            raise ConfigError(f"patch_size: {p} must be a positive multiple of 8")
        if s % p:
            raise ConfigError(f"image_size: {s} is not divisible by patch_size {p}")
        if self.heads < 1 or self.layers < 1:
            raise ConfigError("heads and layers must be >= 1")
        if self.channels[3] % self.heads:
            raise ConfigError(
                f"heads: {self.heads} does not divide bottleneck width {self.channels[3]}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


# ---------------------------------------------------------------------------
# encoder


class Encoder(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        c = cfg.channels
        self.blocks = nn.ModuleList([ConvBlock(3, c[0])] + [ConvBlock(c[i - 1], c[i]) for i in range(1, 4)])
        self.down = nn.ModuleList([Conv(c[i - 1], c[i - 1], 3, stride=2) for i in range(1, 4)])
        self.side = nn.ModuleList([Conv(3, c[i - 1], 1) for i in range(1, 4)])
        self.to_bottleneck = Conv(c[3], c[3], 3, stride=2)

    def forward(self, img):
        feats = [self.blocks[0](img)]
        for i in range(1, 4):
            pooled = ops.avgpool(img, 2**i)
            x = ops.add(self.down[i - 1](feats[-1]), self.side[i - 1](pooled))
            feats.append(self.blocks[i](x))
        return feats, self.to_bottleneck(feats[-1])


# ---------------------------------------------------------------------------
# spatial transformer at the bottleneck


class MultiHeadAttention(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = Linear(width, 3 * width)
        self.out = Linear(width, width)

    def forward(self, x):
        b, n, w = x.shape
        q, k, v = self.qkv(x).reshape(b, n, 3, self.heads, w // self.heads).permute(2, 0, 3, 1, 4)
        attn = ops.softmax(ops.matmul(q, k.transpose(-1, -2)) / math.sqrt(w // self.heads), axis=-1)
        y = ops.matmul(attn, v).transpose(1, 2).reshape(b, n, w)
        return self.out(y)


class TransformerLayer(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.ln1 = LayerNorm(width)
        self.attn = MultiHeadAttention(width, heads)
        self.ln2 = LayerNorm(width)
        self.ffn = FeedForward(width)

    def forward(self, s):
        s = ops.add(self.attn(self.ln1(s)), s)
        return ops.add(self.ffn(self.ln2(s)), s)


class SGFMT(nn.Module):
    """Global spatial attention over the 1/16-scale bottleneck."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        width = cfg.channels[3]
        self.proj = Linear(width, width)
        self.pe = nn.Parameter(torch.zeros(cfg.bottleneck_tokens, width))
        self.layers = nn.ModuleList([TransformerLayer(width, cfg.heads) for _ in range(cfg.layers)])

    def embed(self, fmap):
        b, c, h, w = fmap.shape
        tokens = fmap.flatten(2).transpose(1, 2)
        if tokens.shape[1:] != self.pe.shape:
            raise ops.ShapeError(
                f"sgfmt: token sequence {tuple(tokens.shape[1:])} does not match position embedding {tuple(self.pe.shape)}"
            )
        return ops.add(self.proj(tokens), self.pe)

    def forward(self, fmap):
        b, c, h, w = fmap.shape
        s = self.embed(fmap)
        for layer in self.layers:
            s = layer(s)
        return s.transpose(1, 2).reshape(b, c, h, w)


# ---------------------------------------------------------------------------
# channel-wise multi-scale fusion transformer


def channel_attention(q, k, v):
    """Attention along the channel axis.

    ``q``: (..., d, Ci), ``k`` and ``v``: (..., d, C).  Returns the (..., Ci, d)
    attention output and the (..., Ci, C) probability map.  Similarities are
    scaled by sqrt(C), instance-normalised per map, then softmaxed over C.
    """
    width = k.shape[-1]
    sim = ops.matmul(q.transpose(-1, -2), k) / math.sqrt(width)
    probs = ops.softmax(ops.instance_norm(sim), axis=-1)
    return ops.matmul(probs, v.transpose(-1, -2)), probs


class CMSFFTLayer(nn.Module):
    def __init__(self, channels: tuple[int, ...], heads: int):
        super().__init__()
        total = sum(channels)
        self.heads = heads
        self.wq = nn.ParameterList([_square(heads, c) for c in channels])
        self.wk = _square(heads, total)
        self.wv = _square(heads, total)
        self.norms = nn.ModuleList([LayerNorm(c) for c in channels])
        self.mlps = nn.ModuleList([FeedForward(c) for c in channels])

    def forward(self, seqs):
        s = torch.cat(seqs, dim=-1).unsqueeze(1)  # (B, 1, d, C)
        k = ops.matmul(s, self.wk)  # (B, N, d, C)
        v = ops.matmul(s, self.wv)
        out = []
        for i, si in enumerate(seqs):
            q = ops.matmul(si.unsqueeze(1), self.wq[i])  # (B, N, d, Ci)
            ca, _ = channel_attention(q, k, v)  # (B, N, Ci, d)
            # head mean is Ci x d; transpose to d x Ci before the residual
            cmha = ops.add(ca.mean(dim=1).transpose(-1, -2), q.mean(dim=1))
            out.append(ops.add(cmha, self.mlps[i](self.norms[i](cmha))))
        return out


def _square(heads: int, width: int) -> nn.Parameter:
    bound = 1.0 / math.sqrt(width)
    return nn.Parameter(torch.empty(heads, width, width).uniform_(-bound, bound))


class CMSFFT(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        c = cfg.channels
        self.cfg = cfg
        self.kernels = [cfg.patch_size // 2**i for i in range(4)]
        self.embeds = nn.ModuleList([Conv(c[i], c[i], k, stride=k) for i, k in enumerate(self.kernels)])
        self.layers = nn.ModuleList([CMSFFTLayer(c, cfg.heads) for _ in range(cfg.layers)])

    def sequences(self, feats):
        seqs = [emb(f).flatten(2).transpose(1, 2) for emb, f in zip(self.embeds, feats)]
        if len({s.shape[1] for s in seqs}) != 1:
            raise AssertionError(f"cmsfft: token counts differ across scales: {[s.shape[1] for s in seqs]}")
        return seqs

    def forward(self, feats):
        seqs = self.sequences(feats)
        for layer in self.layers:
            seqs = layer(seqs)
        grid = self.cfg.image_size // self.cfg.patch_size
        fused = []
        for f, o, k in zip(feats, seqs, self.kernels):
            b, d, ci = o.shape
            o = o.transpose(1, 2).reshape(b, ci, grid, grid)
            fused.append(ops.add(f, ops.upsample(o, k)))
        return fused


# ---------------------------------------------------------------------------
# decoder and full model


class DecoderStage(nn.Module):
    def __init__(self, cin: int, skip: int):
        super().__init__()
        self.up = Conv(cin, skip, 3)
        self.block = ConvBlock(2 * skip, skip)

    def forward(self, x, skip):
        x = self.up(ops.upsample2x(x))
        if x.shape[-2:] != skip.shape[-2:] or x.shape[0] != skip.shape[0]:
            raise ops.ShapeError(f"decode: skip {tuple(skip.shape)} does not match decoder map {tuple(x.shape)}")
        return self.block(torch.cat([x, skip], dim=1))


class Decoder(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        c = cfg.channels
        self.stages = nn.ModuleList(
            [DecoderStage(c[3], c[3]), DecoderStage(c[3], c[2]), DecoderStage(c[2], c[1]), DecoderStage(c[1], c[0])]
        )
        self.head = Conv(c[0], 3, 1)

    def forward(self, x, skips):
        """Returns the image and the four stage outputs, fine to coarse."""
        taps = []
        for stage, skip in zip(self.stages, reversed(skips)):
            x = stage(x, skip)
            taps.append(x)
        return ops.sigmoid(self.head(x)), taps[::-1]


@dataclass
class GeneratorOutput:
    image: torch.Tensor
    taps: list = field(default_factory=list)


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig | None = None):
        super().__init__()
        self.cfg = cfg or GeneratorConfig()
        self.encoder = Encoder(self.cfg)
        self.sgfmt = SGFMT(self.cfg)
        self.cmsfft = CMSFFT(self.cfg)
        self.decoder = Decoder(self.cfg)

    def encode(self, img):
        s = self.cfg.image_size
        if img.dim() != 4 or img.shape[1] != 3 or tuple(img.shape[-2:]) != (s, s):
            raise ops.ShapeError(f"generator: expected (B, 3, {s}, {s}) input, got {tuple(img.shape)}")
        return self.encoder(img)

    def forward(self, img) -> GeneratorOutput:
        feats, bottleneck = self.encode(img)
        image, taps = self.decoder(self.sgfmt(bottleneck), self.cmsfft(feats))
        return GeneratorOutput(image, taps)

    @property
    def tap_widths(self) -> tuple[int, ...]:
        return self.cfg.channels
