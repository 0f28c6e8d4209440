"""Built-in verification suites: gradients, colour round trip, shapes, metric oracles.

Each suite returns a :class:`SuiteResult`; ``run_all`` runs the four of them.
The gradient suite resolves ``ops.conv2d`` at call time, so a test can swap
in a broken kernel and watch the suite fail.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from . import color, losses, metrics, ops, oracles
from .discriminator import Discriminator
from .generator import CMSFFTLayer, Generator, GeneratorConfig, TransformerLayer

GRAD_TOL = 1e-5
ROUND_TRIP_TOL = 1e-4
ORACLE_TOL = 1e-6

TINY = dict(image_size=16, patch_size=8, width_mult=0.125, heads=2, layers=1)
# smallest side at which every discriminator block sees a map larger than 1x1
MSG_CONFIG = dict(image_size=32, patch_size=8, width_mult=0.125, heads=2, layers=1)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    failures: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# gradient suite


def _params(module: torch.nn.Module) -> list[torch.Tensor]:
    return [p for p in module.parameters() if p.requires_grad]


def _image(rng, *shape, lo=0.05, hi=0.95):
    return torch.tensor(rng.uniform(lo, hi, size=shape), dtype=torch.float64)


def _sgfmt_layer(rng):
    layer = TransformerLayer(8, 2).double()
    x = torch.tensor(rng.standard_normal((1, 4, 8)), dtype=torch.float64)
    return (lambda x, *_: layer(x)), [x, *_params(layer)], 6


def _cmsfft_layer(rng):
    widths = (2, 4, 8, 16)
    layer = CMSFFTLayer(widths, 2).double()
    seqs = [torch.tensor(rng.standard_normal((1, 4, c)), dtype=torch.float64) for c in widths]

    def fn(*args):
        return torch.cat(layer(list(args[:4])), dim=-1)

    return fn, [*seqs, *_params(layer)], 6


def _pair(rng, side=4):
    return _image(rng, 1, 3, side, side), _image(rng, 1, 3, side, side)


def _loss(name: str) -> Callable:
    def build(rng):
        gen, ref = _pair(rng)
        if name == "loss_rgb_early":
            return (lambda g, r: losses.loss_rgb(g, r, "early")), [gen, ref], None
        if name == "loss_rgb_late":
            return (lambda g, r: losses.loss_rgb(g, r, "late")), [gen, ref], None
        if name == "loss_lab":
            return losses.loss_lab, [gen, ref], None
        if name == "loss_lch":
            return losses.loss_lch, [gen, ref], None
        if name == "loss_perceptual":
            ex = losses.PerceptualExtractor(seed=int(rng.integers(1 << 16))).double()
            gen, ref = _pair(rng, 16)
            return (lambda g, r: losses.loss_perceptual(g, r, ex)), [gen, ref], 24
        if name == "loss_gan":
            real = torch.tensor(rng.standard_normal((2, 1, 2, 2)), dtype=torch.float64)
            fake = torch.tensor(rng.standard_normal((2, 1, 2, 2)), dtype=torch.float64)
            return (lambda a, b: torch.stack(losses.loss_gan(a, b))), [real, fake], None
        raise KeyError(name)

    return build


def _tiny_generator(rng):
    torch.manual_seed(int(rng.integers(1 << 31)))
    gen = Generator(GeneratorConfig(**TINY)).double()
    x = _image(rng, 1, 3, 16, 16)
    return (lambda x, *_: gen(x).image), [x, *_params(gen)], 2


COMPOSITES: dict[str, Callable] = {
    "sgfmt_layer": _sgfmt_layer,
    "cmsfft_layer": _cmsfft_layer,
    **{n: _loss(n) for n in ("loss_rgb_early", "loss_rgb_late", "loss_lab", "loss_lch", "loss_perceptual", "loss_gan")},
    "tiny_generator": _tiny_generator,
}


def check_composite(name: str, seed: int = 0, tolerance: float = GRAD_TOL) -> ops.GradCheckReport:
    rng = np.random.default_rng([seed, 1])
    fn, inputs, probes = COMPOSITES[name](rng)
    return ops.grad_check(fn, inputs, tolerance=tolerance, max_probes=probes, seed=seed)


def gradient_suite(seeds: int = 20, tolerance: float = GRAD_TOL) -> SuiteResult:
    t0 = time.perf_counter()
    worst: dict[str, float] = {}
    failures = []
    cases = [(n, lambda n, s: ops.check_primitive(n, s, tolerance)) for n in sorted(ops.primitives())]
    cases += [(n, lambda n, s: check_composite(n, s, tolerance)) for n in COMPOSITES]
    for name, run in cases:
        for seed in range(seeds):
            rep = run(name, seed)
            worst[name] = max(worst.get(name, 0.0), rep.max_rel_error)
            if not rep.passed:
                failures.append((name, seed, rep.max_rel_error))
    top = max(worst, key=worst.get)
    detail = f"{len(cases)} kernels x {seeds} seeds, worst {top} {worst[top]:.1e}"
    if failures:
        detail += f"; {len(failures)} failing, first {failures[0][0]} (seed {failures[0][1]}, {failures[0][2]:.1e})"
    return SuiteResult("gradient", not failures, detail, time.perf_counter() - t0, failures)


# ---------------------------------------------------------------------------
# colour suite

ANCHORS = {
    "white": ((1.0, 1.0, 1.0), (100.0, 0.0, 0.0), 1e-6),
    "black": ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 1e-6),
    "red": ((1.0, 0.0, 0.0), (53.24, 80.09, 67.20), 0.01),
}


def color_suite(n: int = 10_000, seed: int = 0) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rgb = torch.tensor(rng.uniform(0, 1, size=(3, n, 1)), dtype=torch.float64)
    err = float((color.lab_to_rgb(color.rgb_to_lab(rgb)) - rgb).abs().max())
    failures = [] if err < ROUND_TRIP_TOL else [("round_trip", err)]
    for name, (px, lab, tol) in ANCHORS.items():
        got = color.rgb_to_lab(torch.tensor(px, dtype=torch.float64).view(3, 1, 1)).flatten()
        if float((got - torch.tensor(lab, dtype=torch.float64)).abs().max()) > tol:
            failures.append((name, got.tolist()))
    # achromatic pixels have hue 0; hue differences wrap across the branch cut
    gray = color.rgb_to_lch(torch.full((3, 1, 1), 0.5, dtype=torch.float64)).flatten()
    if abs(float(gray[2])) != 0.0:
        failures.append(("achromatic_hue", float(gray[2])))
    wrapped = float(losses.hue_difference(torch.tensor(-np.pi + 0.01, dtype=torch.float64), torch.tensor(np.pi - 0.01, dtype=torch.float64)))
    if abs(abs(wrapped) - 0.02) > 1e-9:
        failures.append(("hue_wrap", wrapped))
    detail = f"round trip max error {err:.1e} over {n} colours"
    if failures:
        detail += f"; failing {[f[0] for f in failures]}"
    return SuiteResult("color", not failures, detail, time.perf_counter() - t0, failures)


# ---------------------------------------------------------------------------
# shape suite


def expected_shapes(cfg: GeneratorConfig) -> dict[str, tuple]:
    s, c = cfg.image_size, cfg.channels
    d = cfg.tokens
    return {
        **{f"encoder.F{i + 1}": (1, c[i], s >> i, s >> i) for i in range(4)},
        "bottleneck": (1, c[3], s // 16, s // 16),
        "sgfmt.sequence": (1, (s // 16) ** 2, c[3]),
        "sgfmt": (1, c[3], s // 16, s // 16),
        **{f"cmsfft.T{i + 1}": (1, d, c[i]) for i in range(4)},
        "cmsfft.concat": (1, d, cfg.total_channels),
        **{f"cmsfft.O{i + 1}": (1, c[i], s >> i, s >> i) for i in range(4)},
        **{f"decoder.tap{i + 1}": (1, c[i], s >> i, s >> i) for i in range(4)},
        "output": (1, 3, s, s),
        "discriminator": (1, 1, s // 16, s // 16),
    }


def measured_shapes(cfg: GeneratorConfig, seed: int = 0) -> dict[str, tuple]:
    torch.manual_seed(seed)
    gen, disc = Generator(cfg), Discriminator(cfg)
    x = torch.rand(1, 3, cfg.image_size, cfg.image_size)
    got = {}
    with torch.no_grad():
        feats, bottleneck = gen.encode(x)
        for i, f in enumerate(feats):
            got[f"encoder.F{i + 1}"] = tuple(f.shape)
        got["bottleneck"] = tuple(bottleneck.shape)
        got["sgfmt.sequence"] = tuple(gen.sgfmt.embed(bottleneck).shape)
        got["sgfmt"] = tuple(gen.sgfmt(bottleneck).shape)
        seqs = gen.cmsfft.sequences(feats)
        for i, t in enumerate(seqs):
            got[f"cmsfft.T{i + 1}"] = tuple(t.shape)
        got["cmsfft.concat"] = tuple(torch.cat(seqs, dim=-1).shape)
        for i, o in enumerate(gen.cmsfft(feats)):
            got[f"cmsfft.O{i + 1}"] = tuple(o.shape)
        out = gen(x)
        for i, t in enumerate(out.taps):
            got[f"decoder.tap{i + 1}"] = tuple(t.shape)
        got["output"] = tuple(out.image.shape)
        got["discriminator"] = tuple(disc(out.image, out.taps).shape)
    return got


def shape_suite(cfg: GeneratorConfig | None = None) -> SuiteResult:
    t0 = time.perf_counter()
    cfg = cfg or GeneratorConfig()
    want, got = expected_shapes(cfg), measured_shapes(cfg)
    failures = [(k, got.get(k), v) for k, v in want.items() if got.get(k) != v]
    seq = want["sgfmt.sequence"]
    detail = (
        f"{len(want)} shapes at side {cfg.image_size}: d={cfg.tokens} tokens, CMSFFT {cfg.tokens}x{cfg.total_channels}, "
        f"SGFMT {seq[1]}x{seq[2]}, logits {want['discriminator'][2]}x{want['discriminator'][3]}"
    )
    if failures:
        detail += f"; mismatch {failures[0][0]}: got {failures[0][1]}, want {failures[0][2]}"
    return SuiteResult("shape", not failures, detail, time.perf_counter() - t0, failures)


# ---------------------------------------------------------------------------
# metric / loss oracle suite


def oracle_cases(rng, side: int = 16) -> dict[str, tuple[float, float]]:
    """(fast, oracle) values for one random image pair."""
    a = rng.uniform(0, 1, size=(3, side, side))
    b = np.clip(a + rng.normal(0, 0.15, size=a.shape), 0, 1)
    ta, tb = torch.tensor(a[None]), torch.tensor(b[None])
    real, fake = rng.normal(0, 2, size=(1, 1, 4, 4)), rng.normal(0, 2, size=(1, 1, 4, 4))
    d, g = losses.loss_gan(torch.tensor(real), torch.tensor(fake))
    od, og = oracles.loss_gan(real.ravel(), fake.ravel())
    return {
        "loss_lab": (float(losses.loss_lab(ta, tb)), oracles.loss_lab(a, b)),
        "loss_lch": (float(losses.loss_lch(ta, tb)), oracles.loss_lch(a, b)),
        "loss_gan_d": (float(d), od),
        "loss_gan_g": (float(g), og),
        "ssim": (metrics.ssim(a, b), oracles.ssim(a, b)),
        "uiqm": (metrics.uiqm(a), oracles.uiqm(a)),
        "uciqe": (metrics.uciqe(a), oracles.uciqe(a)),
    }


def oracle_suite(images: int = 50, seed: int = 0, side: int = 16) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(images):
        for name, (fast, ref) in oracle_cases(rng, side).items():
            worst[name] = max(worst.get(name, 0.0), abs(fast - ref))
    failures = [(k, v) for k, v in worst.items() if not v < ORACLE_TOL]
    top = max(worst, key=worst.get)
    detail = f"{len(worst)} quantities x {images} images, worst {top} {worst[top]:.1e}"
    return SuiteResult("metric-oracle", not failures, detail, time.perf_counter() - t0, failures)


def msg_tap_gradients(seed: int, cfg: GeneratorConfig | None = None) -> list[float]:
    """Norm of the generator adversarial loss gradient at each decoder tap."""
    cfg = cfg or GeneratorConfig(**MSG_CONFIG)
    torch.manual_seed(seed)
    gen, disc = Generator(cfg), Discriminator(cfg)
    out = gen(torch.rand(2, 3, cfg.image_size, cfg.image_size))
    for t in out.taps:
        t.retain_grad()
    losses.generator_adversarial(disc(out.image, out.taps)).backward()
    return [float(t.grad.norm()) for t in out.taps]


def run_all(seeds: int = 20) -> list[SuiteResult]:
    return [gradient_suite(seeds), color_suite(), shape_suite(), oracle_suite()]
