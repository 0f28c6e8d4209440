"""Differentiable primitives every model and loss in the package is written against.

The kernels are thin, shape-checked wrappers over torch autograd, plus two
hand-written reverse passes (``sqrt`` and ``atan2``) whose stock versions
produce NaN at the origin.  ``grad_check`` is an independent central-difference
verifier that treats any kernel as a black box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

LEAKY_SLOPE = 0.2
NORM_EPS = 1e-5
LOG_EPS = 1e-8


class ShapeError(ValueError):
    """Raised when a primitive receives operands of incompatible shape."""


def _fail(op: str, *shapes) -> ShapeError:
    pretty = " and ".join(str(tuple(s)) for s in shapes)
    return ShapeError(f"{op}: incompatible shapes {pretty}")


def _broadcast(op: str, a: torch.Tensor, b: torch.Tensor) -> None:
    try:
        torch.broadcast_shapes(torch.as_tensor(a).shape, torch.as_tensor(b).shape)
    except RuntimeError:
        raise _fail(op, torch.as_tensor(a).shape, torch.as_tensor(b).shape) from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    _broadcast("add", a, b)
    return a + b


def sub(a, b):
    _broadcast("sub", a, b)
    return a - b


def mul(a, b):
    _broadcast("mul", a, b)
    return a * b


def div(a, b):
    _broadcast("div", a, b)
    return a / b


def square(x):
    return x * x


def absolute(x):
    return x.abs()


def log_eps(x, eps: float = LOG_EPS):
    """Natural log with the argument clamped from below at ``eps``."""
    return torch.log(torch.clamp(x, min=eps))


class _SafeSqrt(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        y = torch.sqrt(torch.clamp(x, min=0.0))
        ctx.save_for_backward(y)
        return y

    @staticmethod
    def backward(ctx, grad):
        (y,) = ctx.saved_tensors
        safe = torch.where(y > 0, y, torch.ones_like(y))
        return torch.where(y > 0, grad / (2.0 * safe), torch.zeros_like(grad))


def sqrt(x):
    """Square root whose derivative at 0 is defined as 0 instead of inf."""
    return _SafeSqrt.apply(x)


class _SafeAtan2(torch.autograd.Function):
    @staticmethod
    def forward(ctx, y, x):
        ctx.save_for_backward(y, x)
        out = torch.atan2(y, x)
        # range (-pi, pi]; signed zeros would otherwise give -pi
        out = torch.where(out <= -math.pi, out + 2.0 * math.pi, out)
        origin = (x == 0) & (y == 0)
        return torch.where(origin, torch.zeros_like(out), out)

    @staticmethod
    def backward(ctx, grad):
        y, x = ctx.saved_tensors
        r2 = x * x + y * y
        ok = r2 > 0
        r2 = torch.where(ok, r2, torch.ones_like(r2))
        zero = torch.zeros_like(grad)
        gy = torch.where(ok, grad * x / r2, zero)
        gx = torch.where(ok, -grad * y / r2, zero)
        return gy, gx


def atan2(y, x):
    """Two-argument arctangent in (-pi, pi]; 0 at the origin with zero gradient."""
    _broadcast("atan2", y, x)
    y, x = torch.broadcast_tensors(y, x)
    return _SafeAtan2.apply(y, x)


# ---------------------------------------------------------------------------
# activations, reductions, normalisation


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    return F.leaky_relu(x, slope)


def sigmoid(x):
    return torch.sigmoid(x)


def log_sigmoid(x):
    return F.logsigmoid(x)


def softmax(x, axis: int = -1):
    return torch.softmax(x, dim=axis)


def mean(x, axis=None):
    return x.mean() if axis is None else x.mean(dim=axis)


def total(x, axis=None):
    return x.sum() if axis is None else x.sum(dim=axis)


def layer_norm(x, weight=None, bias=None, eps: float = NORM_EPS):
    """Normalise over the last axis, then apply the optional affine map."""
    width = x.shape[-1]
    for name, p in (("weight", weight), ("bias", bias)):
        if p is not None and tuple(p.shape) != (width,):
            raise _fail(f"layer_norm {name}", x.shape, p.shape)
    return F.layer_norm(x, (width,), weight, bias, eps)


def instance_norm(x, eps: float = NORM_EPS):
    """Zero mean, unit variance over every axis after (batch, channel)."""
    if x.dim() < 3:
        raise ShapeError(f"instance_norm: need rank >= 3, got {tuple(x.shape)}")
    axes = tuple(range(2, x.dim()))
    mu = x.mean(dim=axes, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=axes, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps)


# ---------------------------------------------------------------------------
# linear algebra and spatial kernels


def matmul(a, b):
    if a.dim() < 2 or b.dim() < 2 or a.shape[-1] != b.shape[-2]:
        raise _fail("matmul", a.shape, b.shape)
    try:
        torch.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except RuntimeError:
        raise _fail("matmul", a.shape, b.shape) from None
    return a @ b


def _same_pad(size: int, k: int, s: int) -> tuple[int, int]:
    out = -(-size // s)
    need = max((out - 1) * s + k - size, 0)
    return need // 2, need - need // 2


def conv2d(x, weight, bias=None, stride: int = 1):
    """2-D convolution with "same" padding: output side = ceil(input / stride)."""
    if x.dim() != 4 or weight.dim() != 4 or x.shape[1] != weight.shape[1]:
        raise _fail("conv2d", x.shape, weight.shape)
    if bias is not None and tuple(bias.shape) != (weight.shape[0],):
        raise _fail("conv2d bias", weight.shape, bias.shape)
    kh, kw = weight.shape[-2:]
    top, bottom = _same_pad(x.shape[-2], kh, stride)
    left, right = _same_pad(x.shape[-1], kw, stride)
    if top == bottom and left == right:
        return F.conv2d(x, weight, bias, stride=stride, padding=(top, left))
    x = F.pad(x, (left, right, top, bottom))
    return F.conv2d(x, weight, bias, stride=stride)


def upsample2x(x):
    """Nearest-neighbour x2 upsampling of the two trailing axes."""
    if x.dim() != 4:
        raise ShapeError(f"upsample2x: need rank 4, got {tuple(x.shape)}")
    return x.repeat_interleave(2, dim=-2).repeat_interleave(2, dim=-1)


def upsample(x, factor: int):
    if factor == 1:
        return x
    return x.repeat_interleave(factor, dim=-2).repeat_interleave(factor, dim=-1)


def avgpool2x(x):
    if x.dim() != 4 or x.shape[-1] % 2 or x.shape[-2] % 2:
        raise ShapeError(f"avgpool2x: need rank 4 with even sides, got {tuple(x.shape)}")
    return F.avg_pool2d(x, 2)


def avgpool(x, factor: int):
    if factor == 1:
        return x
    if x.dim() != 4 or x.shape[-1] % factor or x.shape[-2] % factor:
        raise ShapeError(f"avgpool: sides of {tuple(x.shape)} not divisible by {factor}")
    return F.avg_pool2d(x, factor)


# ---------------------------------------------------------------------------
# gradient checking

# name -> (kernel, input factory). Factories take a numpy Generator and return
# float64 leaf tensors; inputs keep away from kinks where that is cheap.
def _pos(rng, *shape):
    return rng.uniform(0.2, 2.0, size=shape)


def _probe_inputs() -> dict[str, tuple[Callable, Callable]]:
    n = lambda rng, *s: rng.standard_normal(s)  # noqa: E731
    return {
        "conv2d": (lambda x, w, b: conv2d(x, w, b), lambda r: (n(r, 1, 2, 8, 8), n(r, 3, 2, 3, 3), n(r, 3))),
        "conv2d_stride2": (lambda x, w: conv2d(x, w, stride=2), lambda r: (n(r, 1, 2, 8, 8), n(r, 2, 2, 3, 3))),
        "conv2d_patch": (lambda x, w: conv2d(x, w, stride=4), lambda r: (n(r, 1, 2, 8, 8), n(r, 3, 2, 4, 4))),
        "upsample2x": (upsample2x, lambda r: (n(r, 1, 2, 3, 3),)),
        "avgpool2x": (avgpool2x, lambda r: (n(r, 1, 2, 4, 4),)),
        "matmul": (matmul, lambda r: (n(r, 4, 5), n(r, 5, 3))),
        "add": (add, lambda r: (n(r, 3, 4), n(r, 4))),
        "sub": (sub, lambda r: (n(r, 3, 4), n(r, 3, 4))),
        "mul": (mul, lambda r: (n(r, 3, 4), n(r, 3, 4))),
        "div": (div, lambda r: (n(r, 3, 4), _pos(r, 3, 4))),
        "leaky_relu": (leaky_relu, lambda r: (n(r, 4, 5),)),
        "sigmoid": (sigmoid, lambda r: (n(r, 4, 5),)),
        "softmax": (lambda x: softmax(x, axis=-1), lambda r: (n(r, 3, 6),)),
        "softmax_axis0": (lambda x: softmax(x, axis=0), lambda r: (n(r, 3, 6),)),
        "layer_norm": (layer_norm, lambda r: (n(r, 3, 6), n(r, 6), n(r, 6))),
        "instance_norm": (instance_norm, lambda r: (n(r, 2, 3, 4, 4),)),
        "mean": (mean, lambda r: (n(r, 3, 4),)),
        "sum": (total, lambda r: (n(r, 3, 4),)),
        "square": (square, lambda r: (n(r, 3, 4),)),
        "abs": (absolute, lambda r: (n(r, 3, 4),)),
        "log_eps": (log_eps, lambda r: (_pos(r, 3, 4),)),
        "atan2": (atan2, lambda r: (n(r, 3, 4), n(r, 3, 4))),
        "sqrt": (sqrt, lambda r: (_pos(r, 3, 4),)),
    }


PRIMITIVES = _probe_inputs()


def primitives() -> set[str]:
    """Names of the differentiable kernels covered by the gradient suite."""
    return set(PRIMITIVES)


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    probes: int
    resampled: int = 0
    worst: tuple = field(default=())

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)

    def __bool__(self) -> bool:
        return self.passed


def grad_check(
    fn: Callable[..., torch.Tensor],
    inputs: Sequence[torch.Tensor],
    tolerance: float = 1e-5,
    step: float = 1e-5,
    max_probes: int | None = None,
    seed: int = 0,
    max_resample: int = 4,
) -> GradCheckReport:
    """Compare autograd gradients of ``fn`` against central differences.

    ``fn(*inputs)`` may return any tensor; it is reduced to a scalar through a
    fixed random projection so every output element is exercised.  The inputs
    are perturbed in place (nn.Parameters work), so ``fn`` may also ignore its
    arguments and read module state directly.

    A probe whose second difference betrays a kink inside the stencil is
    moved a small random distance and measured again rather than failed.  A
    smooth probe that misses the tolerance is refined once by Richardson
    extrapolation over steps h and h/2 before it is judged.

    The reported error at each probe is ``|a - n| / max(|a|, |n|, floor)`` with
    ``floor`` one thousandth of the largest numeric gradient seen.
    """
    inputs = list(inputs)
    for t in inputs:
        if t.dtype != torch.float64:
            raise ValueError("grad_check needs float64 inputs")
    if max_probes is None and sum(t.numel() for t in inputs) > 10_000:
        raise ValueError("grad_check: more than 1e4 elements; pass max_probes")
    rng = np.random.default_rng(seed)
    leaves = [t.detach().requires_grad_(True) if not t.requires_grad else t for t in inputs]
    with torch.no_grad():
        out = fn(*leaves)
    proj = torch.as_tensor(rng.standard_normal(tuple(out.shape)), dtype=torch.float64)

    def scalar() -> float:
        with torch.no_grad():
            return float((fn(*leaves) * proj).sum())

    def analytic() -> list[torch.Tensor]:
        for t in leaves:
            t.grad = None
        (fn(*leaves) * proj).sum().backward()
        return [torch.zeros_like(t) if t.grad is None else t.grad.detach().clone() for t in leaves]

    grads = analytic()
    coords: list[tuple[int, int]] = []
    for i, t in enumerate(leaves):
        n = t.numel()
        if max_probes is None or n <= max_probes:
            coords += [(i, j) for j in range(n)]
        else:
            coords += [(i, int(j)) for j in rng.choice(n, size=max_probes, replace=False)]

    def central(flat, j: int, x0: float, h: float) -> tuple[float, float]:
        flat[j] = x0 + h
        fp = scalar()
        flat[j] = x0 - h
        fm = scalar()
        flat[j] = x0
        return fp, fm

    results = []
    resampled = 0
    f0 = scalar()
    for i, j in coords:
        flat = leaves[i].data.view(-1)
        for attempt in range(max_resample + 1):
            x0 = float(flat[j])
            fp, fm = central(flat, j, x0, step)
            num = (fp - fm) / (2 * step)
            a = float(grads[i].view(-1)[j])
            kink = abs(fp - 2 * f0 + fm) > 1e-3 * step * max(1.0, abs(num))
            if not kink or attempt == max_resample:
                break
            resampled += 1
            flat[j] = x0 + float(rng.uniform(-1, 1)) * 1e3 * step
            grads = analytic()
            f0 = scalar()
        if abs(a - num) > tolerance * max(abs(a), abs(num)):
            # stiff regions: one Richardson step removes the h^2 truncation term
            hp, hm = central(flat, j, x0, step / 2)
            num = (4 * (hp - hm) / step - num) / 3
        results.append((i, j, a, num))

    scale = max((abs(r[3]) for r in results), default=0.0)
    floor = max(1e-3 * scale, 1e-12)
    worst, err = (), 0.0
    for i, j, a, num in results:
        e = abs(a - num) / max(abs(a), abs(num), floor)
        if e > err:
            err, worst = e, (i, j, a, num)
    for t in leaves:
        t.grad = None
    return GradCheckReport(err, tolerance, len(results), resampled, worst)


def check_primitive(name: str, seed: int = 0, tolerance: float = 1e-5) -> GradCheckReport:
    kernel, factory = PRIMITIVES[name]
    # a separate stream from grad_check's own, or the projection can equal the input
    rng = np.random.default_rng([seed, 1])
    args = [torch.tensor(a, dtype=torch.float64) for a in factory(rng)]
    return grad_check(kernel, args, tolerance=tolerance, seed=seed)
