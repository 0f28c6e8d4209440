"""Parameter-holding building blocks shared by the generator and discriminator."""
from __future__ import annotations

import math

import torch
from torch import nn

from . import ops


def _uniform(shape, fan_in: int) -> nn.Parameter:
    bound = 1.0 / math.sqrt(fan_in)
    return nn.Parameter(torch.empty(shape).uniform_(-bound, bound))


class Conv(nn.Module):
    def __init__(self, cin: int, cout: int, kernel: int = 3, stride: int = 1):
        super().__init__()
        self.stride = stride
        self.weight = _uniform((cout, cin, kernel, kernel), cin * kernel * kernel)
        self.bias = nn.Parameter(torch.zeros(cout))

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride)


class Linear(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.weight = _uniform((cin, cout), cin)
        self.bias = nn.Parameter(torch.zeros(cout))

    def forward(self, x):
        return ops.add(ops.matmul(x, self.weight), self.bias)


class LayerNorm(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(width))
        self.bias = nn.Parameter(torch.zeros(width))

    def forward(self, x):
        return ops.layer_norm(x, self.weight, self.bias)


class ConvUnit(nn.Module):
    """3x3 conv, instance norm, leaky rectifier."""

    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv = Conv(cin, cout, 3, stride)

    def forward(self, x):
        return ops.leaky_relu(ops.instance_norm(self.conv(x)))


class ConvBlock(nn.Sequential):
    def __init__(self, cin: int, cout: int):
        super().__init__(ConvUnit(cin, cout), ConvUnit(cout, cout))


class FeedForward(nn.Module):
    def __init__(self, width: int, expansion: int = 4):
        super().__init__()
        self.fc1 = Linear(width, expansion * width)
        self.fc2 = Linear(expansion * width, width)

    def forward(self, x):
        return self.fc2(ops.leaky_relu(self.fc1(x)))
