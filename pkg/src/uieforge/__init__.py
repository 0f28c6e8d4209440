"""Transformer-augmented U-Net GAN for restoring underwater photographs.

Submodules:

* ``ops``: differentiable kernels and the finite-difference gradient checker
* ``color``: sRGB, CIELAB and LCH conversions plus soft quantisation
* ``generator`` / ``discriminator``: the two networks
* ``losses`` / ``metrics``: training objectives and image-quality scores
* ``trainer``: the adversarial training loop and checkpoints
* ``curation``: reference-image selection from candidate enhancers
"""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .discriminator import Discriminator
from .generator import ConfigError, Generator, GeneratorConfig
from .losses import LossReport, LossWeights, NonFiniteLoss
from .trainer import PairedSample, TrainConfig, Trainer, lr_at

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "Discriminator",
    "Generator",
    "GeneratorConfig",
    "LossReport",
    "LossWeights",
    "NonFiniteLoss",
    "PairedSample",
    "TrainConfig",
    "Trainer",
    "load_checkpoint",
    "lr_at",
    "save_checkpoint",
]
