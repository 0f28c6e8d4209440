"""
A tour of the generator and discriminator
=========================================

The generator is a four-level U-Net whose bottleneck runs a spatial
transformer and whose skip connections are replaced by a channel-wise
multi-scale fusion transformer.  The discriminator sees the output image and
every decoder scale.
"""
import torch

from uieforge import Discriminator, Generator, GeneratorConfig, selfcheck

# default sizes at 256 x 256: every intermediate shape, measured
cfg = GeneratorConfig()
for key, shape in selfcheck.measured_shapes(cfg).items():
    print(f"{key:16s} {shape}")

# a desk-scale model for quick experiments
small = GeneratorConfig(image_size=64, width_mult=0.25)
gen, disc = Generator(small), Discriminator(small)
print("generator parameters:", sum(p.numel() for p in gen.parameters()))
print("discriminator parameters:", sum(p.numel() for p in disc.parameters()))

out = gen(torch.rand(2, 3, 64, 64))
print("output", tuple(out.image.shape), "range", float(out.image.min()), float(out.image.max()))
print("decoder taps (fine to coarse):", [tuple(t.shape) for t in out.taps])
print("patch logits:", tuple(disc(out.image, out.taps).shape))

# multi-scale gradients: the adversarial loss reaches every decoder scale
print("adversarial gradient norm per tap:", selfcheck.msg_tap_gradients(seed=0))
