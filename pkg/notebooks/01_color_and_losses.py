"""
Colour spaces and the colour losses
===================================

The generator is trained against references in three colour spaces.  This
walk-through converts a synthetic underwater pair to LAB and LCH, looks at the
soft histograms the cross-entropy terms compare, and evaluates each loss.
"""
import numpy as np
import torch

from uieforge import color, losses, synthetic

# a reference scene and its water-degraded capture, both (3, H, W) in [0, 1]
pair = synthetic.make_pairs(1, 64, seed=0)[0]
raw = torch.from_numpy(pair.raw)[None].double()
ref = torch.from_numpy(pair.reference)[None].double()

# LAB separates lightness from the two opponent axes; water absorption shows
# up as a shift towards negative a (green) and b (blue)
for name, img in (("raw", raw), ("reference", ref)):
    L, A, B = color.rgb_to_lab(img)[0]
    print(f"{name:9s} mean L {L.mean():6.2f}  a {A.mean():6.2f}  b {B.mean():6.2f}")

# LCH is LAB in polar form; grey pixels get hue 0 by convention
grey = torch.full((1, 3, 1, 1), 0.5, dtype=torch.float64)
print("grey in LCH:", color.rgb_to_lch(grey).flatten().tolist())

# the soft quantiser spreads each value over its two nearest bins, so a
# histogram stays differentiable; every pixel's weights sum to one
q = color.quantize_soft(color.rgb_to_lab(ref)[:, 0], *color.L_RANGE)
print("soft histogram", tuple(q.shape), "per-pixel sums", float(q.sum(dim=-1).min()), float(q.sum(dim=-1).max()))

# each loss is zero (or at its entropy floor) for a perfect output and larger
# for the raw capture
for name, fn in (("rgb", losses.loss_rgb), ("lab", losses.loss_lab), ("lch", losses.loss_lch)):
    print(f"loss_{name}: raw vs ref {float(fn(raw, ref)):10.4f}   ref vs ref {float(fn(ref, ref)):10.4f}")

# the weighted total is linear in its parts
ones = {k: torch.tensor(1.0) for k in ("adversarial_g", "lab", "lch", "rgb", "perceptual")}
print("total with every part at 1:", float(losses.total_generator_loss(ones)))
