"""
Training at desk scale
======================

A short adversarial run on synthetic pairs, followed by enhancement and
scoring.  Full-size training needs a large paired dataset and many hundreds of
epochs; this only shows the moving parts.
"""
import tempfile
from pathlib import Path

import numpy as np
import torch

from uieforge import GeneratorConfig, TrainConfig, Trainer, lr_at, metrics, synthetic
from uieforge.trainer import enhance, load_generator

# the step schedule: decay by 0.8 every 40 epochs, restart lower after the switch
cfg = TrainConfig()
print("lr at epochs 1, 41, 600, 601:", [lr_at(e, cfg) for e in (1, 41, 600, 601)])

torch.manual_seed(0)
pairs = synthetic.make_pairs(4, 32, seed=0)
train_cfg = TrainConfig(epochs=20, switch_epoch=15, batch_size=4, seed=0)
trainer = Trainer(GeneratorConfig(image_size=32, width_mult=0.25), train_cfg)

out_dir = Path(tempfile.mkdtemp())
ckpt = trainer.fit(pairs, out_dir)
log = (out_dir / "train_log.csv").read_text().splitlines()
print(log[0])
print(log[1])
print(log[-1])

# reload the generator from the checkpoint and enhance a capture at a
# different resolution; the output keeps the input size
gen = load_generator(ckpt)
capture = synthetic.make_pairs(1, 48, seed=5)[0]
enhanced = enhance(gen, capture.raw)
print("enhanced", enhanced.shape)
print("scores:", {k: round(v, 3) for k, v in metrics.score_image(enhanced, capture.reference).items() if v is not None})
