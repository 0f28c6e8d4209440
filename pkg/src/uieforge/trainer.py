"""Adversarial training loop with the two-phase learning-rate schedule."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import imageio, losses
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .discriminator import Discriminator
from .generator import ConfigError, Generator, GeneratorConfig

log = logging.getLogger(__name__)

LOG_HEADER = "step,epoch,lr,rgb,lab,lch,per,adv_g,adv_d,total"
CHECKPOINT_NAME = "checkpoint.ckpt"
LOG_NAME = "train_log.csv"


@dataclass
class TrainConfig:
    epochs: int = 800
    batch_size: int = 6
    lr_early: float = 5e-4
    lr_late: float = 2e-4
    decay: float = 0.8
    decay_every: int = 40
    switch_epoch: int = 600
    crop: bool = True
    rotate: bool = True
    flip: bool = True
    seed: int = 0
    checkpoint_every: int = 50
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be >= 1, got {self.batch_size}")
        if not 0 <= self.switch_epoch <= self.epochs:
            raise ConfigError(f"switch_epoch: {self.switch_epoch} exceeds epochs {self.epochs}")
        if self.lr_early <= 0 or self.lr_late <= 0 or not 0 < self.decay <= 1 or self.decay_every < 1:
            raise ConfigError("learning rates must be > 0, decay in (0, 1], decay_every >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every: must be >= 1, got {self.checkpoint_every}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Phase base rate decayed by ``cfg.decay`` every ``cfg.decay_every`` epochs.

    The decay restarts from ``lr_late`` at the first epoch after the switch.
    """
    if not 1 <= epoch <= cfg.epochs:
        raise ValueError(f"epoch {epoch} outside 1..{cfg.epochs}")
    if epoch <= cfg.switch_epoch:
        base, start = cfg.lr_early, 1
    else:
        base, start = cfg.lr_late, cfg.switch_epoch + 1
    return base * cfg.decay ** ((epoch - start) // cfg.decay_every)


def rgb_phase(epoch: int, cfg: TrainConfig) -> str:
    return "early" if epoch <= cfg.switch_epoch else "late"


# ---------------------------------------------------------------------------
# data


@dataclass
class PairedSample:
    raw: np.ndarray
    reference: np.ndarray
    ident: str = ""
    transform: tuple = field(default=())


def _apply(img: np.ndarray, op: tuple) -> np.ndarray:
    kind = op[0]
    if kind == "crop":
        _, y, x, h, w = op
        return imageio.resize(img[:, y : y + h, x : x + w], img.shape[1], img.shape[2])
    if kind == "rot90":
        return np.ascontiguousarray(np.rot90(img, op[1], axes=(1, 2)))
    if kind == "hflip":
        return np.ascontiguousarray(img[:, :, ::-1])
    if kind == "vflip":
        return np.ascontiguousarray(img[:, ::-1, :])
    raise ValueError(f"unknown transform {op!r}")


def augment(
    sample: PairedSample,
    rng: np.random.Generator,
    crop: bool = True,
    rotate: bool = True,
    flip: bool = True,
    min_area: float = 0.75,
) -> PairedSample:
    """One random crop/rotate/flip draw applied identically to raw and reference.

    Each enabled transform fires with probability 0.5.  The crop keeps at
    least ``min_area`` of the image and is resized back to full size.
    """
    _, h, w = sample.raw.shape
    ops = []
    if crop and rng.random() < 0.5:
        scale = np.sqrt(rng.uniform(min_area, 1.0))
        ch, cw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
        ops.append(("crop", int(rng.integers(0, h - ch + 1)), int(rng.integers(0, w - cw + 1)), ch, cw))
    if rotate and rng.random() < 0.5:
        ops.append(("rot90", int(rng.integers(1, 4))))
    if flip and rng.random() < 0.5:
        ops.append(("hflip",))
    if flip and rng.random() < 0.5:
        ops.append(("vflip",))
    raw, ref = sample.raw, sample.reference
    for op in ops:
        raw, ref = _apply(raw, op), _apply(ref, op)
    return PairedSample(raw, ref, sample.ident, sample.transform + tuple(ops))


def load_pairs(directory, size: int) -> list[PairedSample]:
    """Read ``raw/`` and ``reference/`` images with matching names, resized to ``size``."""
    root = Path(directory)
    raw_dir, ref_dir = root / "raw", root / "reference"
    if not raw_dir.is_dir() or not ref_dir.is_dir():
        raise FileNotFoundError(f"{root}: expected raw/ and reference/ subdirectories")
    pairs = []
    for path in imageio.list_images(raw_dir):
        ref = ref_dir / path.name
        if not ref.exists():
            log.warning("no reference for %s; skipped", path.name)
            continue
        pairs.append(PairedSample(imageio.load_image(path, size), imageio.load_image(ref, size), path.stem))
    return pairs


# ---------------------------------------------------------------------------
# training


class Trainer:
    """Owns the generator, discriminator, their optimisers and the data RNG."""

    def __init__(
        self,
        gen_cfg: GeneratorConfig | None = None,
        train_cfg: TrainConfig | None = None,
        weights: losses.LossWeights | None = None,
        extractor: torch.nn.Module | None = None,
    ):
        self.gen_cfg = gen_cfg or GeneratorConfig()
        self.cfg = train_cfg or TrainConfig()
        self.weights = weights or losses.LossWeights()
        torch.manual_seed(self.cfg.seed)
        self.generator = Generator(self.gen_cfg)
        self.discriminator = Discriminator(self.gen_cfg)
        self.extractor = extractor if extractor is not None else losses.PerceptualExtractor(seed=self.cfg.seed)
        adam = dict(lr=self.cfg.lr_early, betas=self.cfg.betas, eps=self.cfg.adam_eps)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), **adam)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), **adam)
        self.rng = np.random.default_rng(self.cfg.seed)
        self.step = 0
        self.epoch = 0

    def _set_lr(self, lr: float) -> None:
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr

    def generator_losses(self, raw, ref, epoch: int) -> tuple[torch.Tensor, dict]:
        out = self.generator(raw)
        fake = self.discriminator(out.image, out.taps)
        parts = {
            "rgb": losses.loss_rgb(out.image, ref, rgb_phase(epoch, self.cfg)),
            "lab": losses.loss_lab(out.image, ref),
            "lch": losses.loss_lch(out.image, ref),
            "perceptual": losses.loss_perceptual(out.image, ref, self.extractor),
            "adversarial_g": losses.generator_adversarial(fake),
        }
        return losses.total_generator_loss(parts, self.weights), parts

    def train_step(self, raw, ref, epoch: int, lr: float | None = None) -> losses.LossReport:
        """One discriminator update followed by one generator update."""
        if raw.shape[0] == 0:
            raise ValueError("train_step: empty batch")
        self._set_lr(lr_at(epoch, self.cfg) if lr is None else lr)

        with torch.no_grad():
            out = self.generator(raw)
        real_logits = self.discriminator(ref, self.discriminator.real_side_taps(ref))
        fake_logits = self.discriminator(out.image, out.taps)
        d_loss, _ = losses.loss_gan(real_logits, fake_logits)
        if not torch.isfinite(d_loss):
            raise losses.NonFiniteLoss("adversarial_d", float(d_loss))
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        total, parts = self.generator_losses(raw, ref, epoch)
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        self.step += 1
        return losses.LossReport(
            **{k: v.item() for k, v in parts.items()}, adversarial_d=d_loss.item(), total=total.item()
        )

    def batches(self, dataset: list[PairedSample]):
        order = self.rng.permutation(len(dataset))
        aug = self.cfg.crop or self.cfg.rotate or self.cfg.flip
        for start in range(0, len(order), self.cfg.batch_size):
            items = [dataset[i] for i in order[start : start + self.cfg.batch_size]]
            if aug:
                items = [augment(s, self.rng, self.cfg.crop, self.cfg.rotate, self.cfg.flip) for s in items]
            raw = torch.from_numpy(np.stack([s.raw for s in items]).astype(np.float32))
            ref = torch.from_numpy(np.stack([s.reference for s in items]).astype(np.float32))
            yield raw, ref

    def fit(self, dataset: list[PairedSample], out_dir, until_epoch: int | None = None) -> Path:
        """Train from ``self.epoch + 1`` to the last epoch (or ``until_epoch``).

        Appends one line per step to ``train_log.csv`` and writes
        ``checkpoint.ckpt`` every ``checkpoint_every`` epochs and at the end.
        Returns the checkpoint path.
        """
        if not dataset:
            raise ValueError("fit: dataset is empty")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log_path, ckpt = out / LOG_NAME, out / CHECKPOINT_NAME
        _trim_log(log_path, self.step)
        last = self.cfg.epochs if until_epoch is None else min(until_epoch, self.cfg.epochs)
        with open(log_path, "a", encoding="utf-8") as fh:
            if fh.tell() == 0:
                fh.write(LOG_HEADER + "\n")
            for epoch in range(self.epoch + 1, last + 1):
                lr = lr_at(epoch, self.cfg)
                for raw, ref in self.batches(dataset):
                    r = self.train_step(raw, ref, epoch)
                    fh.write(
                        f"{self.step},{epoch},{lr:.8g},{r.rgb:.8g},{r.lab:.8g},{r.lch:.8g},{r.perceptual:.8g},"
                        f"{r.adversarial_g:.8g},{r.adversarial_d:.8g},{r.total:.8g}\n"
                    )
                fh.flush()
                self.epoch = epoch
                if epoch % self.cfg.checkpoint_every == 0 or epoch == last:
                    self.save(ckpt)
        return ckpt

    # -- persistence --------------------------------------------------------

    def state_tensors(self) -> dict[str, torch.Tensor]:
        tensors = {}
        for prefix, module in (("generator", self.generator), ("discriminator", self.discriminator)):
            for name, t in module.state_dict().items():
                tensors[f"{prefix}/{name}"] = t
        for prefix, opt in (("optim_g", self.opt_g), ("optim_d", self.opt_d)):
            for idx, state in opt.state_dict()["state"].items():
                for key, t in state.items():
                    tensors[f"{prefix}/{idx}/{key}"] = torch.as_tensor(t)
        tensors["rng/torch"] = torch.get_rng_state()
        return tensors

    def save(self, path) -> None:
        meta = {
            "step": self.step,
            "epoch": self.epoch,
            "generator_config": self.gen_cfg.to_dict(),
            "train_config": self.cfg.to_dict(),
            "loss_weights": asdict(self.weights),
            "numpy_rng": self.rng.bit_generator.state,
        }
        save_checkpoint(path, self.state_tensors(), meta)

    @classmethod
    def resume(cls, path, extractor=None, train_cfg: TrainConfig | None = None) -> "Trainer":
        tensors, meta = load_checkpoint(path)
        try:
            gen_cfg = GeneratorConfig(**meta["generator_config"])
            cfg = train_cfg or TrainConfig(**meta["train_config"])
            weights = losses.LossWeights(**meta["loss_weights"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"{path}: manifest metadata incomplete ({exc})") from exc
        trainer = cls(gen_cfg, cfg, weights, extractor)
        trainer.load_tensors(tensors, path)
        trainer.step, trainer.epoch = int(meta["step"]), int(meta["epoch"])
        trainer.rng.bit_generator.state = meta["numpy_rng"]
        return trainer

    def load_tensors(self, tensors: dict[str, torch.Tensor], source="checkpoint") -> None:
        for prefix, module in (("generator", self.generator), ("discriminator", self.discriminator)):
            load_module(module, tensors, prefix, source)
        for prefix, opt in (("optim_g", self.opt_g), ("optim_d", self.opt_d)):
            sd = opt.state_dict()
            state: dict = {}
            for name, t in tensors.items():
                if name.startswith(prefix + "/"):
                    _, idx, key = name.split("/")
                    state.setdefault(int(idx), {})[key] = t.clone()
            sd["state"] = state
            opt.load_state_dict(sd)
        if "rng/torch" in tensors:
            torch.set_rng_state(tensors["rng/torch"].to(torch.uint8))


def load_module(module: torch.nn.Module, tensors: dict, prefix: str, source="checkpoint") -> None:
    state = {k[len(prefix) + 1 :]: v for k, v in tensors.items() if k.startswith(prefix + "/")}
    try:
        module.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"{source}: {prefix} weights do not match the model: {exc}") from exc


def load_generator(path) -> Generator:
    tensors, meta = load_checkpoint(path)
    try:
        cfg = GeneratorConfig(**meta["generator_config"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"{path}: generator_config missing or invalid in manifest ({exc})") from exc
    gen = Generator(cfg)
    load_module(gen, tensors, "generator", path)
    return gen.eval()


def enhance(generator: Generator, img: np.ndarray) -> np.ndarray:
    """Run one (3, H, W) image through the generator at its native side, then restore H x W."""
    side = generator.cfg.image_size
    _, h, w = img.shape
    x = torch.from_numpy(imageio.resize(img, side, side)[None])
    with torch.no_grad():
        y = generator(x.to(next(generator.parameters()).dtype)).image[0].numpy()
    return imageio.resize(y, h, w)


def _trim_log(path: Path, step: int) -> None:
    """Drop log lines past ``step`` so a resumed run continues the trajectory cleanly."""
    if not path.exists():
        return
    lines = path.read_text(encoding="utf-8").splitlines()
    keep = [ln for ln in lines if ln == LOG_HEADER or (ln and int(ln.split(",", 1)[0]) <= step)]
    path.write_text("".join(ln + "\n" for ln in keep), encoding="utf-8")


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
