"""Run configuration: one TOML file with [generator], [train], [loss] and [paths] sections."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .generator import ConfigError, GeneratorConfig
from .losses import LossWeights
from .trainer import TrainConfig

PATH_KEYS = ("dataset", "output", "checkpoint", "perceptual_weights")


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    paths: dict = field(default_factory=dict)
    seed: int = 0

    def to_toml(self) -> str:
        lines = [f"seed = {self.seed}", ""]
        for name, obj in (("generator", self.generator), ("train", self.train), ("loss", self.loss)):
            lines.append(f"[{name}]")
            for f in dataclasses.fields(obj):
                lines.append(f"{f.name} = {_toml_value(getattr(obj, f.name))}")
            lines.append("")
        lines.append("[paths]")
        for k in PATH_KEYS:
            if self.paths.get(k):
                lines.append(f"{k} = {_toml_value(str(self.paths[k]))}")
        return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(v)


def _build(cls, section: str, values: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config key [{section}].{key}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def load_run_config(path=None, **overrides) -> RunConfig:
    """Read ``path`` (optional), apply command-line overrides, validate.

    Recognised overrides: seed, epochs, batch_size, image_size, width_mult,
    and any of the path keys.  ``None`` values are ignored.
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for key in data:
        if key not in ("generator", "train", "loss", "paths", "seed"):
            raise ConfigError(f"unknown config key {key}")
    gen = dict(data.get("generator", {}))
    train = dict(data.get("train", {}))
    loss = dict(data.get("loss", {}))
    paths = dict(data.get("paths", {}))
    for key in paths:
        if key not in PATH_KEYS:
            raise ConfigError(f"unknown config key [paths].{key}")
    seed = data.get("seed", train.get("seed", 0))

    ov = {k: v for k, v in overrides.items() if v is not None}
    if "seed" in ov:
        seed = ov.pop("seed")
    for key in ("image_size", "width_mult"):
        if key in ov:
            gen[key] = ov.pop(key)
    for key in ("epochs", "batch_size"):
        if key in ov:
            train[key] = ov.pop(key)
    for key in PATH_KEYS:
        if key in ov:
            paths[key] = ov.pop(key)
    if ov:
        raise ConfigError(f"unknown override {sorted(ov)[0]}")

    train["seed"] = seed
    epochs = train.get("epochs", TrainConfig.epochs)
    # a shortened run keeps both schedule phases inside the epoch budget
    if "switch_epoch" not in train or train["switch_epoch"] > epochs:
        train["switch_epoch"] = min(train.get("switch_epoch", TrainConfig.switch_epoch), epochs)
    return RunConfig(
        generator=_build(GeneratorConfig, "generator", gen),
        train=_build(TrainConfig, "train", train),
        loss=_build(LossWeights, "loss", loss),
        paths={k: Path(v) for k, v in paths.items()},
        seed=seed,
    )
