"""Command-line entry point: ``uieforge {train,enhance,eval,curate,selfcheck}``.

Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 checkpoint error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import curation, imageio, metrics
from .checkpoint import CheckpointError
from .generator import ConfigError

log = logging.getLogger("uieforge")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CHECKPOINT = 0, 1, 2, 3


class UsageError(Exception):
    """Bad paths or arguments; reported with exit code 2."""


def _seed(seed: int | None) -> None:
    if seed is not None:
        torch.manual_seed(seed)
        np.random.seed(seed % 2**32)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    from .config import load_run_config
    from .trainer import Trainer, load_pairs

    cfg = load_run_config(
        args.config,
        seed=args.seed,
        epochs=args.epochs,
        batch_size=args.batch_size,
        image_size=args.image_size,
        width_mult=args.width_mult,
        dataset=args.dataset,
        output=args.output,
    )
    dataset = cfg.paths.get("dataset")
    if dataset is None:
        raise UsageError("no dataset given (--dataset or [paths].dataset)")
    if not Path(dataset).is_dir():
        raise UsageError(f"dataset directory not found: {dataset}")
    out = Path(cfg.paths.get("output", "runs/train"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.toml").write_text(cfg.to_toml(), encoding="utf-8")

    pairs = load_pairs(dataset, cfg.generator.image_size)
    if not pairs:
        raise UsageError(f"dataset {dataset} contains no raw/reference pairs")

    extractor = None
    if cfg.paths.get("perceptual_weights"):
        from .losses import PerceptualExtractor

        extractor = PerceptualExtractor(seed=cfg.seed)
        extractor.load(cfg.paths["perceptual_weights"])

    ckpt = out / "checkpoint.ckpt"
    resume_from = cfg.paths.get("checkpoint") or (ckpt if args.resume and ckpt.exists() else None)
    if args.resume and resume_from is not None:
        trainer = Trainer.resume(resume_from, extractor=extractor, train_cfg=cfg.train)
        log.info("resumed from %s at epoch %d", resume_from, trainer.epoch)
    else:
        trainer = Trainer(cfg.generator, cfg.train, cfg.loss, extractor)
    path = trainer.fit(pairs, out)
    print(f"checkpoint: {path}")
    return EXIT_OK


def _inputs(path: Path) -> list[Path]:
    if path.is_dir():
        return imageio.list_images(path)
    if path.is_file():
        return [path]
    raise UsageError(f"input not found: {path}")


def cmd_enhance(args) -> int:
    from .trainer import enhance, load_generator

    _seed(args.seed)
    gen = load_generator(args.checkpoint)
    inputs = _inputs(Path(args.input))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    done = 0
    for path in inputs:
        try:
            img = imageio.load_image(path)
        except Exception as exc:
            log.warning("%s: cannot decode, skipped (%s)", path, exc)
            continue
        imageio.save_image(out / f"{path.stem}.png", enhance(gen, img))
        done += 1
    print(f"enhanced {done}/{len(inputs)} images into {out}")
    return EXIT_OK if done or not inputs else EXIT_FAIL


def cmd_eval(args) -> int:
    enhanced = Path(args.enhanced)
    if not enhanced.is_dir():
        raise UsageError(f"enhanced directory not found: {enhanced}")
    if not args.no_reference and args.reference is None:
        raise UsageError("eval needs --reference DIR or --no-reference")
    refs = {}
    if not args.no_reference:
        ref_dir = Path(args.reference)
        if not ref_dir.is_dir():
            raise UsageError(f"reference directory not found: {ref_dir}")
        refs = {p.stem: p for p in imageio.list_images(ref_dir)}

    report = metrics.MetricReport()
    unmatched = []
    for path in imageio.list_images(enhanced):
        img = imageio.load_image(path)
        ref = None
        if not args.no_reference:
            if path.stem not in refs:
                unmatched.append(path.name)
                continue
            ref = imageio.load_image(refs[path.stem])
            if ref.shape != img.shape:
                ref = imageio.resize(ref, img.shape[1], img.shape[2])
        report.add(path.stem, **metrics.score_image(img, ref))

    out_csv = Path(args.output) if args.output else enhanced / "metrics.csv"
    report.write_csv(out_csv)
    for name in unmatched:
        print(f"unmatched: {name} (no reference with that name, excluded)", file=sys.stderr)
    means = report.mean
    for key in metrics.COLUMNS:
        v = means.get(key)
        print(f"{key}: {'n/a' if v is None else f'{v:.4f}'}")
    print("niqe: n/a")
    print(f"wrote {out_csv}")
    return EXIT_FAIL if unmatched else EXIT_OK


def cmd_curate(args) -> int:
    _seed(args.seed)
    if not Path(args.dataset).is_dir():
        raise UsageError(f"dataset directory not found: {args.dataset}")
    if not args.auto_only and args.manual is None:
        raise UsageError("curate needs --manual CSV or --auto-only")
    enhancers = curation.builtin_enhancers()
    for spec in args.enhancer or []:
        name, sep, command = spec.partition("=")
        if not sep or not name or not command:
            raise UsageError(f"--enhancer expects NAME=COMMAND, got {spec!r}")
        enhancers.append(curation.external_enhancer(name, command))
    try:
        records = curation.run_pipeline(args.dataset, args.manual, args.output, enhancers, args.auto_only, args.k)
    except curation.ManualScoreError as exc:
        raise UsageError(str(exc)) from None
    counts = {s: sum(r.status == s for r in records) for s in (curation.WINNER, curation.REJECTED, curation.SKIPPED)}
    print(" ".join(f"{k.lower()}={v}" for k, v in counts.items()), f"report={Path(args.output) / 'report.csv'}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_all

    _seed(args.seed)
    results = run_all(seeds=args.seeds)
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name:<14} {res.seconds:6.1f}s  {res.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uieforge", description="Underwater image enhancement toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a generator/discriminator pair")
    t.add_argument("--config", type=Path)
    t.add_argument("--dataset", type=Path, help="directory with raw/ and reference/")
    t.add_argument("--output", type=Path, help="run directory for checkpoint and log")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--image-size", type=int)
    t.add_argument("--width-mult", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", action="store_true", help="continue from the run directory's checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("enhance", help="run a trained generator over images")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--input", type=Path, required=True, help="image file or directory")
    e.add_argument("--output", type=Path, required=True)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_enhance)

    v = sub.add_parser("eval", help="score enhanced images")
    v.add_argument("--enhanced", type=Path, required=True)
    v.add_argument("--reference", type=Path)
    v.add_argument("--no-reference", action="store_true")
    v.add_argument("--output", type=Path, help="metric CSV path (default: <enhanced>/metrics.csv)")
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_eval)

    c = sub.add_parser("curate", help="build reference images from raw captures")
    c.add_argument("--dataset", type=Path, required=True, help="directory of raw images")
    c.add_argument("--output", type=Path, required=True)
    c.add_argument("--manual", type=Path, help="manual score CSV")
    c.add_argument("--auto-only", action="store_true", help="no manual scores; best automatic score wins")
    c.add_argument("--enhancer", action="append", metavar="NAME=COMMAND", help="external enhancer (repeatable)")
    c.add_argument("--k", type=int, default=curation.SHORTLIST, help="shortlist length")
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_curate)

    s = sub.add_parser("selfcheck", help="gradient, colour, shape and metric-oracle suites")
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = os.environ.get("UIEFORGE_THREADS")
    if threads:
        try:
            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            print(f"error: UIEFORGE_THREADS must be an integer, got {threads!r}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
