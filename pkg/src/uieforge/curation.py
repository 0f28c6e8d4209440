"""Reference-image curation: enhance, score, shortlist, merge manual ratings, select.

Candidate ids are enhancer names.  Every tie is broken by lexicographic id so
runs are reproducible.
"""
from __future__ import annotations

import csv
import logging
import math
import shlex
import subprocess
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import imageio, metrics

log = logging.getLogger(__name__)

SHORTLIST = 3
RATERS = 10
MAX_SCORE = 10.0
THRESHOLD = 8.0

WINNER, REJECTED, SKIPPED = "WINNER", "REJECTED", "SKIPPED"
MANUAL_HEADER = ("source_id", "candidate_id", "rater_id", "score")
REPORT_HEADER = ("source_id", "winner", "total", "status")


class EnhancerError(RuntimeError):
    pass


class ManualScoreError(ValueError):
    pass


# ---------------------------------------------------------------------------
# enhancers


@dataclass(frozen=True)
class Enhancer:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, img: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(self.fn(img), dtype=np.float32), 0.0, 1.0)


def gray_world(img: np.ndarray) -> np.ndarray:
    means = img.reshape(3, -1).mean(axis=1)
    gain = means.mean() / np.maximum(means, 1e-6)
    return img * gain[:, None, None]


def gamma_correct(img: np.ndarray, gamma: float = 0.7) -> np.ndarray:
    return np.power(img, gamma)


def equalize(img: np.ndarray) -> np.ndarray:
    """Per-channel histogram equalisation on 8-bit levels."""
    out = np.empty_like(img, dtype=np.float32)
    for c, ch in enumerate(img):
        levels = np.round(np.clip(ch, 0, 1) * 255).astype(np.int64)
        hist = np.bincount(levels.ravel(), minlength=256)
        cdf = np.cumsum(hist).astype(np.float64)
        lo = cdf[hist > 0][0]
        span = cdf[-1] - lo
        lut = (cdf - lo) / span if span > 0 else np.full(256, levels.ravel()[0] / 255.0)
        out[c] = np.clip(lut[levels], 0, 1)
    return out


def builtin_enhancers() -> list[Enhancer]:
    return [
        Enhancer("equalize", equalize),
        Enhancer("gamma", gamma_correct),
        Enhancer("gray_world", gray_world),
        Enhancer("identity", lambda x: x),
    ]


def external_enhancer(name: str, command: str) -> Enhancer:
    """Wrap ``<command> <in-path> <out-path>``; nonzero exit raises EnhancerError."""
    argv = shlex.split(command)

    def run(img: np.ndarray) -> np.ndarray:
        with tempfile.TemporaryDirectory() as tmp:
            src, dst = Path(tmp) / "in.png", Path(tmp) / "out.png"
            imageio.save_image(src, img)
            proc = subprocess.run(argv + [str(src), str(dst)], capture_output=True, text=True)
            if proc.returncode != 0:
                raise EnhancerError(f"{name}: exit {proc.returncode}: {proc.stderr.strip()[:200]}")
            try:
                out = imageio.load_image(dst)
            except OSError as exc:
                raise EnhancerError(f"{name}: unreadable output ({exc})") from exc
        if out.shape != img.shape:
            out = imageio.resize(out, img.shape[1], img.shape[2])
        return out

    return Enhancer(name, run)


# ---------------------------------------------------------------------------
# scoring and selection


@dataclass
class Candidate:
    name: str
    image: np.ndarray
    uiqm: float
    uciqe: float
    uiqm_norm: float = 1.0
    uciqe_norm: float = 1.0

    @property
    def auto(self) -> float:
        return (self.uiqm_norm + self.uciqe_norm) / 2


@dataclass
class CandidateSet:
    source_id: str
    candidates: list[Candidate] = field(default_factory=list)


def min_max(values: Sequence[float]) -> list[float]:
    """Min-max scaling; a degenerate (single or constant) set maps to 1.0."""
    lo, hi = min(values), max(values)
    if hi == lo:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def normalize(cs: CandidateSet) -> CandidateSet:
    if cs.candidates:
        for c, u, q in zip(
            cs.candidates, min_max([c.uiqm for c in cs.candidates]), min_max([c.uciqe for c in cs.candidates])
        ):
            c.uiqm_norm, c.uciqe_norm = u, q
    return cs


def score_candidates(source: np.ndarray, enhancers: Sequence[Enhancer], source_id: str = "") -> CandidateSet:
    if not enhancers:
        raise ValueError("score_candidates: no enhancers registered")
    cs = CandidateSet(source_id)
    for enh in sorted(enhancers, key=lambda e: e.name):
        try:
            img = enh(source)
        except Exception as exc:  # a broken enhancer must not stop the run
            log.warning("%s: enhancer %s failed, candidate skipped: %s", source_id, enh.name, exc)
            continue
        cs.candidates.append(Candidate(enh.name, img, metrics.uiqm(img), metrics.uciqe(img)))
    return normalize(cs)


def shortlist(cs: CandidateSet, k: int = SHORTLIST) -> list[Candidate]:
    return sorted(cs.candidates, key=lambda c: (-c.auto, c.name))[:k]


@dataclass
class CurationRecord:
    source_id: str
    shortlist: list[str]
    manual: dict[str, list[float]] = field(default_factory=dict)
    totals: dict[str, float] = field(default_factory=dict)
    winner: str | None = None
    status: str = SKIPPED

    @property
    def best_total(self) -> float | None:
        return max(self.totals.values()) if self.totals else None


def candidate_total(manual_scores: Sequence[float], cand: Candidate) -> float:
    """Sum of the ten normalised manual scores and the two normalised metrics."""
    parts = [s / MAX_SCORE for s in manual_scores] + [cand.uiqm_norm, cand.uciqe_norm]
    if len(parts) != RATERS + 2:
        raise ManualScoreError(f"expected {RATERS + 2} score components, got {len(parts)}")
    # fsum keeps a total of exactly 8 from landing a rounding error below the threshold
    return math.fsum(parts)


def _argmax(totals: dict[str, float]) -> str:
    return min(totals, key=lambda name: (-totals[name], name))


def select_reference(
    cs: CandidateSet,
    manual: dict[str, dict[str, float]],
    k: int = SHORTLIST,
    threshold: float = THRESHOLD,
) -> CurationRecord:
    """``manual`` maps candidate id -> rater id -> raw score in [0, 10]."""
    short = shortlist(cs, k)
    rec = CurationRecord(cs.source_id, [c.name for c in short])
    raters = sorted({r for c in short for r in manual.get(c.name, {})})
    if len(raters) != RATERS:
        raise ManualScoreError(f"source {cs.source_id}: expected {RATERS} raters, found {len(raters)} ({raters})")
    for cand in short:
        row = manual.get(cand.name, {})
        scores = []
        for rater in raters:
            if rater not in row:
                raise ManualScoreError(f"source {cs.source_id}: no score from rater {rater} for {cand.name}")
            s = float(row[rater])
            if not 0 <= s <= MAX_SCORE:
                raise ManualScoreError(f"source {cs.source_id}: rater {rater} score {s} outside [0, {MAX_SCORE:g}]")
            scores.append(s)
        rec.manual[cand.name] = scores
        rec.totals[cand.name] = candidate_total(scores, cand)
    best = _argmax(rec.totals)
    if rec.totals[best] < threshold:
        rec.status = REJECTED
    else:
        rec.winner, rec.status = best, WINNER
    return rec


def select_auto(cs: CandidateSet, k: int = SHORTLIST) -> CurationRecord:
    """Degraded mode without manual ratings: best auto score wins, no threshold."""
    short = shortlist(cs, k)
    rec = CurationRecord(cs.source_id, [c.name for c in short], totals={c.name: c.auto for c in short})
    if short:
        rec.winner, rec.status = short[0].name, WINNER
    return rec


# ---------------------------------------------------------------------------
# files


def read_manual_csv(path) -> dict[str, dict[str, dict[str, float]]]:
    """source -> candidate -> rater -> score.  Raises ManualScoreError when malformed."""
    table: dict = defaultdict(lambda: defaultdict(dict))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return {}
        if tuple(h.strip() for h in header) != MANUAL_HEADER:
            raise ManualScoreError(f"{path}: header must be {','.join(MANUAL_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 4:
                raise ManualScoreError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            src, cand, rater, score = (x.strip() for x in row)
            try:
                table[src][cand][rater] = float(score)
            except ValueError:
                raise ManualScoreError(f"{path}:{lineno}: score {score!r} is not a number") from None
    return {s: {c: dict(r) for c, r in cands.items()} for s, cands in table.items()}


def write_report(path, records: Sequence[CurationRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(REPORT_HEADER)
        for rec in sorted(records, key=lambda r: r.source_id):
            total = rec.totals.get(rec.winner) if rec.winner else rec.best_total
            out.writerow([rec.source_id, rec.winner or "", "" if total is None else f"{total:.6f}", rec.status])


def run_pipeline(
    dataset_dir,
    manual_csv,
    out_dir,
    enhancers: Sequence[Enhancer] | None = None,
    auto_only: bool = False,
    k: int = SHORTLIST,
) -> list[CurationRecord]:
    """Curate every image in ``dataset_dir`` into ``out_dir/{raw,reference}`` plus ``report.csv``."""
    enhancers = list(enhancers) if enhancers else builtin_enhancers()
    manual = {} if auto_only or manual_csv is None else read_manual_csv(manual_csv)
    out = Path(out_dir)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    (out / "reference").mkdir(parents=True, exist_ok=True)
    records = []
    for path in imageio.list_images(dataset_dir):
        sid = path.stem
        try:
            src = imageio.load_image(path)
        except Exception as exc:
            log.warning("%s: unreadable, skipped: %s", path, exc)
            records.append(CurationRecord(sid, []))
            continue
        cs = score_candidates(src, enhancers, sid)
        if not cs.candidates:
            records.append(CurationRecord(sid, []))
            continue
        if auto_only:
            rec = select_auto(cs, k)
        else:
            if sid not in manual:
                raise ManualScoreError(f"source {sid}: no rows in manual score table")
            rec = select_reference(cs, manual[sid], k)
        if rec.status == WINNER:
            chosen = next(c for c in cs.candidates if c.name == rec.winner)
            imageio.save_image(out / "raw" / f"{sid}.png", src)
            imageio.save_image(out / "reference" / f"{sid}.png", chosen.image)
        records.append(rec)
    write_report(out / "report.csv", records)
    return records
