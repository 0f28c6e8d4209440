"""
Curating reference images
=========================

Each raw capture is run through several enhancers.  The candidates are scored
by UIQM and UCIQE, normalised per source, and a shortlist goes to human raters
whose scores decide the reference.  Without ratings the best automatic score
wins.
"""
import tempfile
from pathlib import Path

from uieforge import curation, imageio, synthetic

src = Path(tempfile.mkdtemp()) / "captures"
src.mkdir()
for i, pair in enumerate(synthetic.make_pairs(3, 48, seed=11)):
    imageio.save_image(src / f"dive{i}.png", pair.raw)

# automatic scores for one capture: raw metrics, then per-source min-max
cs = curation.score_candidates(imageio.load_image(src / "dive0.png"), curation.builtin_enhancers(), "dive0")
for c in cs.candidates:
    print(f"{c.name:10s} uiqm {c.uiqm:6.3f} uciqe {c.uciqe:6.3f}  normalised {c.uiqm_norm:.2f} {c.uciqe_norm:.2f}  auto {c.auto:.2f}")
print("shortlist:", [c.name for c in curation.shortlist(cs)])

# the full pipeline in automatic mode writes raw/, reference/ and report.csv
out = src.parent / "curated"
records = curation.run_pipeline(src, None, out, auto_only=True)
print((out / "report.csv").read_text())
