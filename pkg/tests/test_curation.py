import sys

import numpy as np
import pytest

from uieforge import curation, imageio
from uieforge.curation import Candidate, CandidateSet, ManualScoreError

RATERS = [f"r{i:02d}" for i in range(10)]


def cand(name, auto=None, uiqm_norm=1.0, uciqe_norm=1.0):
    if auto is not None:
        uiqm_norm = uciqe_norm = auto
    return Candidate(name, np.zeros((3, 2, 2)), 0.0, 0.0, uiqm_norm, uciqe_norm)


def table(scores_by_cand):
    return {c: dict(zip(RATERS, s)) for c, s in scores_by_cand.items()}


def test_min_max_degenerate_cases():
    assert curation.min_max([3.0]) == [1.0]
    assert curation.min_max([2.0, 2.0]) == [1.0, 1.0]
    assert curation.min_max([1.0, 0.5, 0.75]) == [1.0, 0.0, 0.5]


def test_single_enhancer_normalises_to_one(rng):
    cs = curation.score_candidates(rng.uniform(0, 1, (3, 16, 16)), [curation.builtin_enhancers()[0]])
    assert len(cs.candidates) == 1
    assert cs.candidates[0].uiqm_norm == 1.0 and cs.candidates[0].auto == 1.0


def test_two_candidates_min_max_auto():
    cs = CandidateSet("s", [Candidate("a", None, 1.0, 0.3), Candidate("b", None, 0.5, 0.3)])
    curation.normalize(cs)
    # UIQM min-max gives 1 and 0; equal UCIQE is degenerate and maps to 1
    assert [c.auto for c in cs.candidates] == [1.0, 0.5]


def test_shortlist_examples():
    cs = CandidateSet("s", [cand("a", 1.0), cand("b", 0.5), cand("c", 0.8), cand("d", 0.9)])
    assert [c.name for c in curation.shortlist(cs)] == ["a", "d", "c"]
    cs = CandidateSet("s", [cand("c", 0.1), cand("b", 0.9), cand("a", 0.9)])
    assert [c.name for c in curation.shortlist(cs, k=2)] == ["a", "b"]
    cs = CandidateSet("s", [cand("x", 0.2), cand("y", 0.4)])
    assert [c.name for c in curation.shortlist(cs, k=3)] == ["y", "x"]


def test_shortlist_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        names = rng.permutation([f"e{i}" for i in range(n)])
        # coarse values force frequent ties
        autos = rng.integers(0, 4, size=n) / 3
        cs = CandidateSet("s", [cand(str(nm), float(a)) for nm, a in zip(names, autos)])
        k = int(rng.integers(1, 5))
        pairs = [(float(a), str(nm)) for nm, a in zip(names, autos)]
        brute = []
        for _ in range(min(k, n)):
            best = None
            for p in pairs:
                if p[1] in brute:
                    continue
                if best is None or p[0] > best[0] or (p[0] == best[0] and p[1] < best[1]):
                    best = p
            brute.append(best[1])
        assert [c.name for c in curation.shortlist(cs, k)] == brute


def test_all_tens_gives_twelve():
    cs = CandidateSet("s", [cand("a"), cand("b", 0.5), cand("c", 0.2)])
    rec = curation.select_reference(cs, table({"a": [10] * 10, "b": [5] * 10, "c": [1] * 10}))
    assert rec.totals["a"] == pytest.approx(12.0)
    assert rec.winner == "a" and rec.status == curation.WINNER
    assert len(rec.manual["a"]) == 10


def test_threshold_boundary():
    cs = CandidateSet("s", [cand("a", uiqm_norm=0.0, uciqe_norm=0.0)])
    rec = curation.select_reference(cs, table({"a": [8] * 9 + [7]}))  # 7.9
    assert rec.totals["a"] == pytest.approx(7.9) and rec.status == curation.REJECTED and rec.winner is None
    rec = curation.select_reference(cs, table({"a": [8] * 10}))  # exactly 8
    assert rec.status == curation.WINNER


def test_all_zero_raters_rejected():
    cs = CandidateSet("s", [cand("a")])
    rec = curation.select_reference(cs, table({"a": [0] * 10}))
    assert rec.totals["a"] == pytest.approx(2.0) and rec.status == curation.REJECTED


def test_tie_broken_by_name():
    cs = CandidateSet("s", [cand("b"), cand("a")])
    rec = curation.select_reference(cs, table({"a": [9] * 10, "b": [9] * 10}))
    assert rec.winner == "a"


def test_winner_invariant_under_affine_rescaling():
    rng = np.random.default_rng(3)
    for _ in range(200):
        totals = {f"c{i}": float(rng.integers(0, 5)) for i in range(4)}
        a, b = float(rng.uniform(0.1, 5)), float(rng.uniform(-3, 3))
        assert curation._argmax(totals) == curation._argmax({k: a * v + b for k, v in totals.items()})


def test_missing_rater_names_source_and_rater():
    cs = CandidateSet("src7", [cand("a"), cand("b")])
    scores = table({"a": [9] * 10, "b": [9] * 10})
    del scores["b"]["r03"]
    with pytest.raises(ManualScoreError, match=r"src7.*r03"):
        curation.select_reference(cs, scores)


def test_score_out_of_range():
    cs = CandidateSet("s", [cand("a")])
    with pytest.raises(ManualScoreError, match="outside"):
        curation.select_reference(cs, table({"a": [11] + [5] * 9}))


def test_auto_mode_ignores_threshold():
    cs = CandidateSet("s", [cand("a", 0.1), cand("b", 0.05)])
    rec = curation.select_auto(cs)
    assert rec.winner == "a" and rec.status == curation.WINNER


def test_manual_csv(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("source_id,candidate_id,rater_id,score\ns1,gamma,r1,7\ns1,gamma,r2,8.5\n")
    assert curation.read_manual_csv(path) == {"s1": {"gamma": {"r1": 7.0, "r2": 8.5}}}
    path.write_text("source,cand,rater,score\n")
    with pytest.raises(ManualScoreError, match="header"):
        curation.read_manual_csv(path)
    path.write_text("source_id,candidate_id,rater_id,score\ns1,gamma,r1,high\n")
    with pytest.raises(ManualScoreError, match=":2"):
        curation.read_manual_csv(path)


def test_failing_enhancer_is_skipped(rng, caplog):
    bad = curation.external_enhancer("broken", f"{sys.executable} -c 'import sys; sys.exit(3)'")
    good = curation.builtin_enhancers()
    cs = curation.score_candidates(rng.uniform(0, 1, (3, 16, 16)), good + [bad], "s")
    assert "broken" not in [c.name for c in cs.candidates] and len(cs.candidates) == len(good)
    assert "broken" in caplog.text


def test_external_enhancer_round_trip(tmp_path, rng):
    script = tmp_path / "invert.py"
    script.write_text(
        "import sys\nfrom PIL import Image, ImageOps\n"
        "ImageOps.invert(Image.open(sys.argv[1]).convert('RGB')).save(sys.argv[2])\n"
    )
    enh = curation.external_enhancer("invert", f"{sys.executable} {script}")
    img = np.round(rng.uniform(0, 1, (3, 8, 8)) * 255) / 255
    assert np.allclose(enh(img), 1 - img, atol=1e-6)


def _sources(tmp_path, n=4):
    src = tmp_path / "sources"
    src.mkdir()
    rng = np.random.default_rng(5)
    for i in range(n):
        imageio.save_image(src / f"img{i}.png", rng.uniform(0.1, 0.7, (3, 24, 24)) * np.array([0.3, 0.8, 1.0])[:, None, None])
    return src


def test_pipeline_auto_only_and_idempotent(tmp_path):
    src = _sources(tmp_path)
    recs = curation.run_pipeline(src, None, tmp_path / "out", auto_only=True)
    assert len(recs) == 4 and all(r.status == curation.WINNER for r in recs)
    out = tmp_path / "out"
    files = sorted(p.relative_to(out) for p in out.rglob("*") if p.is_file())
    assert len(list((out / "raw").iterdir())) == 4 and len(list((out / "reference").iterdir())) == 4
    snapshot = {f: (out / f).read_bytes() for f in files}
    curation.run_pipeline(src, None, out, auto_only=True)
    assert {f: (out / f).read_bytes() for f in files} == snapshot
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "source_id,winner,total,status" and len(lines) == 5


def test_pipeline_with_manual_scores(tmp_path):
    src = _sources(tmp_path, 2)
    rows = ["source_id,candidate_id,rater_id,score"]
    names = [e.name for e in curation.builtin_enhancers()]
    for sid, score in (("img0", 10), ("img1", 2)):
        for name in names:
            for r in RATERS:
                rows.append(f"{sid},{name},{r},{score}")
    manual = tmp_path / "manual.csv"
    manual.write_text("\n".join(rows) + "\n")
    recs = {r.source_id: r for r in curation.run_pipeline(src, manual, tmp_path / "out")}
    assert recs["img0"].status == curation.WINNER and recs["img1"].status == curation.REJECTED
    assert (tmp_path / "out" / "reference" / "img0.png").exists()
    assert not (tmp_path / "out" / "reference" / "img1.png").exists()


def test_pipeline_missing_source_in_manual_table(tmp_path):
    src = _sources(tmp_path, 1)
    manual = tmp_path / "manual.csv"
    manual.write_text("source_id,candidate_id,rater_id,score\n")
    with pytest.raises(ManualScoreError, match="img0"):
        curation.run_pipeline(src, manual, tmp_path / "out")


def test_unreadable_source_is_skipped(tmp_path):
    src = _sources(tmp_path, 1)
    (src / "broken.png").write_bytes(b"not a png")
    recs = {r.source_id: r for r in curation.run_pipeline(src, None, tmp_path / "out", auto_only=True)}
    assert recs["broken"].status == curation.SKIPPED and recs["img0"].status == curation.WINNER
