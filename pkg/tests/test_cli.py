import subprocess
import sys

import numpy as np
import pytest

from uieforge import imageio
from uieforge.cli import main


@pytest.fixture
def run_toml(tmp_path, pair_dir):
    p = tmp_path / "run.toml"
    p.write_text(f'[train]\nbatch_size = 4\n[paths]\ndataset = "{pair_dir}"\n')
    return p


def train(tmp_path, run_toml, name, *extra):
    out = tmp_path / name
    code = main(["train", "--config", str(run_toml), "--epochs", "2", "--image-size", "64", "--width-mult", "0.25", "--output", str(out), *extra])
    return code, out


def test_train_smoke_and_seed_determinism(tmp_path, run_toml):
    code, a = train(tmp_path, run_toml, "a", "--seed", "7")
    assert code == 0
    assert (a / "checkpoint.ckpt").exists() and (a / "train_log.csv").exists()
    echo = (a / "effective_config.toml").read_text()
    assert "epochs = 2" in echo and "image_size = 64" in echo and "seed = 7" in echo
    _, b = train(tmp_path, run_toml, "b", "--seed", "7")
    assert (a / "train_log.csv").read_text() == (b / "train_log.csv").read_text()


def test_train_resume_continues(tmp_path, run_toml):
    code, out = train(tmp_path, run_toml, "r")
    assert code == 0
    code = main(["train", "--config", str(run_toml), "--epochs", "3", "--image-size", "64", "--width-mult", "0.25", "--output", str(out), "--resume"])
    assert code == 0
    lines = (out / "train_log.csv").read_text().splitlines()
    assert [ln.split(",")[1] for ln in lines[1:]] == ["1", "2", "3"]


def test_train_missing_dataset(tmp_path, capsys):
    code = main(["train", "--dataset", str(tmp_path / "nowhere"), "--output", str(tmp_path / "o")])
    assert code == 2 and "nowhere" in capsys.readouterr().err


def test_train_unknown_key(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[train]\nepoch = 3\n")
    assert main(["train", "--config", str(p)]) == 2
    assert "epoch" in capsys.readouterr().err


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    from uieforge.generator import GeneratorConfig
    from uieforge.trainer import TrainConfig, Trainer

    d = tmp_path_factory.mktemp("ckpt")
    tr = Trainer(GeneratorConfig(image_size=32, patch_size=8, width_mult=0.125, heads=2, layers=1), TrainConfig(epochs=1, switch_epoch=1))
    tr.save(d / "model.ckpt")
    return d / "model.ckpt"


def test_enhance(tmp_path, checkpoint):
    src = tmp_path / "in"
    src.mkdir()
    rng = np.random.default_rng(0)
    for i, (h, w) in enumerate([(20, 30), (32, 32), (45, 17)]):
        imageio.save_image(src / f"p{i}.png", rng.uniform(0, 1, (3, h, w)))
    (src / "junk.png").write_bytes(b"garbage")
    assert main(["enhance", "--checkpoint", str(checkpoint), "--input", str(src), "--output", str(tmp_path / "o1")]) == 0
    assert main(["enhance", "--checkpoint", str(checkpoint), "--input", str(src), "--output", str(tmp_path / "o2")]) == 0
    outs = sorted((tmp_path / "o1").iterdir())
    assert [p.name for p in outs] == ["p0.png", "p1.png", "p2.png"]
    assert imageio.load_image(outs[2]).shape == (3, 45, 17)
    for p in outs:
        assert p.read_bytes() == (tmp_path / "o2" / p.name).read_bytes()


def test_enhance_corrupt_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"uieforge-ckpt-v1\nmanifest-bytes 99999\nshort")
    img = tmp_path / "x.png"
    imageio.save_image(img, np.zeros((3, 4, 4)))
    assert main(["enhance", "--checkpoint", str(bad), "--input", str(img), "--output", str(tmp_path / "o")]) == 3
    assert "manifest" in capsys.readouterr().err


def _image_dir(path, n=3, seed=0):
    path.mkdir()
    rng = np.random.default_rng(seed)
    for i in range(n):
        imageio.save_image(path / f"im{i}.png", rng.uniform(0, 1, (3, 24, 24)))
    return path


def test_eval_identical_dirs(tmp_path, capsys):
    d = _image_dir(tmp_path / "a")
    out = tmp_path / "m.csv"
    assert main(["eval", "--enhanced", str(d), "--reference", str(d), "--output", str(out)]) == 0
    rows = [ln.split(",") for ln in out.read_text().splitlines()[1:]]
    assert all(float(r[1]) == 100.0 and float(r[2]) == pytest.approx(1.0) for r in rows)
    body = np.array([[float(x) for x in r[1:]] for r in rows[:-1]])
    assert np.allclose(body.mean(axis=0), [float(x) for x in rows[-1][1:]], atol=1e-5)
    assert "niqe: n/a" in capsys.readouterr().out


def test_eval_no_reference(tmp_path):
    d = _image_dir(tmp_path / "a")
    assert main(["eval", "--enhanced", str(d), "--no-reference"]) == 0
    rows = [ln.split(",") for ln in (d / "metrics.csv").read_text().splitlines()[1:]]
    assert all(r[1] == "" and r[2] == "" and r[3] and r[4] for r in rows)


def test_eval_unmatched_names(tmp_path, capsys):
    a = _image_dir(tmp_path / "a", 3)
    b = _image_dir(tmp_path / "b", 2)
    assert main(["eval", "--enhanced", str(a), "--reference", str(b), "--output", str(tmp_path / "m.csv")]) == 1
    assert "im2.png" in capsys.readouterr().err
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 1 + 2 + 1


def test_curate_auto_only(tmp_path):
    src = _image_dir(tmp_path / "src", 4)
    assert main(["curate", "--dataset", str(src), "--output", str(tmp_path / "c"), "--auto-only"]) == 0
    assert len(list((tmp_path / "c" / "raw").iterdir())) == 4
    assert len(list((tmp_path / "c" / "reference").iterdir())) == 4
    assert len((tmp_path / "c" / "report.csv").read_text().splitlines()) == 5


def test_curate_with_failing_plugin(tmp_path, caplog):
    src = _image_dir(tmp_path / "src", 2)
    code = main(["curate", "--dataset", str(src), "--output", str(tmp_path / "c"), "--auto-only", "--enhancer", f"bad={sys.executable} -c 'raise SystemExit(1)'"])
    assert code == 0 and "bad" in caplog.text


def test_curate_needs_manual_or_auto(tmp_path):
    src = _image_dir(tmp_path / "src", 1)
    assert main(["curate", "--dataset", str(src), "--output", str(tmp_path / "c")]) == 2


def test_threads_env_and_module_entry(tmp_path):
    d = _image_dir(tmp_path / "a", 1)
    proc = subprocess.run(
        [sys.executable, "-m", "uieforge", "eval", "--enhanced", str(d), "--no-reference"],
        capture_output=True, text=True, env={"UIEFORGE_THREADS": "1", "PATH": ""},
    )
    assert proc.returncode == 0, proc.stderr
    assert "uiqm:" in proc.stdout
