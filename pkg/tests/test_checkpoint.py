import pytest
import torch

from uieforge.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint


def test_round_trip(tmp_path):
    tensors = {
        "a/w": torch.randn(3, 4),
        "b": torch.randn(2, dtype=torch.float64),
        "n": torch.tensor(7, dtype=torch.int64),
        "rng": torch.randint(0, 255, (10,), dtype=torch.uint8),
    }
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, tensors, {"step": 3, "cfg": {"k": [1, 2]}})
    got, meta = load_checkpoint(path)
    assert meta == {"step": 3, "cfg": {"k": [1, 2]}}
    assert set(got) == set(tensors)
    for k, t in tensors.items():
        assert got[k].dtype == t.dtype and torch.equal(got[k], t)
    assert path.read_bytes().startswith(MAGIC.encode())


def test_bad_magic(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"not a checkpoint\n")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_truncated_data_names_tensor(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"layer/weight": torch.randn(100)})
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(CheckpointError, match="layer/weight"):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_unsupported_dtype(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "x.ckpt", {"h": torch.zeros(2, dtype=torch.float16)})
