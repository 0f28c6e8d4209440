import pytest

from uieforge.config import load_run_config
from uieforge.generator import ConfigError


def write(tmp_path, text):
    p = tmp_path / "run.toml"
    p.write_text(text)
    return p


def test_defaults_without_file():
    cfg = load_run_config()
    assert cfg.generator.image_size == 256 and cfg.train.epochs == 800 and cfg.train.switch_epoch == 600
    assert cfg.loss.perceptual == 100.0


def test_file_and_overrides(tmp_path):
    p = write(
        tmp_path,
        'seed = 3\n[generator]\nimage_size = 128\n[train]\nepochs = 10\nbatch_size = 2\n[loss]\nlab = 0.5\n[paths]\ndataset = "d"\n',
    )
    cfg = load_run_config(p, epochs=4, seed=9, image_size=64)
    assert cfg.generator.image_size == 64 and cfg.train.epochs == 4 and cfg.train.batch_size == 2
    assert cfg.seed == 9 and cfg.train.seed == 9 and cfg.loss.lab == 0.5
    assert str(cfg.paths["dataset"]) == "d"
    # a short run clamps the schedule switch into the epoch budget
    assert cfg.train.switch_epoch == 4


@pytest.mark.parametrize(
    "text, key",
    [
        ("[generator]\nimage_sise = 64\n", "image_sise"),
        ("[trainer]\nepochs = 3\n", "trainer"),
        ("[paths]\nweights = 'x'\n", "weights"),
        ("[loss]\nalpha = 1\n", "alpha"),
    ],
)
def test_unknown_keys_rejected(tmp_path, text, key):
    with pytest.raises(ConfigError, match=key):
        load_run_config(write(tmp_path, text))


def test_invalid_values_rejected(tmp_path):
    with pytest.raises(ConfigError, match="image_size"):
        load_run_config(write(tmp_path, "[generator]\nimage_size = 100\n"))
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, "[train\n"))
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "missing.toml")


def test_toml_echo_round_trips(tmp_path):
    cfg = load_run_config(write(tmp_path, "[train]\nepochs = 12\n"), dataset="data", output="out")
    again = load_run_config(write(tmp_path, cfg.to_toml()))
    assert again == cfg
