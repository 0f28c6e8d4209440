import numpy as np
import pytest
import torch

from uieforge import imageio
from uieforge.synthetic import make_pairs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


@pytest.fixture
def pair_dir(tmp_path):
    """Dataset directory with four 32x32 synthetic raw/reference pairs."""
    root = tmp_path / "pairs"
    (root / "raw").mkdir(parents=True)
    (root / "reference").mkdir()
    for s in make_pairs(4, 32, seed=3):
        imageio.save_image(root / "raw" / f"{s.ident}.png", s.raw)
        imageio.save_image(root / "reference" / f"{s.ident}.png", s.reference)
    return root


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash[_VERDICTS]

    def record(criterion: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
