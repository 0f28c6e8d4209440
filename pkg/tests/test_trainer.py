import numpy as np
import pytest
import torch

from uieforge import losses
from uieforge.generator import ConfigError, GeneratorConfig
from uieforge.selfcheck import MSG_CONFIG
from uieforge.synthetic import make_pairs
from uieforge.trainer import (
    CHECKPOINT_NAME,
    LOG_HEADER,
    LOG_NAME,
    PairedSample,
    TrainConfig,
    Trainer,
    augment,
    load_pairs,
    lr_at,
    rgb_phase,
)

GEN = GeneratorConfig(**MSG_CONFIG)


def small_cfg(**kw):
    base = dict(epochs=4, switch_epoch=4, batch_size=2, seed=5, checkpoint_every=2)
    base.update(kw)
    return TrainConfig(**base)


def test_schedule_examples():
    cfg = TrainConfig()
    assert lr_at(1, cfg) == pytest.approx(5e-4)
    assert lr_at(40, cfg) == pytest.approx(5e-4)
    assert lr_at(41, cfg) == pytest.approx(4e-4)
    assert lr_at(600, cfg) == pytest.approx(5e-4 * 0.8**14)
    assert lr_at(601, cfg) == pytest.approx(2e-4)
    assert lr_at(641, cfg) == pytest.approx(2e-4 * 0.8)
    assert rgb_phase(600, cfg) == "early" and rgb_phase(601, cfg) == "late"
    with pytest.raises(ValueError):
        lr_at(0, cfg)
    with pytest.raises(ValueError):
        lr_at(801, cfg)


def test_schedule_monotone_within_phases():
    cfg = TrainConfig()
    early = [lr_at(e, cfg) for e in range(1, 601)]
    late = [lr_at(e, cfg) for e in range(601, 801)]
    assert all(a >= b for a, b in zip(early, early[1:]))
    assert all(a >= b for a, b in zip(late, late[1:]))


@pytest.mark.parametrize("kw", [dict(switch_epoch=900), dict(batch_size=0), dict(lr_early=0), dict(decay=1.5)])
def test_invalid_train_config(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_augment_identity_when_disabled(rng):
    s = make_pairs(1, 32, seed=1)[0]
    out = augment(s, rng, crop=False, rotate=False, flip=False)
    assert np.array_equal(out.raw, s.raw) and np.array_equal(out.reference, s.reference) and out.transform == ()


def test_augment_keeps_correspondence_and_range():
    s = make_pairs(1, 32, seed=1)[0]
    # a sample whose raw equals its reference stays equal under any shared transform
    twin = PairedSample(s.reference.copy(), s.reference.copy(), "twin")
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(40):
        out = augment(twin, rng)
        assert np.array_equal(out.raw, out.reference)
        assert out.raw.shape == s.raw.shape
        assert out.raw.min() >= 0 and out.raw.max() <= 1
        seen.update(op[0] for op in out.transform)
    assert seen == {"crop", "rot90", "hflip", "vflip"}


def test_augment_deterministic():
    s = make_pairs(1, 32, seed=1)[0]
    a = augment(s, np.random.default_rng(9))
    b = augment(s, np.random.default_rng(9))
    assert a.transform == b.transform and np.array_equal(a.raw, b.raw)


def _batch(n=2, size=32, seed=0):
    pairs = make_pairs(n, size, seed=seed)
    raw = torch.from_numpy(np.stack([p.raw for p in pairs]))
    ref = torch.from_numpy(np.stack([p.reference for p in pairs]))
    return raw, ref


def test_zero_learning_rate_leaves_parameters_unchanged():
    tr = Trainer(GEN, small_cfg())
    before = {k: v.clone() for k, v in tr.state_tensors().items() if k.startswith(("generator/", "discriminator/"))}
    tr.train_step(*_batch(), epoch=1, lr=0.0)
    after = tr.state_tensors()
    assert all(torch.equal(before[k], after[k]) for k in before)


def test_rgb_form_switches_at_boundary():
    cfg = TrainConfig(epochs=800, switch_epoch=600, seed=1)
    tr = Trainer(GEN, cfg)
    raw, ref = _batch()
    with torch.no_grad():
        _, early = tr.generator_losses(raw, ref, 600)
        _, late = tr.generator_losses(raw, ref, 601)
        out = tr.generator(raw).image
    assert float(early["rgb"]) == pytest.approx(float(((out - ref) ** 2).mean()), rel=1e-5)
    assert float(late["rgb"]) == pytest.approx(float((out - ref).abs().mean()), rel=1e-5)


def test_total_is_weighted_sum_of_parts():
    tr = Trainer(GEN, small_cfg())
    r = tr.train_step(*_batch(), epoch=1)
    w = tr.weights
    want = r.adversarial_g + w.lab * r.lab + w.lch * r.lch + w.rgb * r.rgb + w.perceptual * r.perceptual
    assert r.total == pytest.approx(want, rel=1e-6)


def test_consecutive_steps_mostly_decrease_generator_loss():
    # on a fixed batch the generator objective should usually go down after one update
    down = 0
    for seed in range(20):
        tr = Trainer(GEN, small_cfg(seed=seed))
        raw, ref = _batch(seed=seed)
        first = tr.train_step(raw, ref, epoch=1).total
        with torch.no_grad():
            second, _ = tr.generator_losses(raw, ref, 1)
        down += float(second) <= first
    assert down >= 16, f"{down}/20"


def test_nan_aborts_naming_component(monkeypatch):
    tr = Trainer(GEN, small_cfg())
    monkeypatch.setattr(losses, "loss_lab", lambda g, r: torch.tensor(float("nan")))
    with pytest.raises(losses.NonFiniteLoss, match="lab"):
        tr.train_step(*_batch(), epoch=1)


def test_empty_inputs_rejected(tmp_path):
    tr = Trainer(GEN, small_cfg())
    with pytest.raises(ValueError):
        tr.fit([], tmp_path)
    with pytest.raises(ValueError):
        tr.train_step(torch.zeros(0, 3, 32, 32), torch.zeros(0, 3, 32, 32), 1)


def test_fit_writes_log_and_checkpoint(tmp_path):
    tr = Trainer(GEN, small_cfg(epochs=2, switch_epoch=2))
    ckpt = tr.fit(make_pairs(4, 32, seed=2), tmp_path)
    assert ckpt == tmp_path / CHECKPOINT_NAME and ckpt.exists()
    lines = (tmp_path / LOG_NAME).read_text().splitlines()
    assert lines[0] == LOG_HEADER
    assert len(lines) == 1 + 2 * 2
    assert [int(ln.split(",")[0]) for ln in lines[1:]] == [1, 2, 3, 4]


def test_resume_reproduces_uninterrupted_run(tmp_path):
    data = make_pairs(4, 32, seed=2)
    cfg = small_cfg(crop=True, rotate=True, flip=True)
    full = Trainer(GEN, cfg)
    full.fit(data, tmp_path / "full")
    part = Trainer(GEN, cfg)
    part.fit(data, tmp_path / "part", until_epoch=2)
    resumed = Trainer.resume(tmp_path / "part" / CHECKPOINT_NAME)
    assert resumed.epoch == 2 and resumed.step == 4
    resumed.fit(data, tmp_path / "part")
    a = (tmp_path / "full" / LOG_NAME).read_text()
    b = (tmp_path / "part" / LOG_NAME).read_text()
    assert a == b
    for k, v in full.state_tensors().items():
        assert torch.equal(v, resumed.state_tensors()[k]), k


def test_load_pairs(pair_dir):
    pairs = load_pairs(pair_dir, 32)
    assert len(pairs) == 4 and pairs[0].raw.shape == (3, 32, 32)
    with pytest.raises(FileNotFoundError):
        load_pairs(pair_dir / "raw", 32)
