import numpy as np
import pytest

from conftest import make_shot
from plasmaview import models as M
from plasmaview.augbase import AugSpec
from plasmaview.core import DEFAULT_SCHEMA, Machine, substream
from plasmaview.errors import ConfigError
from plasmaview.viewmaker import build_viewmaker

IND = list(DEFAULT_SCHEMA.indicator_idx)


def test_windowize_nondisruptive_all_zero(small_corpus):
    clean = [d for d in small_corpus if not d.disruptive][:5]
    windows = M.windowize(clean, 16, stride=4)
    assert windows and all(w.label == 0 for w in windows)


def test_windowize_label_horizon_cmod():
    shot = make_shot("x", Machine.CMOD, n_steps=100, disruptive=True, seed=1)
    windows = M.windowize([shot], 16, stride=1)
    # tau = 50 ms at 5 ms grid: windows ending within the final 10 steps
    # before disruption (t >= 450 ms) are positive
    for w in windows:
        assert w.label == int(w.end_time_ms >= shot.disruption_time_ms - 50.0)
    assert sum(w.label for w in windows) == 10


def test_windowize_stride_equals_length():
    shot = make_shot("y", n_steps=64, seed=2)
    windows = M.windowize([shot], 64, stride=64)
    assert len(windows) == 1


def test_windowize_skips_short_shots():
    shot = make_shot("z", n_steps=8, seed=3)
    with pytest.warns(UserWarning, match="skipped"):
        windows = M.windowize([shot], 16)
    assert windows == []


def test_classifier_scores_in_open_interval(d3d_corpus):
    spec = M.ClassifierSpec(kind="recurrent_attention", window_length=16, ra_width=8, ra_blocks=1)
    model = M.build_classifier(spec, seed=0)
    windows = np.stack([w.window for w in M.windowize(d3d_corpus[:4], 16, stride=16)])
    scores = model.score(windows)
    assert np.all((scores > 0.0) & (scores < 1.0))


def test_single_window_memorization():
    shot = make_shot("m", n_steps=32, disruptive=True, seed=4)
    windows = M.windowize([shot], 32, stride=32)
    assert len(windows) == 1
    spec = M.ClassifierSpec(kind="recurrent_attention", window_length=32, ra_width=8, ra_blocks=1)
    model, hist = M.train_classifier(
        spec, windows, None, M.FitConfig(steps=150, batch_size=4, seed=0)
    )
    assert hist[-1][1] < 1e-2


def test_training_loss_falls_on_separable_corpus(d3d_corpus):
    spec = M.ClassifierSpec(kind="recurrent_attention", window_length=32, ra_width=16, ra_blocks=4)
    windows = M.windowize(d3d_corpus, 32, stride=8)
    for seed in (0, 1, 2):
        _, hist = M.train_classifier(
            spec, windows, None, M.FitConfig(steps=300, batch_size=32, seed=seed)
        )
        assert min(loss for _, loss in hist) < 0.3, f"seed {seed}"


def test_fcn_trains_and_loss_decreases(d3d_corpus):
    spec = M.ClassifierSpec(kind="fcn", window_length=32)
    windows = M.windowize(d3d_corpus[:20], 32, stride=16)
    _, hist = M.train_classifier(spec, windows, None, M.FitConfig(steps=60, batch_size=16, seed=0))
    first = np.mean([l for _, l in hist[:10]])
    last = np.mean([l for _, l in hist[-10:]])
    assert last < first


def test_viewmaker_zero_heads_equals_none(d3d_corpus):
    vm = build_viewmaker(width=6, blocks=1, noise_channels=1, seed=0)
    for gen in (vm.v_t, vm.v_s):
        gen.head.w.value[...] = 0.0
        gen.head.b.value[...] = 0.0
    spec = M.ClassifierSpec(kind="recurrent_attention", window_length=16, ra_width=8, ra_blocks=1)
    windows = M.windowize(d3d_corpus[:10], 16, stride=16)
    cfg = M.FitConfig(steps=20, batch_size=8, seed=5)
    m_none, _ = M.train_classifier(spec, windows, None, cfg)
    m_vm, _ = M.train_classifier(spec, windows, (M.AUG_VIEWMAKER, vm), cfg)
    for a, b in zip(m_none.all_params(), m_vm.all_params()):
        assert np.array_equal(a.value, b.value)


def test_training_deterministic_with_tsaug(d3d_corpus):
    spec = M.ClassifierSpec(kind="recurrent_attention", window_length=16, ra_width=8, ra_blocks=1)
    windows = M.windowize(d3d_corpus[:10], 16, stride=16)
    cfg = M.FitConfig(steps=15, batch_size=8, seed=6)

    def run():
        model, _ = M.train_classifier(spec, windows, (M.AUG_TSAUG, AugSpec()), cfg)
        return np.concatenate([p.value.ravel() for p in model.all_params()])

    assert np.array_equal(run(), run())


def test_augmentation_preserves_indicator_channels(d3d_corpus):
    vm = build_viewmaker(width=6, blocks=1, seed=1)
    windows = M.windowize(d3d_corpus[:6], 16, stride=16)
    batch = np.stack([w.window for w in windows[:8]])
    for strategy in (None, (M.AUG_TSAUG, AugSpec()), (M.AUG_VIEWMAKER, vm)):
        _, fn = M._make_augmenter(strategy, DEFAULT_SCHEMA)
        out = fn(batch, substream(0, "aug"))
        assert np.array_equal(out[:, :, IND], batch[:, :, IND])


def test_disruptivity_alignment_and_causality(d3d_corpus):
    spec = M.ClassifierSpec(kind="recurrent_attention", window_length=16, ra_width=8, ra_blocks=1)
    model = M.build_classifier(spec, seed=2)
    shot = d3d_corpus[0]
    times, scores = M.disruptivity(model, shot)
    assert len(scores) == shot.n_steps - 16 + 1
    assert times[0] == 15 * shot.grid_step_ms
    assert np.all((scores > 0.0) & (scores < 1.0))
    # truncating the shot never changes earlier scores
    cut = shot.with_samples(shot.samples[:60])
    t2, s2 = M.disruptivity(model, cut)
    n = len(s2)
    assert np.array_equal(t2, times[:n])
    assert np.array_equal(s2, scores[:n])


def test_disruptivity_shot_too_short():
    spec = M.ClassifierSpec(kind="recurrent_attention", window_length=64, ra_width=8, ra_blocks=1)
    model = M.build_classifier(spec, seed=0)
    with pytest.raises(ConfigError):
        M.disruptivity(model, make_shot(n_steps=10))


def test_disruptivity_detects_synthetic_signature(d3d_corpus):
    spec = M.ClassifierSpec(kind="recurrent_attention", window_length=32, ra_width=16, ra_blocks=2)
    windows = M.windowize(d3d_corpus, 32, stride=8)
    model, _ = M.train_classifier(spec, windows, None, M.FitConfig(steps=200, batch_size=32, seed=0))
    tau_steps = int(150.0 / 5.0)
    hits = 0
    disruptive = [d for d in d3d_corpus if d.disruptive][:8]
    for shot in disruptive:
        _, scores = M.disruptivity(model, shot)
        if scores[-tau_steps:].mean() > scores[:tau_steps].mean():
            hits += 1
    assert hits >= 6


def test_scores_csv_round_trip(tmp_path):
    times = np.array([75.0, 80.0, 85.0])
    scores = np.array([0.125, 0.5, 0.875])
    M.write_scores_csv(times, scores, tmp_path / "s.csv")
    t, s = M.read_scores_csv(tmp_path / "s.csv")
    assert np.array_equal(t, times) and np.array_equal(s, scores)


def test_classifier_checkpoint_round_trip(tmp_path, d3d_corpus):
    spec = M.ClassifierSpec(kind="fcn", window_length=16, fcn_widths=(8, 12, 8))
    model = M.build_classifier(spec, seed=3)
    M.save_classifier(model, tmp_path / "c.ckpt")
    loaded = M.load_classifier(tmp_path / "c.ckpt")
    assert loaded.spec == spec
    x = np.stack([w.window for w in M.windowize(d3d_corpus[:2], 16, stride=32)])
    assert np.array_equal(model.score(x), loaded.score(x))
