"""Acceptance suite: one test per criterion, each printing a PASS line
with its measured margin. Run with `pytest -s tests/test_acceptance.py`
to see the per-criterion report.
"""
import itertools
from pathlib import Path

import numpy as np

from oracles import alarm_brute, dtw_brute, simclr_brute
from plasmaview import bench, gradnet as gn, models as M
from plasmaview.analysis import compare_augmentations, dtw, wilcoxon_signed_rank
from plasmaview.augbase import AugSpec
from plasmaview.bench import AlarmConfig
from plasmaview.cli import main as cli_main
from plasmaview.core import DEFAULT_SCHEMA, Machine, substream
from plasmaview.decomp import decompose, recompose
from plasmaview.pipeline import generate_synthetic
from plasmaview.viewmaker import (
    TrainConfig,
    build_encoder,
    build_viewmaker,
    make_views_batch,
    simclr_loss,
    train_adversarial,
)

IND = list(DEFAULT_SCHEMA.indicator_idx)


def report(name, detail):
    print(f"\nACCEPTANCE {name}: PASS ({detail})")


def test_criterion_01_f2_arithmetic_reproduction():
    """Published-table arithmetic: F2 from its own precision/recall."""
    a = bench.f2(0.446, 0.877)
    b = bench.f2(0.213, 0.860)
    assert abs(a - 0.735) <= 0.001
    assert abs(b - 0.535) <= 0.001
    report("1 f2-arithmetic", f"f2(0.446,0.877)={a:.4f}, f2(0.213,0.860)={b:.4f}")


def test_criterion_02_contrastive_loss_oracle_equivalence():
    """1000 random batches vs the brute-force double-loop formula."""
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        e = int(rng.integers(2, 10))
        z = rng.normal(size=(2 * n, e)) * rng.uniform(0.2, 3.0)
        tau = float(rng.uniform(0.05, 2.0))
        worst = max(worst, abs(simclr_loss(z, tau) - simclr_brute(z, tau)))
    assert worst < 1e-10
    report("2 contrastive-oracle", f"1000 batches, max abs diff {worst:.2e}")


def test_criterion_03_distortion_budget_invariant():
    """10^4 views across seeds and training stages stay inside the L1
    ball and never touch the indicator channels."""
    corpus = generate_synthetic(40, Machine.CMOD, 0.25, substream(30, "acc3"))
    checked = 0
    worst_excess = -np.inf
    for seed in (0, 1):
        vm = build_viewmaker(width=6, blocks=1, noise_channels=2, eps=0.1, seed=seed)
        enc = build_encoder(width=6, blocks=1, embed_dim=8, seed=seed)
        noise = substream(seed, "acc3-noise")
        for stage in range(5):
            if stage > 0:  # advance training between stages
                train_adversarial(
                    vm, enc, corpus,
                    TrainConfig(steps=8, batch_pairs=4, crop_len=24, seed=seed * 10 + stage),
                )
            data = substream(seed * 100 + stage, "acc3-data")
            for _ in range(10):
                T = int(data.integers(16, 56))
                x = data.normal(size=(100, T, 12))
                x[:, :, IND] = 0.0
                x[:, :, IND[0]] = 1.0
                state = make_views_batch(vm, x, noise)
                delta = state.views - x
                budget = vm.eps * T * 12
                norms = np.abs(delta).sum(axis=(1, 2))
                worst_excess = max(worst_excess, float(norms.max() - budget))
                assert np.all(norms <= budget + 1e-9)
                assert np.array_equal(state.views[:, :, IND], x[:, :, IND])
                checked += x.shape[0]
    assert checked >= 10_000
    report("3 distortion-budget", f"{checked} views, worst budget excess {worst_excess:.2e}")


def test_criterion_04_decomposition_exactness():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(1000):
        T = int(rng.integers(1, 120))
        d = int(rng.integers(1, 13))
        w = int(rng.choice([1, 3, 5, 7, 9, 15, 25, 51, 101]))
        x = rng.normal(size=(T, d)) * rng.uniform(0.01, 100)
        trend, seasonal = decompose(x, w)
        worst = max(worst, float(np.max(np.abs(recompose(trend, seasonal) - x))))
    assert worst < 1e-12
    report("4 decomposition-exactness", f"1000 matrices, worst |x - (t+s)| = {worst:.2e}")


def _checked_input(build_input, model, forward, min_margin=1e-3, tries=20):
    """Draw inputs until relu pre-activations sit clear of the kink, where
    central differences are uninformative."""
    for k in range(tries):
        x = build_input(k)
        forward(x)
        if gn.relu_kink_margin(model) > min_margin:
            return x
    raise AssertionError("could not find a kink-free input")


def test_criterion_05_gradient_checks():
    """Every layer kind and each full model at toy width, 20 seeds each,
    finite differences at 1e-4 relative tolerance."""
    layer_cases = {
        "dense": (lambda r: gn.Dense(4, 3, r), (2, 5, 4)),
        "layer_norm": (lambda r: gn.LayerNorm(6), (3, 6)),
        "activation": (lambda r: gn.Activation("tanh"), (3, 6)),
        "recurrent_cell": (lambda r: gn.LSTM(3, 4, r), (2, 6, 3)),
        "conv1d": (lambda r: gn.Conv1d(3, 4, 5, r), (2, 8, 3)),
        "self_attention_block": (lambda r: gn.AttentionBlock(6, r, heads=1), (2, 7, 6)),
    }
    margins = {}
    for name, (build, shape) in layer_cases.items():
        worst = 0.0
        for seed in range(20):
            layer = build(np.random.default_rng(seed))
            x = _checked_input(
                lambda k: np.random.default_rng(1000 + 37 * seed + k).normal(size=shape),
                layer,
                layer.forward,
            )
            rep = gn.grad_check(layer, x, h=1e-5, tolerance=1e-4)
            worst = max(worst, rep["max_rel_err"])
            assert rep["passed"], f"{name} seed {seed}: {rep['max_rel_err']:.2e}"
        margins[name] = worst

    def generator_case(seed):
        rng = np.random.default_rng(seed)
        genr = build_viewmaker(width=6, blocks=1, noise_channels=1, seed=seed).v_t
        noises = [np.random.default_rng(2000 + seed).normal(size=(2, 6, 1))]
        holder = {}

        def fwd(x=None):
            if x is not None:
                holder["x"] = x
            return genr.forward(holder["x"], noises)

        x = _checked_input(
            lambda k: np.random.default_rng(3000 + 11 * seed + k).normal(size=(2, 6, 12)),
            genr,
            fwd,
        )
        return genr, lambda: genr.forward(x, noises)

    model_cases = {
        "viewmaker_generator": generator_case,
    }

    def encoder_case(seed):
        enc = build_encoder(width=6, blocks=1, embed_dim=4, seed=seed)
        x = _checked_input(
            lambda k: np.random.default_rng(4000 + 13 * seed + k).normal(size=(2, 6, 12)),
            enc,
            enc.forward,
        )
        return enc, lambda: enc.forward(x)

    model_cases["encoder"] = encoder_case

    def fcn_case(seed):
        spec = M.ClassifierSpec(kind="fcn", window_length=10, fcn_widths=(4, 5, 4))
        clf = M.build_classifier(spec, seed=seed)
        x = _checked_input(
            lambda k: np.random.default_rng(5000 + 17 * seed + k).normal(size=(2, 10, 12)),
            clf,
            clf.forward,
        )
        return clf, lambda: clf.forward(x)

    model_cases["fcn_classifier"] = fcn_case

    def ra_case(seed):
        spec = M.ClassifierSpec(kind="recurrent_attention", window_length=7, ra_width=6, ra_blocks=1)
        clf = M.build_classifier(spec, seed=seed)
        x = _checked_input(
            lambda k: np.random.default_rng(6000 + 19 * seed + k).normal(size=(2, 7, 12)),
            clf,
            clf.forward,
        )
        return clf, lambda: clf.forward(x)

    model_cases["recurrent_attention_classifier"] = ra_case

    for name, case in model_cases.items():
        worst = 0.0
        for seed in range(20):
            model, forward = case(seed)
            rep = gn.grad_check(model, None, forward=forward, h=1e-5, tolerance=1e-4)
            worst = max(worst, rep["max_rel_err"])
            assert rep["passed"], f"{name} seed {seed}: {rep['max_rel_err']:.2e}"
        margins[name] = worst

    worst_overall = max(margins.values())
    report(
        "5 gradient-checks",
        f"{len(layer_cases)} layer kinds + {len(model_cases)} models x 20 seeds, "
        f"worst rel err {worst_overall:.2e}",
    )


def test_criterion_06_alarm_machine_oracle():
    rng = np.random.default_rng(606)
    for _ in range(10_000):
        n = int(rng.integers(2, 50))
        scores = rng.random(n)
        t_high = float(rng.uniform(0.15, 0.95))
        t_low = float(rng.uniform(0.0, t_high - 0.05))
        h = int(rng.integers(1, 5))
        dt_req = float(rng.choice([0.0, 15.0, 40.0]))
        cfg = AlarmConfig(t_low=t_low, t_high=t_high, h=h, dt_req_ms=dt_req, grid_step_ms=5.0)
        assert bench.run_alarm(scores, cfg) == alarm_brute(
            scores, t_low, t_high, h, dt_req, 5.0
        )
    # hand-traced counter semantics, including the reset case
    cfg = AlarmConfig(t_low=0.2, t_high=0.5, h=2, dt_req_ms=0.0, grid_step_ms=5.0)
    assert bench.run_alarm(np.array([0.1, 0.6, 0.3, 0.6, 0.1, 0.1]), cfg) == (True, 15.0)
    assert bench.run_alarm(np.array([0.1, 0.6, 0.1, 0.6, 0.1, 0.1]), cfg) == (False, None)
    acfg = AlarmConfig(dt_req_ms=40.0)
    assert bench.categorize(True, True, 400.0, 500.0, acfg) == "TP"
    assert bench.categorize(True, True, 480.0, 500.0, acfg) == "FN"
    assert bench.categorize(False, False, None, None, acfg) == "TN"
    report("6 alarm-oracle", "10000 random series match brute-force re-simulation")


def test_criterion_07_dtw_oracle():
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(500):
        ta, tb = rng.integers(1, 7, size=2)
        d = int(rng.integers(1, 5))
        a = rng.normal(size=(int(ta), d))
        b = rng.normal(size=(int(tb), d))
        worst = max(worst, abs(dtw(a, b) - dtw_brute(a, b)))
    assert worst < 1e-10
    sym_worst = 0.0
    for _ in range(1000):
        a = rng.normal(size=(int(rng.integers(1, 20)), 3))
        b = rng.normal(size=(int(rng.integers(1, 20)), 3))
        assert dtw(a, a) == 0.0
        sym_worst = max(sym_worst, abs(dtw(a, b) - dtw(b, a)))
    assert sym_worst < 1e-10
    report("7 dtw-oracle", f"500 pairs vs path enumeration (diff {worst:.2e}), symmetry {sym_worst:.2e}")


def _wilcoxon_enum_fast(x, y):
    """Full 2^n sign enumeration, vectorized but still exhaustive."""
    d = x - y
    d = d[d != 0]
    n = len(d)
    from oracles import midranks

    ranks = midranks(np.abs(d))
    w_plus = ranks[d > 0].sum()
    total = ranks.sum()
    signs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    ws = signs @ ranks
    lo, hi = min(w_plus, total - w_plus), max(w_plus, total - w_plus)
    return min(float(((ws <= lo + 1e-9) | (ws >= hi - 1e-9)).mean()), 1.0)


def test_criterion_08_wilcoxon_exactness():
    rng = np.random.default_rng(808)
    checked = 0
    worst = 0.0
    while checked < 200:
        n = int(rng.integers(2, 13))
        x = np.round(rng.normal(size=n), 1)
        y = np.round(rng.normal(size=n), 1)
        if np.all(x == y):
            continue
        mine = wilcoxon_signed_rank(x, y).p_value
        oracle = _wilcoxon_enum_fast(x, y)
        worst = max(worst, abs(mine - oracle))
        assert worst < 1e-12, (x, y, mine, oracle)
        checked += 1
    report("8 wilcoxon-exactness", f"200 samples (n<=12) vs 2^n enumeration, max diff {worst:.2e}")


def test_criterion_09_end_to_end_direction():
    """Statistical mirror of the published finding on the synthetic
    separable corpus: views sit closer to originals than baseline
    augmentations, and view-trained classifiers are non-inferior."""
    auc_gaps = []
    dtw_pairs = []
    for seed in (0, 1, 2):
        corpus = generate_synthetic(420, Machine.D3D, 0.25, substream(seed, "acc9-synth"))
        train, test = corpus[::2], corpus[1::2]
        vm = build_viewmaker(width=8, blocks=1, noise_channels=2, seed=seed)
        enc = build_encoder(width=8, blocks=1, embed_dim=16, seed=seed)
        vm, enc, _ = train_adversarial(
            vm, enc, train, TrainConfig(steps=80, batch_pairs=8, crop_len=32, seed=seed)
        )
        spec = M.ClassifierSpec(
            kind="recurrent_attention", window_length=32, ra_width=16, ra_blocks=2
        )
        windows = M.windowize(train, 32, stride=8)
        aucs = {}
        for name, strat in (("none", None), ("viewmaker", (M.AUG_VIEWMAKER, vm))):
            model, _ = M.train_classifier(
                spec, windows, strat, M.FitConfig(steps=250, batch_size=32, seed=seed)
            )
            scores = {d.id: M.disruptivity(model, d) for d in test}
            rep = bench.evaluate(scores, test, AlarmConfig(grid_step_ms=5.0), grid_size=49)
            aucs[name] = rep.auc
        # separable-by-construction corpus: the plain classifier clears 0.9
        assert aucs["none"] >= 0.9, aucs
        auc_gaps.append(aucs["viewmaker"] - aucs["none"])
        cmp = compare_augmentations(train, vm, AugSpec(), 60, substream(seed, "acc9-cmp"))
        dtw_pairs.append((cmp.mean_view, cmp.mean_baseline))
        assert cmp.wilcoxon is not None and cmp.wilcoxon.p_value < 0.001

    mean_view = float(np.mean([p[0] for p in dtw_pairs]))
    mean_base = float(np.mean([p[1] for p in dtw_pairs]))
    assert mean_view < mean_base, dtw_pairs
    mean_gap = float(np.mean(auc_gaps))
    assert mean_gap >= -0.02, auc_gaps
    report(
        "9 end-to-end-direction",
        f"DTW view {mean_view:.1f} < baseline {mean_base:.1f}; "
        f"AUC gap (view - none) {mean_gap:+.4f} >= -0.02",
    )


def _pipeline_files(root: Path) -> dict:
    skip = {"manifest.json", "manifests.jsonl"}
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in skip:
            out[str(p.relative_to(root))] = p.read_bytes()
    return out


def test_criterion_10_pipeline_determinism(tmp_path):
    """Same seed, different run dirs and thread counts: every corpus,
    checkpoint, CSV, report, and figure is byte-identical."""

    def run_pipeline(root: Path, threads: int):
        corpus = root / "synth" / "corpus"
        assert cli_main(["synth", "--shots", "24", "--machine", "d3d",
                         "--disruptive-fraction", "0.25", "--seed", "17",
                         "--out-dir", str(root / "synth")]) == 0
        assert cli_main(["train-viewmaker", "--corpus", str(corpus), "--steps", "6",
                         "--width", "6", "--blocks", "1", "--batch-pairs", "4",
                         "--crop-len", "24", "--seed", "17",
                         "--out-dir", str(root / "vm")]) == 0
        assert cli_main(["augment", "--corpus", str(corpus), "--strategy", "viewmaker",
                         "--viewmaker", str(root / "vm" / "viewmaker.ckpt"),
                         "--seed", "17", "--out-dir", str(root / "aug")]) == 0
        assert cli_main(["train-classifier", "--corpus", str(corpus), "--model",
                         "recurrent_attention", "--aug", "viewmaker",
                         "--viewmaker", str(root / "vm" / "viewmaker.ckpt"),
                         "--window-length", "24", "--ra-blocks", "1", "--steps", "15",
                         "--seed", "17", "--out-dir", str(root / "clf")]) == 0
        assert cli_main(["evaluate", "--corpus", str(corpus), "--classifier",
                         str(root / "clf" / "classifier.ckpt"), "--grid-size", "9",
                         "--strategy", "viewmaker", "--case", "single", "--seed", "17",
                         "--threads", str(threads), "--out-dir", str(root / "eval")]) == 0
        assert cli_main(["compare-dtw", "--corpus", str(corpus), "--viewmaker",
                         str(root / "vm" / "viewmaker.ckpt"), "--samples", "5",
                         "--seed", "17", "--out-dir", str(root / "cmp")]) == 0
        assert cli_main(["report", "--out-dir", str(root / "report"),
                         str(root / "eval")]) == 0

    run_pipeline(tmp_path / "run1", threads=1)
    run_pipeline(tmp_path / "run2", threads=4)
    files1 = _pipeline_files(tmp_path / "run1")
    files2 = _pipeline_files(tmp_path / "run2")
    assert files1.keys() == files2.keys()
    diffs = [k for k in files1 if files1[k] != files2[k]]
    assert not diffs, f"non-identical files: {diffs}"
    report(
        "10 pipeline-determinism",
        f"{len(files1)} result files byte-identical across reruns and thread counts",
    )
