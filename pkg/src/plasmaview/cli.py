"""Command-line entry points and experiment manifests.

Each subcommand is a thin deterministic wrapper over one module's
operations: it resolves its configuration (flags > config file >
defaults), runs, writes result files plus figures, and records a
manifest describing exactly what produced them. All randomness flows
from a single seed through named substreams, so result files can be
regenerated bit-identically; manifests additionally carry wall-clock
metadata and are append-only.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, augbase, bench, figures, models, pipeline, viewmaker as vmod
from .core import Discharge, Machine, SplitCase, SplitSpec, make_splits, substream
from .errors import ConfigError, MissingInputError, PlasmaviewError

ENV_OUT_ROOT = "PLASMAVIEW_OUT"


def _pmap(fn, items, threads: int):
    """Order-preserving map over pure per-item functions."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: config root must be an object")
    return cfg


class Resolver:
    """flags > config-file section > built-in default."""

    def __init__(self, args: argparse.Namespace, section: str):
        self.args = vars(args)
        self.section = _load_config(self.args.get("config")).get(section, {})
        self.resolved: dict = {}

    def get(self, key: str, default=None):
        flag = self.args.get(key.replace("-", "_"))
        if flag is not None:
            value = flag
        elif key in self.section:
            value = self.section[key]
        else:
            value = default
        self.resolved[key] = value
        return value


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    root = Path(os.environ.get(ENV_OUT_ROOT, "."))
    out = args.out_dir if args.out_dir else default
    path = Path(out)
    if not path.is_absolute():
        path = root / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(
    out: Path, command: str, resolved: dict, seed: int, artifacts: list[str],
    fingerprints: dict[str, str], started: float
) -> None:
    manifest = {
        "command": command,
        "config": resolved,
        "seed": seed,
        "corpus_fingerprints": fingerprints,
        "artifacts": sorted(artifacts),
        "tool_version": __version__,
        "started_unix": round(started, 3),
        "elapsed_s": round(time.time() - started, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    index = out / "manifests.jsonl"
    with index.open("a") as fh:
        fh.write(json.dumps(manifest, sort_keys=True) + "\n")


def _machines(name: str) -> list[Machine]:
    if name == "all":
        return [Machine.CMOD, Machine.D3D, Machine.EAST]
    return [Machine(name)]


def _maybe_split(
    corpus: list[Discharge], r: Resolver, seed: int
) -> tuple[list[Discharge], list[Discharge]]:
    case = r.get("split-case")
    if case is None:
        return corpus, corpus
    spec = SplitSpec(
        case=SplitCase(case),
        new_machine=Machine(r.get("new-machine", "cmod")),
        few_shot_count=int(r.get("few-shot-count", 20)),
        seed=seed,
        holdout_fraction=float(r.get("holdout-fraction", 0.25)),
    )
    return make_splits(corpus, spec)


# ----------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    started = time.time()
    r = Resolver(args, "synth")
    seed = int(r.get("seed", 0))
    out = _out_dir(args, "synth-out")
    shots_total = int(r.get("shots", 200))
    machine = r.get("machine", "all")
    frac = float(r.get("disruptive-fraction", 0.1))
    machines = _machines(machine)
    per = shots_total // len(machines)
    counts = [per] * len(machines)
    counts[0] += shots_total - per * len(machines)
    corpus: list[Discharge] = []
    for m, n in zip(machines, counts):
        rng = substream(seed, f"synth:{m.value}")
        corpus.extend(pipeline.generate_synthetic(n, m, frac, rng))
    corpus_dir = out / "corpus"
    pipeline.write_corpus(corpus, corpus_dir)
    fp = pipeline.corpus_fingerprint(corpus_dir)
    _write_manifest(out, "synth", r.resolved, seed, [str(corpus_dir)], {"corpus": fp}, started)
    print(f"wrote {len(corpus)} shots to {corpus_dir} (fingerprint {fp[:12]})")
    return 0


def cmd_preprocess(args) -> int:
    started = time.time()
    r = Resolver(args, "preprocess")
    seed = int(r.get("seed", 0))
    out = _out_dir(args, "preprocess-out")
    raw_dir = r.get("raw-dir")
    if not raw_dir:
        raise ConfigError("preprocess requires --raw-dir")
    mapping = None
    mapping_path = r.get("mapping")
    if mapping_path:
        mapping = json.loads(Path(mapping_path).read_text())
    cfg = pipeline.PreprocessConfig(
        grid_step_ms=float(r.get("grid-step-ms", 5.0)),
        min_length_ms=float(r.get("min-length-ms", 125.0)),
        truncate_tail_ms=float(r.get("truncate-tail-ms", 40.0)),
        normalization=r.get("normalization", "zscore"),
        per_machine=bool(r.get("per-machine", False)),
    )
    raw_shots = pipeline.import_external(raw_dir, mapping)
    plain_cfg = pipeline.PreprocessConfig(
        grid_step_ms=cfg.grid_step_ms,
        min_length_ms=cfg.min_length_ms,
        truncate_tail_ms=cfg.truncate_tail_ms,
        normalization="none",
    )
    kept = []
    for raw, meta in raw_shots:
        shot = pipeline.preprocess(raw, meta, plain_cfg)
        if shot is not None:
            kept.append(shot)
    dropped = len(raw_shots) - len(kept)
    normalizer_path = r.get("normalizer")
    if cfg.normalization == "zscore":
        if normalizer_path:
            norm = pipeline.Normalizer.load(normalizer_path)
        else:
            if not kept:
                raise ConfigError("no shots survive preprocessing; cannot fit normalizer")
            norm = pipeline.Normalizer.fit(kept, per_machine=cfg.per_machine)
            norm.save(out / "normalizer.json")
        kept = [norm.apply(d) for d in kept]
    corpus_dir = out / "corpus"
    pipeline.write_corpus(kept, corpus_dir)
    fp = pipeline.corpus_fingerprint(corpus_dir)
    _write_manifest(
        out, "preprocess", r.resolved, seed, [str(corpus_dir)], {"corpus": fp}, started
    )
    print(f"kept {len(kept)} shots ({dropped} below min length) -> {corpus_dir}")
    return 0


def cmd_train_viewmaker(args) -> int:
    started = time.time()
    r = Resolver(args, "train-viewmaker")
    seed = int(r.get("seed", 0))
    out = _out_dir(args, "viewmaker-out")
    corpus_dir = r.get("corpus")
    if not corpus_dir:
        raise ConfigError("train-viewmaker requires --corpus")
    corpus = pipeline.read_corpus(corpus_dir)
    if not corpus:
        raise MissingInputError(f"corpus {corpus_dir} is empty")
    vm = vmod.build_viewmaker(
        width=int(r.get("width", 16)),
        blocks=int(r.get("blocks", 2)),
        noise_channels=int(r.get("noise-channels", 2)),
        decomp_window=int(r.get("decomp-window", 25)),
        smoothing_window=int(r.get("smoothing-window", 5)),
        eps=float(r.get("eps", 0.1)),
        seed=seed,
    )
    enc = vmod.build_encoder(
        width=int(r.get("encoder-width", 16)),
        blocks=int(r.get("encoder-blocks", 2)),
        embed_dim=int(r.get("embed-dim", 64)),
        seed=seed,
    )
    cfg = vmod.TrainConfig(
        steps=int(r.get("steps", 500)),
        batch_pairs=int(r.get("batch-pairs", 16)),
        loss_weight=float(r.get("loss-weight", 2.5)),
        temperature=float(r.get("temperature", 0.05339)),
        crop_len=int(r.get("crop-len", 64)),
        learning_rate=float(r.get("learning-rate", 1e-3)),
        seed=seed,
    )
    vm, enc, history = vmod.train_adversarial(vm, enc, corpus, cfg)
    vm_path = out / "viewmaker.ckpt"
    enc_path = out / "encoder.ckpt"
    hist_path = out / "history.csv"
    vmod.save_viewmaker(vm, vm_path)
    vmod.save_encoder(enc, enc_path)
    vmod.write_history_csv(history, hist_path)
    fig_path = figures.save_training_history(
        history, out / "history.png", labels=("encoder_loss", "viewmaker_loss")
    )
    fp = pipeline.corpus_fingerprint(corpus_dir)
    _write_manifest(
        out,
        "train-viewmaker",
        r.resolved,
        seed,
        [str(vm_path), str(enc_path), str(hist_path), str(fig_path)],
        {"corpus": fp},
        started,
    )
    if history:
        print(
            f"trained viewmaker {cfg.steps} steps; final encoder loss "
            f"{history[-1][1]:.4f} -> {vm_path}"
        )
    else:
        print(f"wrote untrained viewmaker -> {vm_path}")
    return 0


def cmd_augment(args) -> int:
    started = time.time()
    r = Resolver(args, "augment")
    seed = int(r.get("seed", 0))
    out = _out_dir(args, "augment-out")
    corpus_dir = r.get("corpus")
    if not corpus_dir:
        raise ConfigError("augment requires --corpus")
    strategy = r.get("strategy", "viewmaker")
    per_shot = int(r.get("views-per-shot", 1))
    corpus = pipeline.read_corpus(corpus_dir)
    if not corpus:
        raise MissingInputError(f"corpus {corpus_dir} is empty")
    rng = substream(seed, f"augment:{strategy}")
    augmented: list[Discharge] = []
    if strategy == "viewmaker":
        ckpt = r.get("viewmaker")
        if not ckpt:
            raise ConfigError("augment --strategy viewmaker requires --viewmaker checkpoint")
        vm = vmod.load_viewmaker(ckpt)
        for shot in corpus:
            for k in range(per_shot):
                view = vmod.make_view(vm, shot.samples, rng)
                augmented.append(
                    Discharge(
                        id=f"{shot.id}#view-{k}",
                        machine=shot.machine,
                        samples=view,
                        grid_step_ms=shot.grid_step_ms,
                        disruptive=shot.disruptive,
                        disruption_time_ms=shot.disruption_time_ms,
                    )
                )
    elif strategy == "tsaug":
        spec = augbase.AugSpec()
        for shot in corpus:
            for k in range(per_shot):
                aug = augbase.apply(spec, shot.samples, rng)
                augmented.append(
                    Discharge(
                        id=f"{shot.id}#tsaug-{k}",
                        machine=shot.machine,
                        samples=aug,
                        grid_step_ms=shot.grid_step_ms,
                        disruptive=shot.disruptive,
                        disruption_time_ms=(
                            None
                            if not shot.disruptive
                            else min(shot.disruption_time_ms, aug.shape[0] * shot.grid_step_ms)
                        ),
                    )
                )
    else:
        raise ConfigError(f"unknown augment strategy {strategy!r}")
    corpus_out = out / "corpus"
    pipeline.write_corpus(augmented, corpus_out)
    fp_in = pipeline.corpus_fingerprint(corpus_dir)
    fp_out = pipeline.corpus_fingerprint(corpus_out)
    _write_manifest(
        out, "augment", r.resolved, seed, [str(corpus_out)],
        {"corpus": fp_in, "augmented": fp_out}, started,
    )
    print(f"wrote {len(augmented)} augmented shots -> {corpus_out}")
    return 0


def _resolve_aug_strategy(r: Resolver):
    aug = r.get("aug", "none")
    if aug == "none":
        return None
    if aug == "tsaug":
        return (models.AUG_TSAUG, augbase.AugSpec())
    if aug == "viewmaker":
        ckpt = r.get("viewmaker")
        if not ckpt:
            raise ConfigError("--aug viewmaker requires --viewmaker checkpoint")
        return (models.AUG_VIEWMAKER, vmod.load_viewmaker(ckpt))
    raise ConfigError(f"unknown aug strategy {aug!r}")


def cmd_train_classifier(args) -> int:
    started = time.time()
    r = Resolver(args, "train-classifier")
    seed = int(r.get("seed", 0))
    out = _out_dir(args, "classifier-out")
    corpus_dir = r.get("corpus")
    if not corpus_dir:
        raise ConfigError("train-classifier requires --corpus")
    corpus = pipeline.read_corpus(corpus_dir)
    if not corpus:
        raise MissingInputError(f"corpus {corpus_dir} is empty")
    train, _ = _maybe_split(corpus, r, seed)
    spec = models.ClassifierSpec(
        kind=r.get("model", "recurrent_attention"),
        window_length=int(r.get("window-length", 32)),
        ra_width=int(r.get("ra-width", 16)),
        ra_blocks=int(r.get("ra-blocks", 4)),
    )
    windows = models.windowize(
        train, spec.window_length, stride=int(r.get("stride", 8))
    )
    if not windows:
        raise ConfigError("no training windows; corpus shots shorter than the window")
    cfg = models.FitConfig(
        steps=int(r.get("steps", 300)),
        batch_size=int(r.get("batch-size", 32)),
        learning_rate=float(r.get("learning-rate", 1e-3)),
        seed=seed,
    )
    strategy = _resolve_aug_strategy(r)
    model, history = models.train_classifier(spec, windows, strategy, cfg)
    ckpt = out / "classifier.ckpt"
    models.save_classifier(model, ckpt)
    hist_path = out / "history.csv"
    with hist_path.open("w") as fh:
        fh.write("step,loss\n")
        for step, loss in history:
            fh.write(f"{step},{'%.17g' % loss}\n")
    fig_path = figures.save_training_history(history, out / "history.png", labels=("bce",))
    fp = pipeline.corpus_fingerprint(corpus_dir)
    _write_manifest(
        out, "train-classifier", r.resolved, seed,
        [str(ckpt), str(hist_path), str(fig_path)], {"corpus": fp}, started,
    )
    final = history[-1][1] if history else float("nan")
    print(f"trained {spec.kind} on {len(windows)} windows; final loss {final:.4f} -> {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    r = Resolver(args, "evaluate")
    seed = int(r.get("seed", 0))
    out = _out_dir(args, "evaluate-out")
    corpus_dir = r.get("corpus")
    if not corpus_dir:
        raise ConfigError("evaluate requires --corpus")
    corpus = pipeline.read_corpus(corpus_dir)
    if not corpus:
        raise MissingInputError(f"corpus {corpus_dir} is empty")
    _, test = _maybe_split(corpus, r, seed)
    cfg = bench.AlarmConfig(
        t_low=float(r.get("t-low", 0.25)),
        t_high=float(r.get("t-high", 0.5)),
        h=int(r.get("hysteresis", 2)),
        dt_req_ms=float(r.get("dt-req-ms", 40.0)),
        grid_step_ms=test[0].grid_step_ms,
    )
    threads = int(r.get("threads", 1))
    scores_dir = r.get("scores-dir")
    scores_by_shot: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    artifacts: list[str] = []
    if scores_dir:
        missing = []
        for shot in test:
            path = Path(scores_dir) / f"{pipeline.sanitize_id(shot.id)}.csv"
            if not path.exists():
                missing.append(shot.id)
                continue
            scores_by_shot[shot.id] = models.read_scores_csv(path)
        if missing:
            raise MissingInputError(
                "missing score series for shot ids: " + ", ".join(sorted(missing))
            )
    else:
        ckpt = r.get("classifier")
        if not ckpt:
            raise ConfigError("evaluate requires --classifier or --scores-dir")
        model = models.load_classifier(ckpt)
        hold = out / "scores"
        hold.mkdir(exist_ok=True)
        min_w = model.spec.window_length
        usable = [d for d in test if d.n_steps >= min_w]
        skipped = [d.id for d in test if d.n_steps < min_w]
        if skipped:
            print(f"warning: {len(skipped)} shots shorter than the window were skipped")
        results = _pmap(lambda d: models.disruptivity(model, d), usable, threads)
        test = usable
        for shot, (times, scores) in zip(usable, results):
            scores_by_shot[shot.id] = (times, scores)
            spath = hold / f"{pipeline.sanitize_id(shot.id)}.csv"
            models.write_scores_csv(times, scores, spath)
        artifacts.append(str(hold))
    report = bench.evaluate(scores_by_shot, test, cfg, grid_size=int(r.get("grid-size", 99)))
    metrics_txt = out / "metrics.txt"
    metrics_txt.write_text(bench.format_report(report))
    metrics_json = out / "metrics.json"
    metrics_json.write_text(
        json.dumps(
            {
                "strategy": r.get("strategy", "unlabeled"),
                "case": r.get("case", "unlabeled"),
                "counts": report.counts,
                "recall": report.recall,
                "precision": report.precision,
                "f2": report.f2,
                "auc": report.auc,
                "flags": report.flags,
            },
            indent=2,
            sort_keys=True,
        )
    )
    roc_path = out / "roc.csv"
    bench.write_roc_csv(report.roc_points, roc_path)
    outcomes_path = out / "outcomes.csv"
    bench.write_outcomes_csv(report.outcomes, outcomes_path)
    fig_path = figures.save_roc_curve(report.roc_points, report.auc, out / "roc.png")
    artifacts += [str(metrics_txt), str(metrics_json), str(roc_path), str(outcomes_path), str(fig_path)]
    # one disruptivity trace per confusion category, like a production postmortem
    seen: set[str] = set()
    for o in report.outcomes:
        if o.category in seen:
            continue
        seen.add(o.category)
        times, scores = scores_by_shot[o.shot_id]
        trace = figures.save_disruptivity_trace(
            times, scores, out / f"trace_{o.category}.png", alarm_time_ms=o.alarm_time_ms
        )
        artifacts.append(str(trace))
    fp = pipeline.corpus_fingerprint(corpus_dir)
    _write_manifest(out, "evaluate", r.resolved, seed, artifacts, {"corpus": fp}, started)
    print(bench.format_report(report), end="")
    return 0


def cmd_compare_dtw(args) -> int:
    started = time.time()
    r = Resolver(args, "compare-dtw")
    seed = int(r.get("seed", 0))
    out = _out_dir(args, "compare-out")
    corpus_dir = r.get("corpus")
    ckpt = r.get("viewmaker")
    if not corpus_dir or not ckpt:
        raise ConfigError("compare-dtw requires --corpus and --viewmaker")
    corpus = pipeline.read_corpus(corpus_dir)
    vm = vmod.load_viewmaker(ckpt)
    rng = substream(seed, "compare-dtw")
    report = analysis.compare_augmentations(
        corpus, vm, augbase.AugSpec(), n_samples=int(r.get("samples", 50)), rng=rng
    )
    pairs_path = out / "pairs.csv"
    analysis.write_pairs_csv(report, pairs_path)
    txt_path = out / "compare.txt"
    txt_path.write_text(analysis.format_compare_report(report))
    fig_path = figures.save_dtw_histogram(
        [p[1] for p in report.pairs], [p[2] for p in report.pairs], out / "distances.png"
    )
    fp = pipeline.corpus_fingerprint(corpus_dir)
    _write_manifest(
        out, "compare-dtw", r.resolved, seed,
        [str(pairs_path), str(txt_path), str(fig_path)], {"corpus": fp}, started,
    )
    print(analysis.format_compare_report(report), end="")
    return 0


def cmd_report(args) -> int:
    started = time.time()
    r = Resolver(args, "report")
    seed = int(r.get("seed", 0))
    out = _out_dir(args, "report-out")
    run_dirs = args.runs or r.get("runs", [])
    if not run_dirs:
        raise ConfigError("report requires at least one evaluate output directory")
    root = Path(os.environ.get(ENV_OUT_ROOT, "."))
    rows = []
    for run in run_dirs:
        run_path = Path(run)
        if not run_path.is_absolute() and not (run_path / "metrics.json").exists():
            run_path = root / run_path
        path = run_path / "metrics.json"
        if not path.exists():
            raise MissingInputError(f"no metrics.json under {run}")
        data = json.loads(path.read_text())
        recomputed = bench.f2(data["precision"], data["recall"])
        if abs(recomputed - data["f2"]) > 1e-9:
            raise ConfigError(
                f"{path}: stored F2 {data['f2']} inconsistent with precision/recall"
            )
        rows.append(
            {
                "label": f"{data['strategy']}/{data['case']}",
                "strategy": data["strategy"],
                "case": data["case"],
                "auc": data["auc"],
                "recall": data["recall"],
                "precision": data["precision"],
                "f2": data["f2"],
            }
        )
    rows.sort(key=lambda row: (row["case"], row["strategy"]))
    table_path = out / "table.csv"
    with table_path.open("w") as fh:
        fh.write("case,strategy,auc,recall,precision,f2\n")
        for row in rows:
            fh.write(
                f"{row['case']},{row['strategy']},"
                f"{row['auc']:.6f},{row['recall']:.6f},{row['precision']:.6f},{row['f2']:.6f}\n"
            )
    txt_lines = ["benchmark summary", f"{'case':<16}{'strategy':<12}{'AUC':>8}{'recall':>8}{'prec':>8}{'F2':>8}"]
    for row in rows:
        txt_lines.append(
            f"{row['case']:<16}{row['strategy']:<12}"
            f"{row['auc']:>8.3f}{row['recall']:>8.3f}{row['precision']:>8.3f}{row['f2']:>8.3f}"
        )
    txt_path = out / "report.txt"
    txt_path.write_text("\n".join(txt_lines) + "\n")
    fig_path = figures.save_metrics_bars(rows, out / "metrics.png")
    _write_manifest(
        out, "report", r.resolved, seed,
        [str(table_path), str(txt_path), str(fig_path)], {}, started,
    )
    print("\n".join(txt_lines))
    return 0


# -------------------------------------------------------------- arg parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with per-command sections")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--threads", type=int, help="parallel workers for per-shot work")
    p.add_argument("--out-dir", help="output directory for this command")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plasmaview",
        description="Learned time-series augmentation and disruption benchmarking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--shots", type=int)
    p.add_argument("--machine", choices=["cmod", "d3d", "east", "all"])
    p.add_argument("--disruptive-fraction", type=float)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("preprocess", help="import and preprocess raw shot exports")
    _add_common(p)
    p.add_argument("--raw-dir")
    p.add_argument("--mapping", help="JSON column-name mapping override")
    p.add_argument("--grid-step-ms", type=float)
    p.add_argument("--min-length-ms", type=float)
    p.add_argument("--truncate-tail-ms", type=float)
    p.add_argument("--normalization", choices=["zscore", "none"])
    p.add_argument("--per-machine", action="store_const", const=True)
    p.add_argument("--normalizer", help="reuse an existing normalizer.json")
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train-viewmaker", help="adversarially train the view generators")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-pairs", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--noise-channels", type=int)
    p.add_argument("--decomp-window", type=int)
    p.add_argument("--smoothing-window", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--encoder-width", type=int)
    p.add_argument("--encoder-blocks", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--loss-weight", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--crop-len", type=int)
    p.add_argument("--learning-rate", type=float)
    p.set_defaults(fn=cmd_train_viewmaker)

    p = sub.add_parser("augment", help="write an augmented corpus")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--strategy", choices=["viewmaker", "tsaug"])
    p.add_argument("--viewmaker", help="viewmaker checkpoint path")
    p.add_argument("--views-per-shot", type=int)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train-classifier", help="train a disruption classifier")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--model", choices=["fcn", "recurrent_attention"])
    p.add_argument("--aug", choices=["none", "tsaug", "viewmaker"])
    p.add_argument("--viewmaker", help="viewmaker checkpoint for --aug viewmaker")
    p.add_argument("--window-length", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--ra-width", type=int)
    p.add_argument("--ra-blocks", type=int)
    p.add_argument("--split-case", choices=[c.value for c in SplitCase])
    p.add_argument("--new-machine", choices=["cmod", "d3d", "east"])
    p.add_argument("--few-shot-count", type=int)
    p.add_argument("--holdout-fraction", type=float)
    p.set_defaults(fn=cmd_train_classifier)

    p = sub.add_parser("evaluate", help="run the alarm benchmark on a test corpus")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--classifier", help="classifier checkpoint path")
    p.add_argument("--scores-dir", help="precomputed disruptivity CSV directory")
    p.add_argument("--t-low", type=float)
    p.add_argument("--t-high", type=float)
    p.add_argument("--hysteresis", type=int)
    p.add_argument("--dt-req-ms", type=float)
    p.add_argument("--grid-size", type=int)
    p.add_argument("--strategy", help="label recorded in metrics.json")
    p.add_argument("--case", help="label recorded in metrics.json")
    p.add_argument("--split-case", choices=[c.value for c in SplitCase])
    p.add_argument("--new-machine", choices=["cmod", "d3d", "east"])
    p.add_argument("--few-shot-count", type=int)
    p.add_argument("--holdout-fraction", type=float)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("compare-dtw", help="distance comparison of augmentations")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--viewmaker")
    p.add_argument("--samples", type=int)
    p.set_defaults(fn=cmd_compare_dtw)

    p = sub.add_parser("report", help="build the summary table from evaluate runs")
    _add_common(p)
    p.add_argument("runs", nargs="*", help="evaluate output directories")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PlasmaviewError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
