"""Disruption classifiers over sliding windows of discharge series.

Two post-hoc models share one supervised loop: a fully convolutional
network (three conv blocks, global average pool) and a recurrent-
positional-encoding attention classifier (LSTM, layer norm, four
attention blocks). Both emit a per-window disruptivity score in (0, 1);
scanning a shot with stride 1 yields the time-resolved trace consumed by
the alarm benchmark.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import augbase, gradnet, viewmaker as vmod
from .core import DEFAULT_SCHEMA, MACHINE_STATS, Discharge, FeatureSchema, substream
from .errors import ConfigError, MissingInputError, NumericError, SchemaError
from .gradnet import (
    Activation,
    AttentionBlock,
    Conv1d,
    Dense,
    Layer,
    LayerNorm,
    LSTM,
    MeanPoolTime,
    make_optimizer,
    sigmoid,
)


@dataclass(frozen=True)
class ClassifierSpec:
    """Architecture selector. ``kind`` is "fcn" or "recurrent_attention".

    The FCN widths/kernels follow the standard three-block design
    (128/256/128, kernels 8/5/3); override them only for toy-size
    gradient checking.
    """

    kind: str = "recurrent_attention"
    window_length: int = 32
    fcn_widths: tuple[int, int, int] = (128, 256, 128)
    fcn_kernels: tuple[int, int, int] = (8, 5, 3)
    ra_width: int = 16
    ra_blocks: int = 4
    ra_heads: int = 1

    def __post_init__(self):
        if self.kind not in ("fcn", "recurrent_attention"):
            raise ConfigError(f"unknown classifier kind {self.kind!r}")
        if self.window_length < 1:
            raise ConfigError("window_length must be >= 1")

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "window_length": self.window_length,
            "fcn_widths": list(self.fcn_widths),
            "fcn_kernels": list(self.fcn_kernels),
            "ra_width": self.ra_width,
            "ra_blocks": self.ra_blocks,
            "ra_heads": self.ra_heads,
        }

    @classmethod
    def from_config(cls, config: dict) -> "ClassifierSpec":
        return cls(
            kind=config["kind"],
            window_length=config["window_length"],
            fcn_widths=tuple(config["fcn_widths"]),
            fcn_kernels=tuple(config["fcn_kernels"]),
            ra_width=config["ra_width"],
            ra_blocks=config["ra_blocks"],
            ra_heads=config["ra_heads"],
        )


class Classifier(Layer):
    """Common scoring interface: forward produces logits (B,)."""

    spec: ClassifierSpec

    def score(self, windows: np.ndarray) -> np.ndarray:
        """Disruptivity in (0, 1) for a batch of windows."""
        return sigmoid(self.forward(windows))


class FcnClassifier(Classifier):
    def __init__(self, spec: ClassifierSpec, n_channels: int, rng: np.random.Generator):
        self.spec = spec
        self.n_channels = n_channels
        layers: list[Layer] = []
        c_in = n_channels
        for i, (width, kernel) in enumerate(zip(spec.fcn_widths, spec.fcn_kernels)):
            layers.append(Conv1d(c_in, width, kernel, rng, f"conv{i}"))
            layers.append(LayerNorm(width, f"convln{i}"))
            layers.append(Activation("relu"))
            c_in = width
        layers.append(MeanPoolTime())
        layers.append(Dense(c_in, 1, rng, "head"))
        self.net = gradnet.Sequential(layers)

    def sublayers(self):
        return [self.net]

    def forward(self, x):
        return self.net.forward(x)[:, 0]

    def backward(self, grad):
        return self.net.backward(np.asarray(grad)[:, None])


class RecurrentAttentionClassifier(Classifier):
    def __init__(self, spec: ClassifierSpec, n_channels: int, rng: np.random.Generator):
        self.spec = spec
        self.n_channels = n_channels
        layers: list[Layer] = [
            LSTM(n_channels, spec.ra_width, rng, "lstm"),
            LayerNorm(spec.ra_width, "ln"),
        ]
        for i in range(spec.ra_blocks):
            layers.append(AttentionBlock(spec.ra_width, rng, heads=spec.ra_heads, name=f"block{i}"))
        layers.append(MeanPoolTime())
        layers.append(Dense(spec.ra_width, 1, rng, "head"))
        self.net = gradnet.Sequential(layers)

    def sublayers(self):
        return [self.net]

    def forward(self, x):
        return self.net.forward(x)[:, 0]

    def backward(self, grad):
        return self.net.backward(np.asarray(grad)[:, None])


def build_classifier(
    spec: ClassifierSpec, seed: int = 0, schema: FeatureSchema = DEFAULT_SCHEMA
) -> Classifier:
    rng = substream(seed, f"classifier-init:{spec.kind}")
    if spec.kind == "fcn":
        return FcnClassifier(spec, schema.n_channels, rng)
    return RecurrentAttentionClassifier(spec, schema.n_channels, rng)


def save_classifier(model: Classifier, path: str | Path) -> None:
    gradnet.save_checkpoint(path, model.spec.kind, model.spec.config(), model.all_params())


def load_classifier(path: str | Path, schema: FeatureSchema = DEFAULT_SCHEMA) -> Classifier:
    kind, config, arrays = gradnet.load_checkpoint(path)
    if kind not in ("fcn", "recurrent_attention"):
        raise ConfigError(f"checkpoint kind {kind!r} is not a classifier")
    model = build_classifier(ClassifierSpec.from_config(config), schema=schema)
    gradnet.restore_params(model, arrays)
    return model


@dataclass(frozen=True)
class LabeledWindow:
    window: np.ndarray  # (W, d)
    label: int
    shot_id: str
    end_time_ms: float


def windowize(
    corpus: list[Discharge],
    window_length: int,
    stride: int = 8,
    stats=None,
) -> list[LabeledWindow]:
    """Sliding labeled windows over every shot.

    A window is positive iff its end time falls within tau(machine) of
    the shot's disruption time. Shots shorter than the window are
    skipped with a warning.
    """
    if window_length < 1 or stride < 1:
        raise ConfigError("window_length and stride must be >= 1")
    stats = stats or MACHINE_STATS
    out: list[LabeledWindow] = []
    for shot in corpus:
        T = shot.n_steps
        if T < window_length:
            warnings.warn(
                f"shot {shot.id}: length {T} < window {window_length}, skipped", stacklevel=2
            )
            continue
        tau = stats[shot.machine].tau_ms
        for start in range(0, T - window_length + 1, stride):
            end_idx = start + window_length - 1
            end_time = end_idx * shot.grid_step_ms
            label = 0
            if shot.disruptive and shot.disruption_time_ms is not None:
                label = int(end_time >= shot.disruption_time_ms - tau)
            out.append(
                LabeledWindow(
                    window=shot.samples[start : start + window_length],
                    label=label,
                    shot_id=shot.id,
                    end_time_ms=end_time,
                )
            )
    return out


@dataclass(frozen=True)
class FitConfig:
    steps: int = 300
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    # positives oversampled to roughly 1 positive : 3 negatives per batch
    positive_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("invalid FitConfig sizes")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ConfigError("positive_fraction must lie in (0, 1)")


AUG_NONE = "none"
AUG_TSAUG = "tsaug"
AUG_VIEWMAKER = "viewmaker"


def _make_augmenter(strategy, schema: FeatureSchema):
    """Returns (name, fn(batch, rng) -> batch). Labels are never touched."""
    if strategy is None or strategy == AUG_NONE:
        return AUG_NONE, lambda batch, rng: batch
    if isinstance(strategy, tuple) and strategy[0] == AUG_TSAUG:
        spec = strategy[1]

        def tsaug_fn(batch, rng):
            # Crops would desynchronize the labels; keep windows intact.
            out = np.empty_like(batch)
            for i in range(batch.shape[0]):
                aug = augbase.apply(spec, batch[i], rng, schema)
                if aug.shape != batch[i].shape:
                    raise ConfigError("crop ops are not allowed in per-batch augmentation")
                out[i] = aug
            return out

        return AUG_TSAUG, tsaug_fn
    if isinstance(strategy, tuple) and strategy[0] == AUG_VIEWMAKER:
        vm = strategy[1]

        def vm_fn(batch, rng):
            return vmod.make_views_batch(vm, batch, rng).views

        return AUG_VIEWMAKER, vm_fn
    raise ConfigError(f"unknown augmentation strategy {strategy!r}")


def train_classifier(
    spec: ClassifierSpec,
    windows: list[LabeledWindow],
    aug=None,
    cfg: FitConfig = FitConfig(),
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> tuple[Classifier, list[tuple[int, float]]]:
    """Binary cross-entropy training with fresh per-batch augmentation.

    ``aug`` is None/"none", ("tsaug", AugSpec), or ("viewmaker", model).
    Augmentation perturbs inputs only; labels are unchanged. Deterministic
    in cfg.seed.
    """
    if not windows:
        raise ConfigError("train_classifier requires at least one window")
    _, augment = _make_augmenter(aug, schema)
    model = build_classifier(spec, seed=cfg.seed, schema=schema)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    params = model.all_params()
    rng_batch = substream(cfg.seed, "clf-train-batches")
    rng_aug = substream(cfg.seed, "clf-train-aug")

    x_all = np.stack([w.window for w in windows])
    y_all = np.array([w.label for w in windows], dtype=np.float64)
    pos = np.flatnonzero(y_all == 1)
    neg = np.flatnonzero(y_all == 0)
    history: list[tuple[int, float]] = []

    for step in range(cfg.steps):
        if len(pos) and len(neg):
            n_pos = max(1, int(round(cfg.batch_size * cfg.positive_fraction)))
            n_pos = min(n_pos, cfg.batch_size - 1)
            idx = np.concatenate(
                [
                    rng_batch.choice(pos, size=n_pos, replace=True),
                    rng_batch.choice(neg, size=cfg.batch_size - n_pos, replace=True),
                ]
            )
        else:
            idx = rng_batch.choice(len(windows), size=cfg.batch_size, replace=True)
        xb = augment(x_all[idx], rng_aug)
        yb = y_all[idx]
        logits = model.forward(xb)
        p = sigmoid(logits)
        loss = float(
            -np.mean(yb * _log_stable(p) + (1.0 - yb) * _log_stable(1.0 - p))
        )
        if not np.isfinite(loss):
            raise NumericError(f"non-finite training loss at step {step}")
        model.zero_grad()
        model.backward((p - yb) / len(yb))
        opt.step(params)
        history.append((step, loss))
    return model, history


def _log_stable(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, 1e-300, None))


def disruptivity(
    model: Classifier, shot: Discharge, batch_size: int = 256
) -> tuple[np.ndarray, np.ndarray]:
    """Stride-1 sliding-window scores aligned to window end times.

    The score at time t uses only samples at or before t, so the trace is
    causal; its length is T - W + 1.
    """
    W = model.spec.window_length
    T = shot.n_steps
    if T < W:
        raise ConfigError(f"shot {shot.id}: length {T} shorter than window {W}")
    n = T - W + 1
    starts = np.arange(n)
    windows = shot.samples[starts[:, None] + np.arange(W)[None, :]]
    scores = np.empty(n)
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        scores[lo:hi] = model.score(windows[lo:hi])
    times = (starts + W - 1) * shot.grid_step_ms
    return times, scores


def write_scores_csv(times: np.ndarray, scores: np.ndarray, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ms", "score"])
        for t, s in zip(times, scores):
            writer.writerow(["%.17g" % t, "%.17g" % s])


def read_scores_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"scores file not found: {p}")
    times, scores = [], []
    with p.open() as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["time_ms", "score"]:
            raise SchemaError(f"{p}: expected header time_ms,score")
        for row in reader:
            if len(row) != 2:
                raise SchemaError(f"{p}: malformed row {row!r}")
            times.append(float(row[0]))
            scores.append(float(row[1]))
    return np.asarray(times), np.asarray(scores)
