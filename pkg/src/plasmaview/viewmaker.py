"""Learned stochastic augmentation of discharge series.

Two generator networks perturb the trend and seasonal components of a
series; the combined perturbation is smoothed, zeroed on the machine
indicator channels, projected onto an L1 ball scaled to the input size,
and added back onto the original. The generators are trained against a
contrastive encoder: the encoder minimizes the contrastive loss, the
generators maximize it, under the fixed distortion budget.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gradnet
from .core import DEFAULT_SCHEMA, Discharge, FeatureSchema, substream
from .decomp import decompose, moving_average, moving_average_vjp
from .errors import ConfigError, NumericError
from .gradnet import (
    AttentionBlock,
    Dense,
    Layer,
    LSTM,
    MeanPoolTime,
    Param,
    make_optimizer,
)


class GeneratorNet(Layer):
    """Perturbation generator: LSTM positional encoding, then attention
    blocks with fresh noise channels concatenated before each one, then a
    linear head back to the input channel count."""

    def __init__(
        self,
        n_channels: int,
        width: int,
        blocks: int,
        noise_channels: int,
        rng: np.random.Generator,
        heads: int = 1,
        name: str = "gen",
    ):
        self.n_channels = n_channels
        self.width = width
        self.n_blocks = blocks
        self.noise_channels = noise_channels
        self.heads = heads
        self.lstm = LSTM(n_channels, width, rng, f"{name}.lstm")
        self.mixers = [
            Dense(width + noise_channels, width, rng, f"{name}.mix{i}") for i in range(blocks)
        ]
        self.blocks = [
            AttentionBlock(width, rng, heads=heads, name=f"{name}.block{i}")
            for i in range(blocks)
        ]
        self.head = Dense(width, n_channels, rng, f"{name}.head")
        self._noises: list[np.ndarray] | None = None

    def sublayers(self):
        out: list[Layer] = [self.lstm]
        for mix, block in zip(self.mixers, self.blocks):
            out.extend([mix, block])
        out.append(self.head)
        return out

    def draw_noises(self, batch: int, T: int, rng: np.random.Generator) -> list[np.ndarray]:
        return [
            rng.normal(0.0, 1.0, size=(batch, T, self.noise_channels))
            for _ in range(self.n_blocks)
        ]

    def forward(self, x: np.ndarray, noises: list[np.ndarray] | None = None) -> np.ndarray:
        if noises is None:
            noises = [np.zeros((x.shape[0], x.shape[1], self.noise_channels))] * self.n_blocks
        if len(noises) != self.n_blocks:
            raise ConfigError(f"expected {self.n_blocks} noise arrays, got {len(noises)}")
        self._noises = noises
        h = self.lstm.forward(x)
        for mix, block, z in zip(self.mixers, self.blocks, noises):
            h = block.forward(mix.forward(np.concatenate([h, z], axis=-1)))
        return self.head.forward(h)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        dh = self.head.backward(grad)
        for mix, block in zip(reversed(self.mixers), reversed(self.blocks)):
            full = mix.backward(block.backward(dh))
            dh = full[..., : self.width]
        return self.lstm.backward(dh)


class EncoderNet(Layer):
    """Contrastive encoder: LSTM, attention blocks, mean pool, projection."""

    def __init__(
        self,
        n_channels: int,
        width: int,
        blocks: int,
        embed_dim: int,
        rng: np.random.Generator,
        heads: int = 1,
        name: str = "enc",
    ):
        if embed_dim < 2:
            raise ConfigError("embedding width must be >= 2")
        self.n_channels = n_channels
        self.width = width
        self.n_blocks = blocks
        self.embed_dim = embed_dim
        self.heads = heads
        self.lstm = LSTM(n_channels, width, rng, f"{name}.lstm")
        self.blocks = [
            AttentionBlock(width, rng, heads=heads, name=f"{name}.block{i}")
            for i in range(blocks)
        ]
        self.pool = MeanPoolTime()
        self.proj = Dense(width, embed_dim, rng, f"{name}.proj")

    def sublayers(self):
        return [self.lstm, *self.blocks, self.pool, self.proj]

    def forward(self, x):
        h = self.lstm.forward(x)
        for block in self.blocks:
            h = block.forward(h)
        return self.proj.forward(self.pool.forward(h))

    def backward(self, grad):
        dh = self.pool.backward(self.proj.backward(grad))
        for block in reversed(self.blocks):
            dh = block.backward(dh)
        return self.lstm.backward(dh)


@dataclass
class ViewmakerModel:
    """Both generators plus the fixed view-assembly configuration.

    The distortion budget is an L1 ball of radius ``eps * T * d`` (budget
    proportional to input size); the perturbation norm itself is fixed to
    L1.
    """

    v_t: GeneratorNet
    v_s: GeneratorNet
    decomp_window: int = 25
    smoothing_window: int = 5
    eps: float = 0.1
    schema: FeatureSchema = field(default_factory=lambda: DEFAULT_SCHEMA)

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError("distortion budget eps must be positive")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ConfigError("smoothing_window must be odd and >= 1")

    def all_params(self) -> list[Param]:
        return self.v_t.all_params() + self.v_s.all_params()

    def zero_grad(self) -> None:
        self.v_t.zero_grad()
        self.v_s.zero_grad()

    def config(self) -> dict:
        g = self.v_t
        return {
            "n_channels": g.n_channels,
            "width": g.width,
            "blocks": g.n_blocks,
            "noise_channels": g.noise_channels,
            "heads": g.heads,
            "decomp_window": self.decomp_window,
            "smoothing_window": self.smoothing_window,
            "eps": self.eps,
        }


def build_viewmaker(
    n_channels: int = 12,
    width: int = 16,
    blocks: int = 2,
    noise_channels: int = 2,
    heads: int = 1,
    decomp_window: int = 25,
    smoothing_window: int = 5,
    eps: float = 0.1,
    seed: int = 0,
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> ViewmakerModel:
    rng = substream(seed, "viewmaker-init")
    v_t = GeneratorNet(n_channels, width, blocks, noise_channels, rng, heads, name="vt")
    v_s = GeneratorNet(n_channels, width, blocks, noise_channels, rng, heads, name="vs")
    return ViewmakerModel(
        v_t=v_t,
        v_s=v_s,
        decomp_window=decomp_window,
        smoothing_window=smoothing_window,
        eps=eps,
        schema=schema,
    )


def build_encoder(
    n_channels: int = 12,
    width: int = 16,
    blocks: int = 2,
    embed_dim: int = 64,
    heads: int = 1,
    seed: int = 0,
) -> EncoderNet:
    rng = substream(seed, "encoder-init")
    return EncoderNet(n_channels, width, blocks, embed_dim, rng, heads)


def save_viewmaker(vm: ViewmakerModel, path: str | Path) -> None:
    gradnet.save_checkpoint(path, "viewmaker", vm.config(), vm.all_params())


def load_viewmaker(path: str | Path, schema: FeatureSchema = DEFAULT_SCHEMA) -> ViewmakerModel:
    kind, config, arrays = gradnet.load_checkpoint(path)
    if kind != "viewmaker":
        raise ConfigError(f"checkpoint kind {kind!r} is not a viewmaker")
    vm = build_viewmaker(
        n_channels=config["n_channels"],
        width=config["width"],
        blocks=config["blocks"],
        noise_channels=config["noise_channels"],
        heads=config["heads"],
        decomp_window=config["decomp_window"],
        smoothing_window=config["smoothing_window"],
        eps=config["eps"],
        schema=schema,
    )
    n_t = len(vm.v_t.all_params())
    gradnet.restore_params(vm.v_t, arrays[:n_t])
    gradnet.restore_params(vm.v_s, arrays[n_t:])
    return vm


def save_encoder(enc: EncoderNet, path: str | Path) -> None:
    config = {
        "n_channels": enc.n_channels,
        "width": enc.width,
        "blocks": enc.n_blocks,
        "embed_dim": enc.embed_dim,
        "heads": enc.heads,
    }
    gradnet.save_checkpoint(path, "encoder", config, enc.all_params())


def load_encoder(path: str | Path) -> EncoderNet:
    kind, config, arrays = gradnet.load_checkpoint(path)
    if kind != "encoder":
        raise ConfigError(f"checkpoint kind {kind!r} is not an encoder")
    enc = build_encoder(**config)
    gradnet.restore_params(enc, arrays)
    return enc


def project_l1(delta: np.ndarray, eps: float) -> np.ndarray:
    """Scale ``delta`` radially onto the L1 ball of radius eps * T * d.

    Inside the ball the perturbation passes unchanged. Batched input
    (B, T, d) is projected per sample.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    delta = np.asarray(delta, dtype=np.float64)
    single = delta.ndim == 2
    batch = delta[None] if single else delta
    budget = eps * batch.shape[1] * batch.shape[2]
    norms = np.abs(batch).sum(axis=(1, 2))
    scale = np.where(norms > budget, budget / np.maximum(norms, 1e-300), 1.0)
    out = batch * scale[:, None, None]
    return out[0] if single else out


def _project_l1_vjp(delta: np.ndarray, eps: float, grad: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of :func:`project_l1` (batched input)."""
    budget = eps * delta.shape[1] * delta.shape[2]
    norms = np.abs(delta).sum(axis=(1, 2))
    over = norms > budget
    scale = np.where(over, budget / np.maximum(norms, 1e-300), 1.0)
    out = grad * scale[:, None, None]
    if np.any(over):
        inner = (grad * delta).sum(axis=(1, 2))
        coef = np.where(over, -budget * inner / np.maximum(norms, 1e-300) ** 2, 0.0)
        out = out + np.sign(delta) * coef[:, None, None]
    return out


class ViewBatchState:
    """Caches one batched view construction so gradients can flow back
    from the views to both generators."""

    def __init__(self, vm: ViewmakerModel, delta_pre_proj, views):
        self.vm = vm
        self.delta_pre_proj = delta_pre_proj
        self.views = views

    def backward(self, dviews: np.ndarray) -> None:
        vm = self.vm
        g = _project_l1_vjp(self.delta_pre_proj, vm.eps, dviews)
        g[:, :, list(vm.schema.indicator_idx)] = 0.0
        g = moving_average_vjp(g, vm.smoothing_window)
        vm.v_t.backward(g)
        vm.v_s.backward(g)


def make_views_batch(
    vm: ViewmakerModel, x: np.ndarray, rng: np.random.Generator
) -> ViewBatchState:
    """Build views for a rectangular batch (B, T, d); returns state that
    supports backward into the generators."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != vm.schema.n_channels:
        raise ConfigError(f"expected (B, T, {vm.schema.n_channels}) input, got {x.shape}")
    trend, seasonal = decompose(x, vm.decomp_window)
    B, T, _ = x.shape
    d_t = vm.v_t.forward(trend, vm.v_t.draw_noises(B, T, rng))
    d_s = vm.v_s.forward(seasonal, vm.v_s.draw_noises(B, T, rng))
    combined = d_t + d_s
    smoothed = moving_average(combined, vm.smoothing_window)
    smoothed[:, :, list(vm.schema.indicator_idx)] = 0.0
    if not np.all(np.isfinite(smoothed)):
        raise NumericError("generator produced non-finite perturbations")
    views = x + project_l1(smoothed, vm.eps)
    return ViewBatchState(vm, smoothed, views)


def make_view(vm: ViewmakerModel, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One stochastic view of a single preprocessed series (T, d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"expected a (T, d) series, got shape {x.shape}")
    return make_views_batch(vm, x[None], rng).views[0]


def simclr_loss(embeddings: np.ndarray, temperature: float) -> float:
    """Contrastive loss over 2N embeddings paired as (2k, 2k+1), 0-indexed."""
    loss, _ = simclr_loss_grad(embeddings, temperature)
    return loss


def simclr_loss_grad(embeddings: np.ndarray, temperature: float) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the raw embeddings.

    Cosine similarities divided by the temperature feed a softmax over
    all other samples; each view attracts its partner and repels the
    rest. The 2N terms are averaged.
    """
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[0] % 2 != 0:
        raise ConfigError(f"embeddings must be (2N, e) with N >= 1, got {z.shape}")
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    M = z.shape[0]
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms < 1e-300):
        raise NumericError("zero-norm embedding: cosine similarity undefined")
    u = z / norms[:, None]
    s = (u @ u.T) / temperature
    np.fill_diagonal(s, -np.inf)  # exclude self-similarity from every softmax

    partner = np.arange(M) ^ 1
    row_max = s.max(axis=1, keepdims=True)
    exps = np.exp(s - row_max)
    denom = exps.sum(axis=1)
    lse = row_max[:, 0] + np.log(denom)
    pos = s[np.arange(M), partner]
    loss = float(np.mean(lse - pos))

    # dL/dS = (softmax - pairing indicator) / M, then back through the
    # cosine-similarity matrix and the row normalization.
    p = exps / denom[:, None]
    g = p.copy()
    g[np.arange(M), partner] -= 1.0
    g /= M
    du = (g + g.T) @ u / temperature
    dz = (du - u * (du * u).sum(axis=1, keepdims=True)) / norms[:, None]
    return loss, dz


@dataclass(frozen=True)
class TrainConfig:
    """Adversarial training settings.

    Defaults are desk scale; reference-scale training uses steps=10000.
    The loss weight multiplies the generator objective; the temperature
    divides the cosine similarities.
    """

    steps: int = 500
    batch_pairs: int = 16
    loss_weight: float = 2.5
    temperature: float = 0.05339
    crop_len: int = 64
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    seed: int = 0
    freeze_viewmaker: bool = False

    def __post_init__(self):
        if self.batch_pairs < 1:
            raise ConfigError("batch_pairs must be >= 1")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.loss_weight < 0:
            raise ConfigError("loss_weight must be >= 0")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")


def _crop_batch(
    corpus: list[Discharge], crop_len: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    min_T = min(d.n_steps for d in corpus)
    L = min(crop_len, min_T)
    picks = rng.integers(0, len(corpus), size=n)
    out = np.empty((n, L, corpus[0].samples.shape[1]))
    for i, j in enumerate(picks):
        shot = corpus[j]
        start = int(rng.integers(0, shot.n_steps - L + 1))
        out[i] = shot.samples[start : start + L]
    return out


def train_adversarial(
    vm: ViewmakerModel,
    enc: EncoderNet,
    corpus: list[Discharge],
    cfg: TrainConfig,
) -> tuple[ViewmakerModel, EncoderNet, list[tuple[int, float, float]]]:
    """Alternating single-step updates: the encoder descends the
    contrastive loss, then the generators ascend it (scaled by the loss
    weight). History rows are (step, encoder_loss, viewmaker_loss).
    """
    if not corpus:
        raise ConfigError("train_adversarial requires a nonempty corpus")
    rng_batch = substream(cfg.seed, "vm-train-batches")
    rng_noise = substream(cfg.seed, "vm-train-noise")
    opt_enc = make_optimizer(cfg.optimizer, cfg.learning_rate)
    opt_vm = make_optimizer(cfg.optimizer, cfg.learning_rate)
    enc_params = enc.all_params()
    vm_params = vm.all_params()
    history: list[tuple[int, float, float]] = []

    for step in range(cfg.steps):
        x = _crop_batch(corpus, cfg.crop_len, cfg.batch_pairs, rng_batch)
        doubled = np.concatenate([x, x], axis=0)

        # --- encoder phase: minimize the contrastive loss
        state = make_views_batch(vm, doubled, rng_noise)
        z = enc.forward(_interleave(state.views, cfg.batch_pairs))
        enc_loss, dz = simclr_loss_grad(z, cfg.temperature)
        if not np.isfinite(enc_loss):
            raise NumericError(f"non-finite encoder loss at step {step}")
        enc.zero_grad()
        enc.backward(dz)
        opt_enc.step(enc_params)

        # --- viewmaker phase: maximize the (reweighted) loss
        state = make_views_batch(vm, doubled, rng_noise)
        z = enc.forward(_interleave(state.views, cfg.batch_pairs))
        raw_loss, dz = simclr_loss_grad(z, cfg.temperature)
        vm_loss = cfg.loss_weight * raw_loss
        if not np.isfinite(vm_loss):
            raise NumericError(f"non-finite viewmaker loss at step {step}")
        if not cfg.freeze_viewmaker:
            enc.zero_grad()
            vm.zero_grad()
            dviews = enc.backward(-cfg.loss_weight * dz)
            state.backward(_deinterleave(dviews, cfg.batch_pairs))
            opt_vm.step(vm_params)
            enc.zero_grad()
        history.append((step, enc_loss, vm_loss))
    return vm, enc, history


def _interleave(views: np.ndarray, n: int) -> np.ndarray:
    """Reorder (view-a block, view-b block) into partner-adjacent pairs."""
    order = np.empty(2 * n, dtype=int)
    order[0::2] = np.arange(n)
    order[1::2] = np.arange(n) + n
    return views[order]


def _deinterleave(grads: np.ndarray, n: int) -> np.ndarray:
    order = np.empty(2 * n, dtype=int)
    order[0::2] = np.arange(n)
    order[1::2] = np.arange(n) + n
    return grads[np.argsort(order, kind="stable")]


def write_history_csv(history: list[tuple[int, float, float]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "encoder_loss", "viewmaker_loss"])
        for step, enc_loss, vm_loss in history:
            writer.writerow([step, "%.17g" % enc_loss, "%.17g" % vm_loss])
