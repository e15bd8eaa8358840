"""Handcrafted baseline augmentations: jitter, scale, time warp, crop.

Ops run in declaration order, each with its own probability. Machine
indicator channels are never perturbed; they only pass through time
remapping or cropping. Default strengths are calibrated so the pipeline's
effective per-step distortion matches what standard augmentation-library
pipelines produce on normalized data (jitter sigma 0.3, scale sigma 0.2);
they are recorded in run manifests.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import DEFAULT_SCHEMA, FeatureSchema
from .errors import ConfigError


@dataclass(frozen=True)
class AugOp:
    kind: str  # jitter | scale | time_warp | crop
    prob: float = 1.0
    sigma: float = 0.1  # jitter noise / scale spread
    knots: int = 4
    max_speed_ratio: float = 2.0
    crop_len: int | None = None

    def __post_init__(self):
        if self.kind not in ("jitter", "scale", "time_warp", "crop"):
            raise ConfigError(f"unknown augmentation op {self.kind!r}")
        if not 0.0 <= self.prob <= 1.0:
            raise ConfigError("op probability must lie in [0, 1]")
        if self.kind == "time_warp":
            if self.knots < 1:
                raise ConfigError("time_warp needs at least one knot")
            if self.max_speed_ratio < 1.0:
                raise ConfigError("max_speed_ratio must be >= 1")


@dataclass(frozen=True)
class AugSpec:
    ops: tuple[AugOp, ...] = field(
        default_factory=lambda: (
            AugOp("jitter", prob=1.0, sigma=0.3),
            AugOp("scale", prob=1.0, sigma=0.2),
            AugOp("time_warp", prob=1.0, knots=4, max_speed_ratio=2.0),
            AugOp("crop", prob=0.0),  # disabled by default
        )
    )


def identity_spec() -> AugSpec:
    return AugSpec(ops=tuple(AugOp(op.kind, prob=0.0) for op in AugSpec().ops))


def _warp_map(T: int, knots: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Strictly increasing smooth map of [0, T-1] onto itself.

    Segment-average speeds are drawn log-uniform and kept inside
    [1/ratio, ratio] after normalization (rejection with an identity
    fallback); a monotone cubic interpolates between the control points.
    """
    n_seg = knots + 1
    speeds = np.ones(n_seg)
    for _ in range(100):
        cand = np.exp(rng.uniform(-np.log(ratio), np.log(ratio), size=n_seg))
        cand = cand / cand.mean()
        if np.all((cand >= 1.0 / ratio) & (cand <= ratio)):
            speeds = cand
            break
    ctrl_x = np.linspace(0.0, T - 1.0, n_seg + 1)
    ctrl_y = np.concatenate([[0.0], np.cumsum(speeds * np.diff(ctrl_x))])
    ctrl_y *= (T - 1.0) / ctrl_y[-1]
    warp = PchipInterpolator(ctrl_x, ctrl_y)(np.arange(T))
    warp[0], warp[-1] = 0.0, T - 1.0
    return warp


def apply(
    spec: AugSpec,
    x: np.ndarray,
    rng: np.random.Generator,
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> np.ndarray:
    """Apply the augmentation pipeline to one (T, d) series."""
    x = np.array(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != schema.n_channels:
        raise ConfigError(f"expected (T, {schema.n_channels}) input, got {x.shape}")
    phys = list(schema.physics_idx)
    for op in spec.ops:
        # Always consume one gate draw per op so the stream layout is
        # independent of which gates fire.
        gate = rng.random()
        if gate >= op.prob:
            continue
        T = x.shape[0]
        if op.kind == "jitter":
            x[:, phys] += rng.normal(0.0, op.sigma, size=(T, len(phys)))
        elif op.kind == "scale":
            x[:, phys] *= rng.normal(1.0, op.sigma, size=len(phys))
        elif op.kind == "time_warp":
            if T >= 2:
                warp = _warp_map(T, op.knots, op.max_speed_ratio, rng)
                grid = np.arange(T, dtype=np.float64)
                out = np.empty_like(x)
                for c in range(x.shape[1]):
                    out[:, c] = np.interp(warp, grid, x[:, c])
                x = out
        elif op.kind == "crop":
            length = op.crop_len if op.crop_len is not None else T
            if length > T:
                raise ConfigError(f"crop length {length} exceeds series length {T}")
            start = int(rng.integers(0, T - length + 1))
            x = x[start : start + length]
    return x
