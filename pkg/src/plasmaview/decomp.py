"""Trend/seasonal split of a series via a centered moving average.

The trend is the replicate-padded moving average of the input; the
seasonal part is the residual, so the two always recompose exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class DecompConfig:
    # 25 steps = 125 ms at the 5 ms grid, roughly the minimum-shot scale.
    window: int = 25

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"decomposition window must be odd and >= 1, got {self.window}")


def window_indices(n_steps: int, window: int) -> np.ndarray:
    """(T, window) gather indices implementing replicate-end padding."""
    half = window // 2
    offs = np.arange(window) - half
    idx = np.arange(n_steps)[:, None] + offs[None, :]
    return np.clip(idx, 0, n_steps - 1)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average along axis -2 with replicate padding.

    Accepts (T, d) or (B, T, d); the window may exceed T.
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"moving-average window must be odd and >= 1, got {window}")
    if window == 1:
        return np.array(x, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    idx = window_indices(x.shape[-2], window)
    return x[..., idx, :].mean(axis=-2)


def moving_average_vjp(grad: np.ndarray, window: int) -> np.ndarray:
    """Adjoint of :func:`moving_average` (it is a linear map)."""
    if window == 1:
        return np.array(grad, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    T = grad.shape[-2]
    idx = window_indices(T, window)
    out = np.zeros_like(grad)
    share = grad / window
    for k in range(window):
        np.add.at(out, (..., idx[:, k], slice(None)), share)
    return out


def decompose(x: np.ndarray, cfg: DecompConfig | int = DecompConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Split ``x`` (T x d) into (trend, seasonal) with trend + seasonal == x."""
    if isinstance(cfg, int):
        cfg = DecompConfig(window=cfg)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-2] < 1:
        raise ConfigError("cannot decompose an empty series")
    trend = moving_average(x, cfg.window)
    return trend, x - trend


def recompose(trend: np.ndarray, seasonal: np.ndarray) -> np.ndarray:
    if np.shape(trend) != np.shape(seasonal):
        raise ConfigError(
            f"shape mismatch: trend {np.shape(trend)} vs seasonal {np.shape(seasonal)}"
        )
    return np.asarray(trend, dtype=np.float64) + np.asarray(seasonal, dtype=np.float64)
