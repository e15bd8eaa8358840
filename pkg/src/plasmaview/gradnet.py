"""Minimal differentiable-computation core on numpy arrays.

A closed set of layer kinds (dense, LSTM cell/sequence, single/multi-head
attention block, conv1d, layer norm, activations) with hand-written
backward passes, plus SGD/Adam and a finite-difference gradient checker.
There is no general graph compiler: every model in this package is a
fixed pipeline of these kinds, which keeps each backward rule small
enough to verify exhaustively.

All arrays are float64. Sequence layers take (B, T, C); Dense applies to
the trailing axis of any shape.
"""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingInputError, NumericError, SchemaError

CHECKPOINT_FORMAT = "plasmaview-checkpoint"
CHECKPOINT_VERSION = 1


def _check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values produced in {where}")
    return x


class Param:
    """A trainable array with an accumulated gradient."""

    __slots__ = ("name", "value", "grad", "frozen")

    def __init__(self, name: str, value: np.ndarray, frozen: bool = False):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.frozen = frozen

    def accumulate(self, grad: np.ndarray) -> None:
        if self.frozen:
            return
        self.grad += grad

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape})"


class Layer:
    """Base class: forward caches whatever backward needs."""

    def params(self) -> list[Param]:
        return []

    def sublayers(self) -> list["Layer"]:
        return []

    def all_params(self) -> list[Param]:
        out = list(self.params())
        for sub in self.sublayers():
            out.extend(sub.all_params())
        return out

    def zero_grad(self) -> None:
        for p in self.all_params():
            p.grad[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


def _init_weight(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    return rng.normal(0.0, 1.0 / np.sqrt(max(fan_in, 1)), size=shape)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "dense"):
        self.n_in, self.n_out = n_in, n_out
        self.w = Param(f"{name}.w", _init_weight(rng, n_in, (n_in, n_out)))
        self.b = Param(f"{name}.b", np.zeros(n_out))
        self._x: np.ndarray | None = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ConfigError(f"dense expects last dim {self.n_in}, got {x.shape[-1]}")
        self._x = x
        return _check_finite(x @ self.w.value + self.b.value, "dense")

    def backward(self, grad):
        x = self._x
        if x is None:
            raise ConfigError("backward called before forward")
        x2 = x.reshape(-1, self.n_in)
        g2 = grad.reshape(-1, self.n_out)
        self.w.accumulate(x2.T @ g2)
        self.b.accumulate(g2.sum(axis=0))
        return grad @ self.w.value.T


class Activation(Layer):
    KINDS = ("relu", "tanh", "sigmoid")

    def __init__(self, kind: str):
        if kind not in self.KINDS:
            raise ConfigError(f"unknown activation {kind!r}")
        self.kind = kind
        self._cache: np.ndarray | None = None

    def forward(self, x):
        if self.kind == "relu":
            self._cache = x
            return np.maximum(x, 0.0)
        if self.kind == "tanh":
            y = np.tanh(x)
        else:
            y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, grad):
        c = self._cache
        if self.kind == "relu":
            return grad * (c > 0)
        if self.kind == "tanh":
            return grad * (1.0 - c * c)
        return grad * c * (1.0 - c)

    def kink_margin(self) -> float:
        """Distance of cached pre-activations from the relu kink."""
        if self.kind != "relu" or self._cache is None:
            return np.inf
        return float(np.min(np.abs(self._cache)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class LayerNorm(Layer):
    """Normalizes the trailing axis; variance floor 1e-5, so a constant
    input maps to zeros pre-affine."""

    EPS = 1e-5

    def __init__(self, dim: int, name: str = "ln"):
        self.dim = dim
        self.gamma = Param(f"{name}.gamma", np.ones(dim))
        self.beta = Param(f"{name}.beta", np.zeros(dim))
        self._xhat = None
        self._inv = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mu) * inv
        self._xhat, self._inv = xhat, inv
        return xhat * self.gamma.value + self.beta.value

    def backward(self, grad):
        xhat, inv = self._xhat, self._inv
        self.gamma.accumulate((grad * xhat).reshape(-1, self.dim).sum(axis=0))
        self.beta.accumulate(grad.reshape(-1, self.dim).sum(axis=0))
        gx = grad * self.gamma.value
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        return inv * (gx - m1 - xhat * m2)


class LSTM(Layer):
    """Recurrent sequence layer (single direction), gate order i, f, g, o.

    Maps (B, T, n_in) -> (B, T, hidden). The forget-gate bias starts at 1.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, name: str = "lstm"):
        self.n_in, self.hidden = n_in, hidden
        self.wx = Param(f"{name}.wx", _init_weight(rng, n_in, (n_in, 4 * hidden)))
        self.wh = Param(f"{name}.wh", _init_weight(rng, hidden, (hidden, 4 * hidden)))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        self.b = Param(f"{name}.b", b)
        self._cache = None

    def params(self):
        return [self.wx, self.wh, self.b]

    def cell(self, x_t, h_prev, c_prev):
        """Single LSTM step; returns (h, c, gates)."""
        H = self.hidden
        z = x_t @ self.wx.value + h_prev @ self.wh.value + self.b.value
        i = sigmoid(z[..., :H])
        f = sigmoid(z[..., H : 2 * H])
        g = np.tanh(z[..., 2 * H : 3 * H])
        o = sigmoid(z[..., 3 * H :])
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        return h, c, (i, f, g, o)

    def forward(self, x):
        B, T, _ = x.shape
        H = self.hidden
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T, H))
        steps = []
        for t in range(T):
            h_prev, c_prev = h, c
            h, c, gates = self.cell(x[:, t], h_prev, c_prev)
            hs[:, t] = h
            steps.append((x[:, t], h_prev, c_prev, gates, c))
        self._cache = steps
        return _check_finite(hs, "lstm")

    def backward(self, grad):
        steps = self._cache
        if steps is None:
            raise ConfigError("backward called before forward")
        B, T, H = grad.shape
        dx = np.empty((B, T, self.n_in))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            x_t, h_prev, c_prev, (i, f, g, o), c = steps[t]
            dh = grad[:, t] + dh_next
            tc = np.tanh(c)
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=-1,
            )
            self.wx.accumulate(x_t.T @ dz)
            self.wh.accumulate(h_prev.T @ dz)
            self.b.accumulate(dz.sum(axis=0))
            dx[:, t] = dz @ self.wx.value.T
            dh_next = dz @ self.wh.value.T
            dc_next = dc * f
        return dx


class Conv1d(Layer):
    """Same-length 1-D convolution over the time axis of (B, T, C)."""

    def __init__(self, n_in: int, n_out: int, kernel: int, rng: np.random.Generator, name: str = "conv"):
        self.n_in, self.n_out, self.kernel = n_in, n_out, kernel
        self.w = Param(f"{name}.w", _init_weight(rng, kernel * n_in, (kernel * n_in, n_out)))
        self.b = Param(f"{name}.b", np.zeros(n_out))
        self._cols = None
        self._in_shape = None

    def params(self):
        return [self.w, self.b]

    def _pads(self):
        left = (self.kernel - 1) // 2
        return left, self.kernel - 1 - left

    def forward(self, x):
        B, T, C = x.shape
        if C != self.n_in:
            raise ConfigError(f"conv1d expects {self.n_in} channels, got {C}")
        left, right = self._pads()
        xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
        idx = np.arange(T)[:, None] + np.arange(self.kernel)[None, :]
        cols = xp[:, idx, :].reshape(B, T, self.kernel * self.n_in)
        self._cols, self._in_shape = cols, (B, T, C)
        return _check_finite(cols @ self.w.value + self.b.value, "conv1d")

    def backward(self, grad):
        B, T, C = self._in_shape
        g2 = grad.reshape(-1, self.n_out)
        self.w.accumulate(self._cols.reshape(-1, self.kernel * self.n_in).T @ g2)
        self.b.accumulate(g2.sum(axis=0))
        dcols = (grad @ self.w.value.T).reshape(B, T, self.kernel, self.n_in)
        left, right = self._pads()
        dxp = np.zeros((B, T + left + right, C))
        for k in range(self.kernel):
            dxp[:, k : k + T, :] += dcols[:, :, k, :]
        return dxp[:, left : left + T, :]


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class AttentionBlock(Layer):
    """Pre-norm self-attention block with a two-layer feed-forward tail.

    Single-head by default; ``heads`` must divide ``width``.
    """

    def __init__(
        self,
        width: int,
        rng: np.random.Generator,
        heads: int = 1,
        ff_mult: int = 2,
        name: str = "attn",
    ):
        if width % heads != 0:
            raise ConfigError(f"heads={heads} must divide width={width}")
        self.width, self.heads = width, heads
        self.d_head = width // heads
        self.ln1 = LayerNorm(width, f"{name}.ln1")
        self.wq = Dense(width, width, rng, f"{name}.wq")
        self.wk = Dense(width, width, rng, f"{name}.wk")
        self.wv = Dense(width, width, rng, f"{name}.wv")
        self.wo = Dense(width, width, rng, f"{name}.wo")
        self.ln2 = LayerNorm(width, f"{name}.ln2")
        self.ff1 = Dense(width, ff_mult * width, rng, f"{name}.ff1")
        self.relu = Activation("relu")
        self.ff2 = Dense(ff_mult * width, width, rng, f"{name}.ff2")
        self._cache = None

    def sublayers(self):
        return [self.ln1, self.wq, self.wk, self.wv, self.wo, self.ln2, self.ff1, self.relu, self.ff2]

    def _split(self, x):
        B, T, _ = x.shape
        return x.reshape(B, T, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge(self, x):
        B, h, T, d = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, h * d)

    def forward(self, x):
        u = self.ln1.forward(x)
        q = self._split(self.wq.forward(u))
        k = self._split(self.wk.forward(u))
        v = self._split(self.wv.forward(u))
        scale = 1.0 / np.sqrt(self.d_head)
        att = softmax(np.einsum("bhtd,bhsd->bhts", q, k) * scale)
        ctx = self._merge(np.einsum("bhts,bhsd->bhtd", att, v))
        y = x + self.wo.forward(ctx)
        z = self.ln2.forward(y)
        f = self.ff2.forward(self.relu.forward(self.ff1.forward(z)))
        self._cache = (q, k, v, att, scale)
        return _check_finite(y + f, "attention")

    def backward(self, grad):
        q, k, v, att, scale = self._cache
        dz = self.ff1.backward(self.relu.backward(self.ff2.backward(grad)))
        dy = grad + self.ln2.backward(dz)
        dctx = self._split(self.wo.backward(dy))
        datt = np.einsum("bhtd,bhsd->bhts", dctx, v)
        dv = np.einsum("bhts,bhtd->bhsd", att, dctx)
        ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        dq = np.einsum("bhts,bhsd->bhtd", ds, k) * scale
        dk = np.einsum("bhts,bhtd->bhsd", ds, q) * scale
        du = (
            self.wq.backward(self._merge(dq))
            + self.wk.backward(self._merge(dk))
            + self.wv.backward(self._merge(dv))
        )
        return dy + self.ln1.backward(du)


class MeanPoolTime(Layer):
    """Mean over the time axis: (B, T, C) -> (B, C)."""

    def __init__(self):
        self._T = None

    def forward(self, x):
        self._T = x.shape[1]
        return x.mean(axis=1)

    def backward(self, grad):
        return np.repeat(grad[:, None, :], self._T, axis=1) / self._T


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def sublayers(self):
        return self.layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def relu_kink_margin(model: Layer) -> float:
    """Min |pre-activation| over every relu in the model after a forward.

    Used by gradient-check harnesses to reject inputs that straddle a
    relu kink, where finite differences are not informative.
    """
    margin = np.inf
    stack = [model]
    while stack:
        layer = stack.pop()
        if isinstance(layer, Activation):
            margin = min(margin, layer.kink_margin())
        stack.extend(layer.sublayers())
    return margin


class SGD:
    def __init__(self, learning_rate: float):
        if learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.step_count = 0

    def step(self, params: list[Param]) -> None:
        for p in params:
            if p.grad.shape != p.value.shape:
                raise ConfigError(f"gradient shape mismatch for {p.name}")
            p.value -= self.learning_rate * p.grad
        self.step_count += 1


class Adam:
    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, learning_rate: float):
        if learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.step_count = 0
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def step(self, params: list[Param]) -> None:
        self.step_count += 1
        t = self.step_count
        for j, p in enumerate(params):
            if p.grad.shape != p.value.shape:
                raise ConfigError(f"gradient shape mismatch for {p.name}")
            m = self._m.setdefault(j, np.zeros_like(p.value))
            v = self._v.setdefault(j, np.zeros_like(p.value))
            m[...] = self.BETA1 * m + (1 - self.BETA1) * p.grad
            v[...] = self.BETA2 * v + (1 - self.BETA2) * p.grad**2
            mhat = m / (1 - self.BETA1**t)
            vhat = v / (1 - self.BETA2**t)
            p.value -= self.learning_rate * mhat / (np.sqrt(vhat) + self.EPS)


def make_optimizer(kind: str, learning_rate: float):
    if kind == "sgd":
        return SGD(learning_rate)
    if kind == "adam":
        return Adam(learning_rate)
    raise ConfigError(f"unknown optimizer kind {kind!r}")


def grad_check(
    model: Layer,
    x: np.ndarray,
    forward=None,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    weight_rng: np.random.Generator | None = None,
) -> dict:
    """Compare analytic parameter gradients against central differences.

    The scalar loss is sum(W * forward()) with fixed O(1) random weights.
    Relative error uses a guarded denominator max(|a| + |n|, 1e-3): the
    floor is an absolute-tolerance fallback for structurally-zero
    gradients (e.g. a key-projection bias), whose central differences are
    pure cancellation noise. Exhaustive over every parameter entry; keep
    the model small.
    """
    fwd = forward if forward is not None else (lambda: model.forward(x))
    rng = weight_rng or np.random.default_rng(0)
    y0 = fwd()
    w = rng.normal(0.0, 1.0, size=y0.shape)

    def loss() -> float:
        return float(np.sum(w * fwd()))

    model.zero_grad()
    model.backward(w)
    params = model.all_params()
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    per_param = {}
    for p, a in zip(params, analytic):
        num = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            nflat[i] = (up - down) / (2 * h)
        if p.frozen:
            err = float(np.max(np.abs(a)))  # frozen params must report zero
        else:
            denom = np.maximum(np.abs(a) + np.abs(num), 1e-3)
            err = float(np.max(np.abs(a - num) / denom))
        per_param[p.name] = err
        worst = max(worst, err)
    return {"max_rel_err": worst, "per_param": per_param, "passed": worst < tolerance}


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(data: str, shape: list[int]) -> np.ndarray:
    flat = np.frombuffer(base64.b64decode(data.encode("ascii")), dtype="<f8")
    return flat.reshape(shape).copy()


def save_checkpoint(path: str | Path, kind: str, config: dict, params: list[Param]) -> None:
    """One-file checkpoint: version tag, model spec, flat parameter arrays
    (raw little-endian float64, base64) in declaration order."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "params": [
            {"name": p.name, "shape": list(p.value.shape), "data": _encode(p.value)}
            for p in params
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[str, dict, list[np.ndarray]]:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"checkpoint not found: {p}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{p}: not a valid checkpoint file ({exc})") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise SchemaError(f"{p}: unrecognized checkpoint format")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise SchemaError(f"{p}: unsupported checkpoint version {payload.get('version')}")
    arrays = [_decode(entry["data"], entry["shape"]) for entry in payload["params"]]
    return payload["kind"], payload["config"], arrays


def restore_params(model: Layer, arrays: list[np.ndarray]) -> None:
    params = model.all_params()
    if len(params) != len(arrays):
        raise SchemaError(
            f"checkpoint holds {len(arrays)} arrays but model has {len(params)} parameters"
        )
    for p, arr in zip(params, arrays):
        if p.value.shape != arr.shape:
            raise SchemaError(
                f"shape mismatch restoring {p.name}: {p.value.shape} vs {arr.shape}"
            )
        p.value[...] = arr
