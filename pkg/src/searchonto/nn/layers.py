"""Layers with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward``;
calling ``backward`` first raises :class:`BackwardBeforeForward`.
Arrays are float64 throughout. Layers accept an optional leading batch
axis: Conv1d takes ``[len, in]`` or ``[batch, len, in]``; Dense maps the
last axis, so it is time-distributed over any leading axes.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class BackwardBeforeForward(RuntimeError):
    pass


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(DTYPE)


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _take_cache(self):
        if self._cache is None:
            raise BackwardBeforeForward(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def __call__(self, x):
        return self.forward(x)


class Conv1d(Layer):
    """Same-padded 1-D cross-correlation. Weights are [out, in, width]."""

    def __init__(self, in_channels: int, out_channels: int, width: int, rng=None):
        super().__init__()
        if width < 1 or width % 2 == 0:
            raise ValueError(f"filter width must be odd and positive, got {width}")
        self.in_channels, self.out_channels, self.width = in_channels, out_channels, width
        if rng is None:
            W = np.zeros((out_channels, in_channels, width), DTYPE)
        else:
            W = glorot_uniform(rng, (out_channels, in_channels, width),
                               in_channels * width, out_channels * width)
        self.params = {"W": W, "b": np.zeros(out_channels, DTYPE)}
        self.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, DTYPE)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(f"conv1d expects [..., len, {self.in_channels}], got {x.shape}")
        length = x.shape[1]
        pad = (self.width - 1) // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        cols = np.stack([xp[:, k:k + length, :] for k in range(self.width)], axis=2)
        y = np.einsum("btkc,ock->bto", cols, self.params["W"], optimize=True) + self.params["b"]
        self._cache = (cols, x.shape, squeeze)
        return y[0] if squeeze else y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cols, xshape, squeeze = self._take_cache()
        if squeeze:
            dy = dy[None]
        self.grads["W"] += np.einsum("bto,btkc->ock", dy, cols, optimize=True)
        self.grads["b"] += dy.sum(axis=(0, 1))
        dcols = np.einsum("bto,ock->btkc", dy, self.params["W"], optimize=True)
        length = xshape[1]
        pad = (self.width - 1) // 2
        dxp = np.zeros((xshape[0], length + 2 * pad, xshape[2]), DTYPE)
        for k in range(self.width):
            dxp[:, k:k + length, :] += dcols[:, :, k, :]
        dx = dxp[:, pad:pad + length, :]
        return dx[0] if squeeze else dx


class Dense(Layer):
    """Affine map over the last axis. Weights are [out, in]."""

    def __init__(self, in_features: int, out_features: int, rng=None):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        if rng is None:
            W = np.zeros((out_features, in_features), DTYPE)
        else:
            W = glorot_uniform(rng, (out_features, in_features), in_features, out_features)
        self.params = {"W": W, "b": np.zeros(out_features, DTYPE)}
        self.zero_grad()

    def forward(self, x):
        x = np.asarray(x, DTYPE)
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"dense expects last axis {self.in_features}, got {x.shape}")
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy):
        x = self._take_cache()
        x2 = x.reshape(-1, self.in_features)
        dy2 = dy.reshape(-1, self.out_features)
        self.grads["W"] += dy2.T @ x2
        self.grads["b"] += dy2.sum(axis=0)
        return dy @ self.params["W"]


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    return np.tanh(x)


def softmax(x, axis=-1):
    x = np.asarray(x, DTYPE)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def logsumexp(x, axis=None):
    """Log-sum-exp that tolerates rows of -inf."""
    x = np.asarray(x, DTYPE)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out.squeeze(axis=axis) if axis is not None else out.reshape(())[()]


class ReLU(Layer):
    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, dy):
        return dy * self._take_cache()


class Sigmoid(Layer):
    def forward(self, x):
        self._cache = y = sigmoid(x)
        return y

    def backward(self, dy):
        y = self._take_cache()
        return dy * y * (1.0 - y)


class Tanh(Layer):
    def forward(self, x):
        self._cache = y = np.tanh(x)
        return y

    def backward(self, dy):
        y = self._take_cache()
        return dy * (1.0 - y * y)


class Softmax(Layer):
    def forward(self, x):
        self._cache = y = softmax(x)
        return y

    def backward(self, dy):
        y = self._take_cache()
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


def bce_with_logits(logits, targets, mask=None):
    """Mean binary cross-entropy over unmasked positions, plus d(loss)/d(logits)."""
    logits = np.asarray(logits, DTYPE)
    targets = np.asarray(targets, DTYPE)
    mask = np.ones_like(logits) if mask is None else np.asarray(mask, DTYPE)
    count = max(mask.sum(), 1.0)
    # log(1 + exp(-|z|)) + max(z, 0) - z*t
    per = np.logaddexp(0.0, -np.abs(logits)) + np.maximum(logits, 0.0) - logits * targets
    loss = float((per * mask).sum() / count)
    grad = (sigmoid(logits) - targets) * mask / count
    return loss, grad
