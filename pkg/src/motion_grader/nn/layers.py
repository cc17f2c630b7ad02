"""Layers with hand-derived gradients, operating on (N, T, C) float64 arrays.

Each ``*_forward``/``*_backward`` pair is a pure function of its inputs
(apart from batch-norm running statistics, which a train-mode forward
updates).  The layer classes cache what their backward pass needs and
accumulate parameter gradients into ``grads``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateBatch, LabelError, ShapeError


def _check3(x, channels, what):
    if x.ndim != 3:
        raise ShapeError(f"{what}: expected (N, T, C) input, got shape {x.shape}")
    if x.shape[2] != channels:
        raise ShapeError(f"{what}: expected {channels} channels, got {x.shape[2]}")


# ---------------------------------------------------------------- convolution

@dataclass(eq=False)
class ConvLayer:
    """Temporal convolution; ``weight`` is (filter_len, in_channels, out_channels)."""

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    name: str = "conv"
    grads: dict = field(default_factory=dict, repr=False)
    _x: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        c, _, f = self.weight.shape
        if c < 1 or f < 1 or self.stride < 1:
            raise ShapeError(f"{self.name}: invalid conv geometry {self.weight.shape}, stride {self.stride}")
        if self.bias.shape != (f,):
            raise ShapeError(f"{self.name}: bias shape {self.bias.shape} != ({f},)")
        self.zero_grad()

    @classmethod
    def init(cls, filter_len, in_channels, out_channels, rng, stride=1, name="conv"):
        std = np.sqrt(2.0 / (filter_len * in_channels))
        w = rng.normal(0.0, std, size=(filter_len, in_channels, out_channels))
        return cls(w, np.zeros(out_channels), stride, name)

    @property
    def filter_len(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[2]

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def zero_grad(self):
        self.grads = {"weight": np.zeros_like(self.weight), "bias": np.zeros_like(self.bias)}

    def forward(self, x, train=True):
        self._x = x
        return conv1d_forward(x, self)

    def backward(self, grad_out):
        gx, gw, gb = conv1d_backward(self._x, self, grad_out)
        self.grads["weight"] += gw
        self.grads["bias"] += gb
        return gx


def _conv_geometry(t, c, s):
    t_out = -(-t // s)
    left = c // 2
    # last padded index read is s*(t_out-1) + c - 1 (in padded coordinates)
    right = max(0, s * (t_out - 1) + c - left - t)
    return t_out, left, right


def _im2col(x, c, s):
    n, t, cin = x.shape
    t_out, left, right = _conv_geometry(t, c, s)
    xp = np.zeros((n, left + t + right, cin))
    xp[:, left:left + t] = x
    win = sliding_window_view(xp, c, axis=1)[:, : s * (t_out - 1) + 1 : s]  # (N, T_out, Cin, c)
    cols = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(n * t_out, c * cin)
    return cols, t_out, left, xp.shape[1]


def conv1d_forward(x, layer: ConvLayer):
    """Same-length cross-correlation.

    y[n, t, o] = b[o] + sum_{k, i} w[k, i, o] * x[n, s*t + k - c//2, i],
    with x taken as zero outside [0, T).
    """
    _check3(x, layer.in_channels, layer.name)
    c, cin, f = layer.weight.shape
    n = x.shape[0]
    cols, t_out, _, _ = _im2col(x, c, layer.stride)
    y = cols @ layer.weight.reshape(c * cin, f) + layer.bias
    return y.reshape(n, t_out, f)


def conv1d_backward(x, layer: ConvLayer, grad_out):
    """Returns (grad_x, grad_weight, grad_bias)."""
    _check3(x, layer.in_channels, layer.name)
    c, cin, f = layer.weight.shape
    s = layer.stride
    n, t, _ = x.shape
    cols, t_out, left, tp = _im2col(x, c, s)
    if grad_out.shape != (n, t_out, f):
        raise ShapeError(f"{layer.name}: grad shape {grad_out.shape} != {(n, t_out, f)}")
    g = grad_out.reshape(n * t_out, f)
    grad_w = (cols.T @ g).reshape(c, cin, f)
    grad_b = g.sum(axis=0)
    gcols = (g @ layer.weight.reshape(c * cin, f).T).reshape(n, t_out, c, cin)
    gxp = np.zeros((n, tp, cin))
    for k in range(c):
        gxp[:, k : k + s * (t_out - 1) + 1 : s] += gcols[:, :, k]
    return gxp[:, left:left + t], grad_w, grad_b


# ---------------------------------------------------------------- batch norm

@dataclass(eq=False)
class BatchNormLayer:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.9
    name: str = "bn"
    grads: dict = field(default_factory=dict, repr=False)
    _x: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.zero_grad()

    @classmethod
    def init(cls, channels, eps=1e-5, momentum=0.9, name="bn"):
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels),
                   eps, momentum, name)

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def zero_grad(self):
        self.grads = {"gamma": np.zeros_like(self.gamma), "beta": np.zeros_like(self.beta)}

    def forward(self, x, train=True):
        self._x = x
        return batchnorm_forward(x, self, train)

    def backward(self, grad_out):
        gx, gg, gb = batchnorm_backward(self._x, self, grad_out)
        self.grads["gamma"] += gg
        self.grads["beta"] += gb
        return gx


def batchnorm_forward(x, layer: BatchNormLayer, train=True):
    """Per-channel normalization over (batch, time).

    Train mode uses batch statistics and updates the running ones in place
    (``running = m * running + (1 - m) * batch``, biased variance).  Infer
    mode uses the running statistics only.
    """
    _check3(x, layer.channels, layer.name)
    if train:
        if x.shape[0] * x.shape[1] < 2:
            raise DegenerateBatch(f"{layer.name}: train-mode batch norm needs at least 2 values per channel")
        mu = x.mean(axis=(0, 1))
        var = x.var(axis=(0, 1))
        m = layer.momentum
        layer.running_mean[...] = m * layer.running_mean + (1 - m) * mu
        layer.running_var[...] = m * layer.running_var + (1 - m) * var
    else:
        mu, var = layer.running_mean, layer.running_var
    return layer.gamma * (x - mu) / np.sqrt(var + layer.eps) + layer.beta


def batchnorm_backward(x, layer: BatchNormLayer, grad_out):
    """Gradients of the train-mode forward, including the dependence of the
    batch mean and variance on ``x``."""
    _check3(x, layer.channels, layer.name)
    if grad_out.shape != x.shape:
        raise ShapeError(f"{layer.name}: grad shape {grad_out.shape} != {x.shape}")
    m = x.shape[0] * x.shape[1]
    mu = x.mean(axis=(0, 1))
    inv_std = 1.0 / np.sqrt(x.var(axis=(0, 1)) + layer.eps)
    xhat = (x - mu) * inv_std
    grad_beta = grad_out.sum(axis=(0, 1))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 1))
    gxhat = grad_out * layer.gamma
    grad_x = inv_std / m * (m * gxhat - gxhat.sum(axis=(0, 1)) - xhat * (gxhat * xhat).sum(axis=(0, 1)))
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------- activations

def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


class ReLU:
    def __init__(self, name="relu"):
        self.name = name
        self._x = None

    def params(self):
        return {}

    def zero_grad(self):
        pass

    def forward(self, x, train=True):
        self._x = x
        return relu(x)

    def backward(self, grad_out):
        return relu_backward(self._x, grad_out)


def dropout(x, rate, train, rng):
    """Inverted dropout.  Returns ``(y, mask)`` with ``y = x * mask``; the
    mask holds 0 or 1/(1-rate)."""
    if not train or rate == 0.0:
        return x, np.ones_like(x)
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(mask, grad_out):
    return grad_out * mask


class Dropout:
    def __init__(self, rate, rng, name="dropout"):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self.name = name
        self._mask = None

    def params(self):
        return {}

    def zero_grad(self):
        pass

    def forward(self, x, train=True):
        y, self._mask = dropout(x, self.rate, train, self.rng)
        return y

    def backward(self, grad_out):
        return dropout_backward(self._mask, grad_out)


# ---------------------------------------------------------------- pooling / head

def global_avg_pool(x):
    return x.mean(axis=1)


def global_avg_pool_backward(x_shape, grad_out):
    n, t, c = x_shape
    return np.broadcast_to(grad_out[:, None, :] / t, (n, t, c)).copy()


@dataclass(eq=False)
class DenseLayer:
    weight: np.ndarray  # (C, K)
    bias: np.ndarray
    name: str = "dense"
    grads: dict = field(default_factory=dict, repr=False)
    _h: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.zero_grad()

    @classmethod
    def init(cls, in_features, out_features, rng, name="dense"):
        w = rng.normal(0.0, np.sqrt(2.0 / in_features), size=(in_features, out_features))
        return cls(w, np.zeros(out_features), name)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def zero_grad(self):
        self.grads = {"weight": np.zeros_like(self.weight), "bias": np.zeros_like(self.bias)}

    def forward(self, h, train=True):
        if h.ndim != 2 or h.shape[1] != self.weight.shape[0]:
            raise ShapeError(f"{self.name}: expected (N, {self.weight.shape[0]}), got {h.shape}")
        self._h = h
        return h @ self.weight + self.bias

    def backward(self, grad_logits):
        self.grads["weight"] += self._h.T @ grad_logits
        self.grads["bias"] += grad_logits.sum(axis=0)
        return grad_logits @ self.weight.T


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_labels(labels, k):
    labels = np.asarray(labels)
    if labels.ndim != 1 or np.any(labels < 0) or np.any(labels >= k):
        raise LabelError(f"labels must be integers in [0, {k}), got {labels}")
    return labels.astype(np.intp)


def cross_entropy(probs, labels):
    """Mean negative log-likelihood of ``labels`` under ``probs``."""
    labels = _check_labels(labels, probs.shape[1])
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, np.finfo(np.float64).tiny))))


def softmax_cross_entropy(logits, labels):
    """Returns ``(loss, probs, grad_logits)``, computed via log-softmax so
    the loss stays finite for any finite logits."""
    labels = _check_labels(labels, logits.shape[1])
    n = len(labels)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), labels].mean())
    probs = np.exp(logp)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, probs, grad / n


def l1_penalty(weights, l1_weight):
    """``l1_weight * sum |w|`` over ``weights`` and its subgradient (sign(0) = 0)."""
    value = l1_weight * sum(float(np.abs(w).sum()) for w in weights)
    return value, [l1_weight * np.sign(w) for w in weights]
