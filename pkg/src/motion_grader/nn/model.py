"""Residual temporal convolutional network (Res-TCN) for sequence classification.

Layout: Conv -> residual units in stages -> BN -> ReLU -> Dropout ->
global average pool -> dense -> softmax.  Each residual unit computes
``shortcut(x) + Conv(Dropout(ReLU(BN(x))))``, where the shortcut is the
identity, or a trainable 1x1 convolution when the channel count changes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ShapeError
from .layers import (
    BatchNormLayer,
    ConvLayer,
    DenseLayer,
    Dropout,
    ReLU,
    global_avg_pool,
    global_avg_pool_backward,
    l1_penalty,
    softmax,
    softmax_cross_entropy,
)
from .optim import NesterovSGD

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    initial_filters: int = 8
    initial_filter_len: int = 8
    initial_stride: int = 1
    stage_filters: tuple[int, ...] = (64, 128, 256)
    units_per_stage: int = 3
    filter_len: int = 8
    dropout: float = 0.5
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self):
        self.stage_filters = tuple(int(f) for f in self.stage_filters)
        ints = dict(initial_filters=self.initial_filters, initial_filter_len=self.initial_filter_len,
                    initial_stride=self.initial_stride, units_per_stage=self.units_per_stage,
                    filter_len=self.filter_len)
        for k, v in ints.items():
            if int(v) != v or v < 1:
                raise ConfigError(f"{k} must be a positive integer, got {v}")
        if not self.stage_filters or min(self.stage_filters) < 1:
            raise ConfigError(f"stage_filters must be non-empty positive integers, got {self.stage_filters}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.bn_eps <= 0 or not 0.0 <= self.bn_momentum < 1.0:
            raise ConfigError("bn_eps must be > 0 and bn_momentum in [0, 1)")


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 128
    learning_rate: float = 0.01
    momentum: float = 0.9
    l1_weight: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative integer, got {self.epochs}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.l1_weight < 0:
            raise ConfigError(f"l1_weight must be non-negative, got {self.l1_weight}")


class ResidualUnit:
    def __init__(self, in_channels, out_channels, cfg: ModelConfig, rng, name):
        self.name = name
        self.bn = BatchNormLayer.init(in_channels, cfg.bn_eps, cfg.bn_momentum, f"{name}.bn")
        self.relu = ReLU(f"{name}.relu")
        self.drop = Dropout(cfg.dropout, rng, f"{name}.dropout")
        self.conv = ConvLayer.init(cfg.filter_len, in_channels, out_channels, rng, name=f"{name}.conv")
        self.proj = None
        if in_channels != out_channels:
            self.proj = ConvLayer.init(1, in_channels, out_channels, rng, name=f"{name}.proj")

    @property
    def layers(self):
        layers = [self.bn, self.conv]
        return layers + [self.proj] if self.proj is not None else layers

    def forward(self, x, train=True):
        h = self.bn.forward(x, train)
        h = self.relu.forward(h, train)
        h = self.drop.forward(h, train)
        h = self.conv.forward(h, train)
        shortcut = x if self.proj is None else self.proj.forward(x, train)
        return shortcut + h

    def backward(self, grad_out):
        g = self.conv.backward(grad_out)
        g = self.drop.backward(g)
        g = self.relu.backward(g)
        g = self.bn.backward(g)
        if self.proj is None:
            return g + grad_out
        return g + self.proj.backward(grad_out)


def residual_unit_forward(x, unit: ResidualUnit, train=True):
    return unit.forward(x, train)


class ResTcnModel:
    def __init__(self, input_channels: int, class_count: int, config: ModelConfig, seed: int = 0):
        if input_channels < 1 or class_count < 2:
            raise ConfigError(f"need input_channels >= 1 and class_count >= 2, got {input_channels}, {class_count}")
        self.input_channels = input_channels
        self.class_count = class_count
        self.config = config
        self.seed = seed
        init_rng = np.random.default_rng(seed)
        self.rng = np.random.default_rng([seed, 1])  # dropout masks
        cfg = config
        self.conv0 = ConvLayer.init(cfg.initial_filter_len, input_channels, cfg.initial_filters, init_rng,
                                    stride=cfg.initial_stride, name="conv0")
        self.units = []
        channels = cfg.initial_filters
        for s, filters in enumerate(cfg.stage_filters):
            for _ in range(cfg.units_per_stage):
                name = f"unit{len(self.units) + 1}"
                self.units.append(ResidualUnit(channels, filters, cfg, self.rng, name))
                channels = filters
        self.head_bn = BatchNormLayer.init(channels, cfg.bn_eps, cfg.bn_momentum, "head.bn")
        self.head_relu = ReLU("head.relu")
        self.head_drop = Dropout(cfg.dropout, self.rng, "head.dropout")
        self.dense = DenseLayer.init(channels, class_count, init_rng, "dense")
        self._pool_shape = None

    # -- parameter bookkeeping

    def param_layers(self):
        out = [self.conv0]
        for u in self.units:
            out.extend(u.layers)
        return out + [self.head_bn, self.dense]

    def conv_layers(self):
        return [l for l in self.param_layers() if isinstance(l, ConvLayer)]

    def named_parameters(self):
        return [(f"{l.name}.{k}", v) for l in self.param_layers() for k, v in l.params().items()]

    def named_gradients(self):
        return [(f"{l.name}.{k}", l.grads[k]) for l in self.param_layers() for k in l.params()]

    def named_buffers(self):
        return [(f"{l.name}.{k}", v) for l in self.param_layers() if isinstance(l, BatchNormLayer)
                for k, v in l.buffers().items()]

    def parameter_count(self) -> int:
        return sum(v.size for _, v in self.named_parameters())

    def zero_grad(self):
        for l in self.param_layers():
            l.zero_grad()

    def state_dict(self):
        return {k: v.copy() for k, v in self.named_parameters() + self.named_buffers()}

    def load_state_dict(self, state):
        for k, v in self.named_parameters() + self.named_buffers():
            if state[k].shape != v.shape:
                raise ShapeError(f"{k}: checkpoint shape {state[k].shape} != {v.shape}")
            v[...] = state[k]

    def reset_rng(self, seed=None):
        """Reseed the dropout generator in place (masks become reproducible)."""
        new = np.random.default_rng([self.seed if seed is None else seed, 1])
        self.rng.bit_generator.state = new.bit_generator.state

    # -- forward / backward

    def logits(self, x, train=False):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.input_channels:
            raise ShapeError(f"model input must be (N, T, {self.input_channels}), got {x.shape}")
        h = self.conv0.forward(x, train)
        for u in self.units:
            h = u.forward(h, train)
        h = self.head_bn.forward(h, train)
        h = self.head_relu.forward(h, train)
        h = self.head_drop.forward(h, train)
        self._pool_shape = h.shape
        return self.dense.forward(global_avg_pool(h), train)

    def forward(self, x, train=False):
        return softmax(self.logits(x, train))

    def backward(self, grad_logits):
        g = self.dense.backward(grad_logits)
        g = global_avg_pool_backward(self._pool_shape, g)
        g = self.head_drop.backward(g)
        g = self.head_relu.backward(g)
        g = self.head_bn.backward(g)
        for u in reversed(self.units):
            g = u.backward(g)
        return self.conv0.backward(g)


def build_res_tcn(input_channels: int, class_count: int, config: ModelConfig | None = None,
                  seed: int = 0) -> ResTcnModel:
    return ResTcnModel(input_channels, class_count, config or ModelConfig(), seed)


def _as_array(batch):
    return getattr(batch, "data", batch)


def model_forward(model: ResTcnModel, batch, train=False, chunk: int | None = None):
    """Class probabilities (N, K).  ``chunk`` bounds memory in infer mode."""
    x = _as_array(batch)
    if train or chunk is None or len(x) <= chunk:
        return model.forward(x, train)
    return np.concatenate([model.forward(x[i:i + chunk], False) for i in range(0, len(x), chunk)])


def model_backward(model: ResTcnModel, batch, labels, l1_weight=0.0):
    """Train-mode forward + backward.  Leaves the gradients of the total loss
    (cross entropy + L1 on every convolution weight) in each layer's
    ``grads`` and returns the loss."""
    model.zero_grad()
    logits = model.logits(_as_array(batch), train=True)
    loss, _, grad_logits = softmax_cross_entropy(logits, labels)
    model.backward(grad_logits)
    convs = model.conv_layers()
    penalty, l1_grads = l1_penalty([c.weight for c in convs], l1_weight)
    for c, g in zip(convs, l1_grads):
        c.grads["weight"] += g
    return loss + penalty


def make_optimizer(model: ResTcnModel, config: TrainConfig) -> NesterovSGD:
    return NesterovSGD([v for _, v in model.named_parameters()], config.learning_rate, config.momentum)


def train_step(model: ResTcnModel, batch, labels, config: TrainConfig, optimizer: NesterovSGD):
    """One Nesterov update of every parameter; returns the loss at the lookahead point."""
    with optimizer.lookahead():
        loss = model_backward(model, batch, labels, config.l1_weight)
        grads = [g.copy() for _, g in model.named_gradients()]
    optimizer.step(grads)
    return loss


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(model: ResTcnModel, path, extra: dict | None = None):
    header = {
        "version": CHECKPOINT_VERSION,
        "input_channels": model.input_channels,
        "class_count": model.class_count,
        "seed": model.seed,
        "model_config": asdict(model.config),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.named_parameters()}
    arrays.update({f"buffer/{k}": v for k, v in model.named_buffers()})
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path) -> ResTcnModel:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        model = ResTcnModel(header["input_channels"], header["class_count"],
                            ModelConfig(**header["model_config"]), header["seed"])
        state = {k.split("/", 1)[1]: data[k] for k in data.files if k != "header"}
    model.load_state_dict(state)
    return model
