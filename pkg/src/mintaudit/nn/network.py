"""Network container and the forward/backward/SGD drivers.

Training is bit-deterministic: parameter init, batch order and dropout masks
all come from fixed streams derived from the master seed (see rng.py), and a
version counter ties every forward cache to the parameter state it was
computed from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .layers import Dropout, LayerSpec, Shape

MODES = ("train", "eval")


class ShapeMismatch(ValueError):
    """Input cannot flow through the layer chain; carries the offending index."""

    def __init__(self, layer_index: int, message: str):
        super().__init__(f"layer {layer_index}: {message}")
        self.layer_index = layer_index


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 64
    l1_coefficient: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        # epochs == 0 is allowed as an explicit no-op (parameters unchanged).
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.l1_coefficient < 0:
            raise ValueError(f"l1_coefficient must be nonnegative, got {self.l1_coefficient}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


class Network:
    """An ordered layer chain with its parameters and a train/eval mode."""

    def __init__(self, layers, input_shape: Shape, params, mode: str = "train",
                 dtype=np.float32):
        self.layers: tuple[LayerSpec, ...] = tuple(layers)
        self.input_shape = tuple(input_shape)
        self.params: list[dict[str, np.ndarray]] = list(params)
        self.dtype = np.dtype(dtype)
        self.version = 0
        self.set_mode(mode)
        if len(self.params) != len(self.layers):
            raise ValueError("one parameter dict per layer required")
        self.shapes = self._validate_chain()
        for i, layer in enumerate(self.layers):
            expected = layer.param_shapes()
            got = {k: v.shape for k, v in self.params[i].items()}
            if got != expected:
                raise ShapeMismatch(i, f"parameter shapes {got} do not match spec {expected}")

    @classmethod
    def build(cls, layers, input_shape: Shape, seed: int = 0, dtype=np.float32) -> "Network":
        """Construct with parameters drawn from per-layer streams of `seed`."""
        params = [layer.init_params(rngmod.stream(seed, rngmod.PARAM_INIT, i), dtype)
                  for i, layer in enumerate(layers)]
        return cls(layers, input_shape, params, mode="train", dtype=dtype)

    def _validate_chain(self) -> list[Shape]:
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(layer.output_shape(shapes[-1]))
            except ValueError as exc:
                raise ShapeMismatch(i, str(exc)) from exc
        return shapes

    @property
    def output_shape(self) -> Shape:
        return self.shapes[-1]

    @property
    def num_params(self) -> int:
        return sum(int(p.size) for d in self.params for p in d.values())

    @property
    def has_dropout(self) -> bool:
        return any(isinstance(layer, Dropout) for layer in self.layers)

    def set_mode(self, mode: str) -> "Network":
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        return self

    def train(self) -> "Network":
        return self.set_mode("train")

    def eval(self) -> "Network":
        return self.set_mode("eval")

    def l1_sum(self) -> float:
        return float(sum(np.abs(p).sum() for d in self.params for p in d.values()))


@dataclass
class ForwardCache:
    """Per-layer intermediates from one forward pass, pinned to a parameter version."""

    version: int
    mode: str
    batch_size: int
    outputs: list
    entries: list
    output: np.ndarray = field(repr=False, default=None)


def dropout_streams(seed: int, step: int):
    """Per-layer dropout mask generators for one optimizer step."""

    def for_layer(index: int) -> np.random.Generator:
        return rngmod.stream(seed, rngmod.DROPOUT, step, index)

    return for_layer


def forward(net: Network, x: np.ndarray, dropout_rng=None) -> tuple[np.ndarray, ForwardCache]:
    """Run the batch through the chain, returning output and backward cache.

    `dropout_rng` maps a layer index to a mask generator; it is required only
    in train mode when the network contains a Dropout layer.
    """
    x = np.asarray(x)
    if x.dtype != net.dtype:
        x = x.astype(net.dtype)
    if x.ndim != len(net.input_shape) + 1 or x.shape[1:] != net.input_shape:
        raise ShapeMismatch(0, f"input shape {x.shape[1:]} does not match {net.input_shape}")
    train = net.mode == "train"
    if train and net.has_dropout and dropout_rng is None:
        raise ValueError("train-mode forward with Dropout requires a random stream")

    outputs, entries = [], []
    for i, layer in enumerate(net.layers):
        layer_rng = dropout_rng(i) if train and isinstance(layer, Dropout) and dropout_rng else None
        x, cache = layer.forward(x, net.params[i], train=train, rng=layer_rng)
        outputs.append(x)
        entries.append(cache)
    return x, ForwardCache(net.version, net.mode, x.shape[0], outputs, entries, x)


def backward(net: Network, cache: ForwardCache, loss_gradient: np.ndarray,
             l1_coefficient: float = 0.0) -> list[dict[str, np.ndarray]]:
    """Gradients of (loss + l1·Σ|param|) for every parameter tensor.

    The L1 subgradient is 0 at exactly-zero entries (np.sign convention).
    """
    if cache.version != net.version:
        raise ValueError("stale cache: parameters changed since the forward pass")
    if cache.mode != net.mode or len(cache.entries) != len(net.layers):
        raise ValueError("cache does not match this network/mode")
    dy = np.asarray(loss_gradient, dtype=net.dtype)
    if dy.shape != cache.output.shape:
        raise ValueError(f"loss gradient shape {dy.shape} does not match output "
                         f"shape {cache.output.shape}")

    grads: list[dict[str, np.ndarray]] = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        dy, g = net.layers[i].backward(dy, cache.entries[i], net.params[i])
        if l1_coefficient > 0:
            for k, p in net.params[i].items():
                g[k] = g[k] + l1_coefficient * np.sign(p)
        grads[i] = g
    return grads


def sgd_step(net: Network, grads, config: TrainConfig) -> Network:
    """Plain gradient descent: w <- w - lr * g, in place."""
    for i, layer_grads in enumerate(grads):
        for k, g in layer_grads.items():
            p = net.params[i][k]
            if g.shape != p.shape:
                raise ValueError(f"layer {i} gradient {k!r} shape {g.shape} != {p.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(
                    f"nonfinite gradient in layer {i} parameter {k!r}; training aborted")
            p -= config.learning_rate * g
    net.version += 1
    return net


@dataclass
class TrainMetrics:
    epoch_losses: list[float]
    epoch_accuracies: list[float]

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")

    @property
    def final_accuracy(self) -> float:
        return self.epoch_accuracies[-1] if self.epoch_accuracies else float("nan")


def fit(net: Network, x: np.ndarray, y: np.ndarray, config: TrainConfig,
        loss_grad_fn, epoch_metric=None) -> TrainMetrics:
    """Mini-batch SGD over the dataset; deterministic under `config.seed`.

    `loss_grad_fn(pred, targets) -> (mean data loss, d loss/d pred)` defines
    the objective; fit adds the L1 penalty. `epoch_metric(net)`, if given, is
    evaluated after each epoch in eval mode (e.g. train accuracy).
    """
    x = np.asarray(x, dtype=net.dtype)
    y = np.asarray(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs vs {y.shape[0]} targets")
    n = x.shape[0]
    net.train()
    losses, accs = [], []
    step = 0
    for epoch in range(config.epochs):
        order = rngmod.stream(config.seed, rngmod.SHUFFLE, epoch).permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            sel = order[start:start + config.batch_size]
            pred, cache = forward(net, x[sel], dropout_streams(config.seed, step))
            data_loss, dpred = loss_grad_fn(pred, y[sel])
            grads = backward(net, cache, dpred, l1_coefficient=config.l1_coefficient)
            sgd_step(net, grads, config)
            batch_losses.append(data_loss + config.l1_coefficient * net.l1_sum())
            step += 1
        losses.append(float(np.mean(batch_losses)))
        if epoch_metric is not None:
            mode = net.mode
            net.eval()
            accs.append(float(epoch_metric(net)))
            net.set_mode(mode)
    net.eval()
    return TrainMetrics(losses, accs)
