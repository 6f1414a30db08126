"""Layer zoo: forward/backward pairs over batched arrays.

Geometry is fixed where the architectures leave no choice: Conv2d is 3x3,
stride 1, padding 1 (shape preserving) and MaxPool2d is 2x2, stride 2.
Shapes tracked by the layers are per-sample; all forward/backward functions
operate on arrays with a leading batch axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Shape = tuple[int, ...]


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, preserving dtype."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class Dense:
    """Affine map on flat features: y = x @ w + b."""

    in_units: int
    out_units: int

    def __post_init__(self):
        _require(self.in_units >= 1 and self.out_units >= 1,
                 f"Dense needs positive unit counts, got {self.in_units}->{self.out_units}")

    def output_shape(self, in_shape: Shape) -> Shape:
        _require(in_shape == (self.in_units,),
                 f"Dense({self.in_units}->{self.out_units}) cannot accept input shape {in_shape}")
        return (self.out_units,)

    def param_shapes(self) -> dict[str, Shape]:
        return {"w": (self.in_units, self.out_units), "b": (self.out_units,)}

    def init_params(self, rng: np.random.Generator, dtype) -> dict[str, np.ndarray]:
        scale = math.sqrt(2.0 / self.in_units)
        w = (rng.standard_normal((self.in_units, self.out_units)) * scale).astype(dtype)
        b = np.zeros(self.out_units, dtype=dtype)
        return {"w": w, "b": b}

    def forward(self, x, params, *, train=False, rng=None):
        return x @ params["w"] + params["b"], x

    def backward(self, dy, cache, params):
        x = cache
        dw = x.T @ dy
        db = dy.sum(axis=0)
        dx = dy @ params["w"].T
        return dx, {"w": dw, "b": db}


def _im2col_3x3(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N, C*9, H*W) patch matrix for a 3x3/pad-1 convolution."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 9, h, w), dtype=x.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, :, k] = xp[:, :, di:di + h, dj:dj + w]
            k += 1
    return cols.reshape(n, c * 9, h * w)


def _col2im_3x3(dcols: np.ndarray, n: int, c: int, h: int, w: int) -> np.ndarray:
    """Adjoint of _im2col_3x3: scatter patch gradients back onto the image."""
    dxp = np.zeros((n, c, h + 2, w + 2), dtype=dcols.dtype)
    d = dcols.reshape(n, c, 9, h, w)
    k = 0
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di:di + h, dj:dj + w] += d[:, :, k]
            k += 1
    return dxp[:, :, 1:1 + h, 1:1 + w]


@dataclass(frozen=True)
class Conv2d:
    """3x3 convolution, stride 1, padding 1; H and W pass through unchanged."""

    in_channels: int
    out_channels: int

    def __post_init__(self):
        _require(self.in_channels >= 1 and self.out_channels >= 1,
                 f"Conv2d needs positive channel counts, got {self.in_channels}->{self.out_channels}")

    def output_shape(self, in_shape: Shape) -> Shape:
        _require(len(in_shape) == 3 and in_shape[0] == self.in_channels,
                 f"Conv2d({self.in_channels}->{self.out_channels}) cannot accept input shape {in_shape}")
        return (self.out_channels, in_shape[1], in_shape[2])

    def param_shapes(self) -> dict[str, Shape]:
        return {"w": (self.out_channels, self.in_channels, 3, 3), "b": (self.out_channels,)}

    def init_params(self, rng: np.random.Generator, dtype) -> dict[str, np.ndarray]:
        fan_in = self.in_channels * 9
        w = (rng.standard_normal((self.out_channels, self.in_channels, 3, 3))
             * math.sqrt(2.0 / fan_in)).astype(dtype)
        b = np.zeros(self.out_channels, dtype=dtype)
        return {"w": w, "b": b}

    def forward(self, x, params, *, train=False, rng=None):
        n, c, h, w = x.shape
        cols = _im2col_3x3(x)
        wmat = params["w"].reshape(self.out_channels, c * 9)
        y = np.matmul(wmat, cols)  # (n, out, h*w)
        y += params["b"][:, None]
        return y.reshape(n, self.out_channels, h, w), (cols, (n, c, h, w))

    def backward(self, dy, cache, params):
        cols, (n, c, h, w) = cache
        dyr = dy.reshape(n, self.out_channels, h * w)
        dw = np.matmul(dyr, cols.transpose(0, 2, 1)).sum(axis=0)
        db = dyr.sum(axis=(0, 2))
        wmat = params["w"].reshape(self.out_channels, c * 9)
        dcols = np.matmul(wmat.T, dyr)
        dx = _col2im_3x3(dcols, n, c, h, w)
        return dx, {"w": dw.reshape(params["w"].shape), "b": db}


@dataclass(frozen=True)
class ReLU:
    """Elementwise max(x, 0)."""

    def output_shape(self, in_shape: Shape) -> Shape:
        return in_shape

    def param_shapes(self) -> dict[str, Shape]:
        return {}

    def init_params(self, rng, dtype):
        return {}

    def forward(self, x, params, *, train=False, rng=None):
        return np.maximum(x, 0), x > 0

    def backward(self, dy, cache, params):
        return dy * cache, {}


@dataclass(frozen=True)
class Sigmoid:
    """Elementwise logistic squashing to (0, 1)."""

    def output_shape(self, in_shape: Shape) -> Shape:
        return in_shape

    def param_shapes(self) -> dict[str, Shape]:
        return {}

    def init_params(self, rng, dtype):
        return {}

    def forward(self, x, params, *, train=False, rng=None):
        y = sigmoid(x)
        return y, y

    def backward(self, dy, cache, params):
        y = cache
        return dy * y * (1 - y), {}


@dataclass(frozen=True)
class Dropout:
    """Inverted dropout: train-time mask and 1/(1-rate) rescale, eval identity."""

    rate: float

    def __post_init__(self):
        _require(0.0 <= self.rate < 1.0, f"dropout rate must lie in [0, 1), got {self.rate}")

    def output_shape(self, in_shape: Shape) -> Shape:
        return in_shape

    def param_shapes(self) -> dict[str, Shape]:
        return {}

    def init_params(self, rng, dtype):
        return {}

    def forward(self, x, params, *, train=False, rng=None):
        if not train or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ValueError("Dropout in train mode requires a random stream")
        scale = x.dtype.type(1.0 / (1.0 - self.rate))
        keep = rng.random(x.shape) >= self.rate
        return x * (keep * scale), keep

    def backward(self, dy, cache, params):
        if cache is None:
            return dy, {}
        scale = dy.dtype.type(1.0 / (1.0 - self.rate))
        return dy * (cache * scale), {}


@dataclass(frozen=True)
class MaxPool2d:
    """2x2 max pooling with stride 2; requires even spatial extents."""

    def output_shape(self, in_shape: Shape) -> Shape:
        _require(len(in_shape) == 3, f"MaxPool2d cannot accept input shape {in_shape}")
        c, h, w = in_shape
        _require(h % 2 == 0 and w % 2 == 0,
                 f"MaxPool2d needs even spatial extents, got {h}x{w}")
        return (c, h // 2, w // 2)

    def param_shapes(self) -> dict[str, Shape]:
        return {}

    def init_params(self, rng, dtype):
        return {}

    def forward(self, x, params, *, train=False, rng=None):
        n, c, h, w = x.shape
        r = (x.reshape(n, c, h // 2, 2, w // 2, 2)
             .transpose(0, 1, 2, 4, 3, 5)
             .reshape(n, c, h // 2, w // 2, 4))
        idx = r.argmax(axis=-1)
        y = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]
        return y, (idx, (n, c, h, w))

    def backward(self, dy, cache, params):
        idx, (n, c, h, w) = cache
        dr = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
        np.put_along_axis(dr, idx[..., None], dy[..., None], axis=-1)
        dx = (dr.reshape(n, c, h // 2, w // 2, 2, 2)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, h, w))
        return dx, {}


@dataclass(frozen=True)
class GlobalMaxPerMap:
    """Per-channel spatial maximum: (C, H, W) -> (C,)."""

    def output_shape(self, in_shape: Shape) -> Shape:
        _require(len(in_shape) == 3, f"GlobalMaxPerMap cannot accept input shape {in_shape}")
        return (in_shape[0],)

    def param_shapes(self) -> dict[str, Shape]:
        return {}

    def init_params(self, rng, dtype):
        return {}

    def forward(self, x, params, *, train=False, rng=None):
        n, c, h, w = x.shape
        flat = x.reshape(n, c, h * w)
        idx = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return y, (idx, (n, c, h, w))

    def backward(self, dy, cache, params):
        idx, (n, c, h, w) = cache
        dflat = np.zeros((n, c, h * w), dtype=dy.dtype)
        np.put_along_axis(dflat, idx[..., None], dy[..., None], axis=-1)
        return dflat.reshape(n, c, h, w), {}


@dataclass(frozen=True)
class Flatten:
    """Row-major flattening of the per-sample shape."""

    def output_shape(self, in_shape: Shape) -> Shape:
        return (int(np.prod(in_shape)),)

    def param_shapes(self) -> dict[str, Shape]:
        return {}

    def init_params(self, rng, dtype):
        return {}

    def forward(self, x, params, *, train=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, params):
        return dy.reshape(cache), {}


LayerSpec = Dense | Conv2d | ReLU | Sigmoid | Dropout | MaxPool2d | GlobalMaxPerMap | Flatten
