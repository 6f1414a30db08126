"""Network checkpoints.

Layout: magic ``MINTNN01``, a u32 little-endian byte length, a UTF-8 JSON
manifest (layer specs, input shape, per-layer parameter names and shapes),
then the raw parameter data as little-endian float32 in manifest order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import layers as L
from .network import Network

MAGIC = b"MINTNN01"

_LAYER_CODES = {
    L.Dense: "dense",
    L.Conv2d: "conv2d",
    L.ReLU: "relu",
    L.Sigmoid: "sigmoid",
    L.Dropout: "dropout",
    L.MaxPool2d: "max_pool2d",
    L.GlobalMaxPerMap: "global_max_per_map",
    L.Flatten: "flatten",
}
_LAYER_TYPES = {code: cls for cls, code in _LAYER_CODES.items()}


class CheckpointError(ValueError):
    """Malformed checkpoint file; nothing is returned on failure."""


def _layer_to_dict(layer) -> dict:
    d = {"type": _LAYER_CODES[type(layer)]}
    if isinstance(layer, L.Dense):
        d.update(in_units=layer.in_units, out_units=layer.out_units)
    elif isinstance(layer, L.Conv2d):
        d.update(in_channels=layer.in_channels, out_channels=layer.out_channels)
    elif isinstance(layer, L.Dropout):
        d.update(rate=layer.rate)
    return d


def _layer_from_dict(d: dict):
    try:
        cls = _LAYER_TYPES[d["type"]]
    except KeyError as exc:
        raise CheckpointError(f"unknown layer type {d.get('type')!r}") from exc
    kwargs = {k: v for k, v in d.items() if k != "type"}
    return cls(**kwargs)


def save_network(net: Network, path) -> None:
    manifest = {
        "layers": [_layer_to_dict(layer) for layer in net.layers],
        "input_shape": list(net.input_shape),
        "params": [
            [[name, list(net.params[i][name].shape)] for name in sorted(net.params[i])]
            for i in range(len(net.layers))
        ],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for i in range(len(net.layers)):
            for name in sorted(net.params[i]):
                f.write(np.ascontiguousarray(net.params[i][name], dtype="<f4").tobytes())


def load_network(path, dtype=np.float32) -> Network:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise CheckpointError(f"file too short ({len(raw)} bytes) for a checkpoint header")
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"bad magic at offset 0: {raw[:len(MAGIC)]!r}")
    (mlen,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    if start + mlen > len(raw):
        raise CheckpointError(f"manifest of {mlen} bytes overruns file at offset {start}")
    try:
        manifest = json.loads(raw[start:start + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"manifest is not valid JSON at offset {start}: {exc}") from exc

    layers = [_layer_from_dict(d) for d in manifest["layers"]]
    offset = start + mlen
    params = []
    for entry in manifest["params"]:
        d = {}
        for name, shape in entry:
            count = int(np.prod(shape)) if shape else 1
            nbytes = count * 4
            if offset + nbytes > len(raw):
                raise CheckpointError(
                    f"parameter data truncated at offset {offset} (need {nbytes} bytes)")
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
            d[name] = arr.reshape(shape).astype(dtype)
            offset += nbytes
        params.append(d)
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes after parameter data")

    net = Network(layers, tuple(manifest["input_shape"]), params, mode="eval", dtype=dtype)
    return net
