"""The model under audit: a 4-block CNN with named tap points.

A desk-scale stand-in for a production recognition backbone: four
Conv-ReLU-MaxPool blocks, a flat embedding head, and a classification head
that exists only so the model can be genuinely fit to its member data. Taps
expose the post-pool activation of each block plus the embedding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import Membership, Sample
from .nn.network import TrainMetrics

logger = logging.getLogger(__name__)

TAP_NAMES = ("conv_block_1", "conv_block_2", "conv_block_3", "conv_block_4")
OUTCOME_TAP = "model_outcome"


@dataclass(frozen=True)
class TapConfig:
    """Which internal tensors the audit pipeline may read (the audited subset)."""

    taps: frozenset

    def __post_init__(self):
        object.__setattr__(self, "taps", frozenset(self.taps))
        if not self.taps:
            raise ValueError("at least one tap is required")
        unknown = self.taps - set(TAP_NAMES) - {OUTCOME_TAP}
        if unknown:
            raise ValueError(f"unknown tap name(s): {sorted(unknown)}")


ALL_TAPS = TapConfig(frozenset(TAP_NAMES) | {OUTCOME_TAP})


@dataclass(frozen=True)
class ModelOutcome:
    """The audited model's output embedding (class head detached)."""

    embedding: np.ndarray

    def __post_init__(self):
        if self.embedding.ndim != 1 or not np.all(np.isfinite(self.embedding)):
            raise ValueError("embedding must be a finite 1-D vector")


@dataclass
class AadRecord:
    """Auxiliary Auditable Data for one sample: the requested tap tensors.

    The membership tag is copied from the sample's partition tag, never
    inferred; it is None for unlabeled (e.g. user-uploaded) samples.
    """

    sample_id: str
    membership: Membership | None
    taps: dict[str, np.ndarray]
    outcome: np.ndarray | None = None
    source_dataset: str = ""
    model_untrained: bool = False


@dataclass
class AuditedModel:
    network: nn.Network
    architecture_id: str
    embedding_dim: int
    n_classes: int
    channels_per_block: tuple[int, int, int, int]
    tap_layers: dict[str, int] = field(repr=False, default_factory=dict)
    trained: bool = False

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return self.network.input_shape

    def tap_shape(self, name: str) -> tuple[int, ...]:
        return self.network.shapes[self.tap_layers[name] + 1]


def build_toy_audited_model(channels_per_block=(8, 16, 32, 64), embedding_dim: int = 32,
                            n_classes: int = 4, in_channels: int = 1, image_size: int = 32,
                            seed: int = 0) -> AuditedModel:
    """Four Conv-ReLU-MaxPool blocks, then Flatten -> embedding -> class head."""
    channels = tuple(int(c) for c in channels_per_block)
    if len(channels) != 4:
        raise ValueError(f"exactly 4 conv blocks required, got {len(channels)}")
    if min(channels) < 1 or embedding_dim < 1:
        raise ValueError("channel counts and embedding_dim must be positive")
    if n_classes < 2:
        raise ValueError(f"class head needs at least 2 classes, got {n_classes}")
    if image_size % 16 != 0 or image_size < 16:
        raise ValueError(f"image size must be a positive multiple of 16, got {image_size}")

    layers: list[nn.LayerSpec] = []
    tap_layers: dict[str, int] = {}
    prev = in_channels
    for block, ch in enumerate(channels, start=1):
        layers += [nn.Conv2d(prev, ch), nn.ReLU(), nn.MaxPool2d()]
        tap_layers[f"conv_block_{block}"] = len(layers) - 1  # post-ReLU, post-pool
        prev = ch
    final_spatial = image_size // 16
    layers.append(nn.Flatten())
    layers.append(nn.Dense(channels[-1] * final_spatial * final_spatial, embedding_dim))
    tap_layers[OUTCOME_TAP] = len(layers) - 1
    layers.append(nn.Dense(embedding_dim, n_classes))  # class head, detached at audit time

    network = nn.Network.build(layers, (in_channels, image_size, image_size), seed=seed)
    arch_id = (f"toycnn4-{'x'.join(str(c) for c in channels)}"
               f"-e{embedding_dim}-c{n_classes}-i{in_channels}x{image_size}")
    return AuditedModel(network, arch_id, embedding_dim, n_classes, channels,
                        tap_layers=tap_layers)


def _train_accuracy(network: nn.Network, x: np.ndarray, labels: np.ndarray,
                    batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, len(x), batch_size):
        logits, _ = nn.forward(network, x[start:start + batch_size])
        hits += int((logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return hits / len(x)


def train_audited(model: AuditedModel, member_samples: list[Sample],
                  config: nn.TrainConfig | None = None) -> TrainMetrics:
    """Fit the class head end-to-end on member samples only.

    Any sample tagged External is rejected outright: it would poison the
    membership ground truth of every later audit.
    """
    if not member_samples:
        raise ValueError("no training samples given")
    for s in member_samples:
        if s.partition is not Membership.MEMBER:
            raise ValueError(
                f"sample {s.id} is tagged {s.partition.value}: only Member samples "
                "may train the audited model")
        if s.class_label is None:
            raise ValueError(f"sample {s.id} has no class label")
        if not 0 <= s.class_label < model.n_classes:
            raise ValueError(f"sample {s.id} label {s.class_label} out of range")

    config = config or nn.TrainConfig(learning_rate=0.05, epochs=12, batch_size=64)
    x = np.stack([s.image for s in member_samples]).astype(np.float32)
    labels = np.array([s.class_label for s in member_samples], dtype=np.int64)

    metrics = nn.fit(model.network, x, labels, config, nn.softmax_cross_entropy,
                     epoch_metric=lambda net: _train_accuracy(net, x, labels))
    model.trained = True
    return metrics


def infer_with_taps(model: AuditedModel, image: np.ndarray, taps: TapConfig,
                    sample_id: str = "") -> tuple[ModelOutcome, AadRecord]:
    """Eval-mode forward pass returning the embedding and the requested taps.

    Tap tensors are the exact forward-cache activations; reading them does not
    perturb the outcome.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.shape != model.input_shape:
        raise ValueError(f"expected image of shape {model.input_shape}, got {image.shape}")
    lo, hi = float(image.min(initial=0.0)), float(image.max(initial=0.0))
    if lo < -1e-6 or hi > 1 + 1e-6:
        raise ValueError(f"image values must lie in [0, 1], got [{lo:.3g}, {hi:.3g}]")
    for name in taps.taps:
        if name not in model.tap_layers:
            raise ValueError(f"unknown tap name: {name}")
    if not model.trained:
        logger.warning("auditing against an untrained model; flagging the record")

    mode = model.network.mode
    model.network.eval()
    try:
        _, cache = nn.forward(model.network, image[None])
    finally:
        model.network.set_mode(mode)

    embedding = cache.outputs[model.tap_layers[OUTCOME_TAP]][0].copy()
    tap_tensors = {
        name: cache.outputs[model.tap_layers[name]][0].copy()
        for name in sorted(taps.taps) if name != OUTCOME_TAP
    }
    record = AadRecord(
        sample_id=sample_id,
        membership=None,
        taps=tap_tensors,
        outcome=embedding if OUTCOME_TAP in taps.taps else None,
        model_untrained=not model.trained,
    )
    return ModelOutcome(embedding), record
