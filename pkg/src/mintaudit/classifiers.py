"""The audit classifiers: a small MLP over vector features and a CNN over maps.

Both end in a single sigmoid unit producing a membership score in [0, 1];
decisions use a fixed threshold with a >= tie-break toward Member.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import nn
from .aad import AuditableDataKind, FeatureMaps, FeatureSet, FeatureVector
from .data import Membership
from .nn.network import TrainMetrics

VANILLA = "vanilla"
CNN = "cnn"
ARCHITECTURES = (VANILLA, CNN)


@dataclass(frozen=True)
class VanillaMintSpec:
    """MLP head: input -> 64 -> 1, dropout between the hidden and output layer."""

    input_length: int
    hidden_units: int = 64
    output_units: int = 1
    dropout_rate: float = 0.3
    l1_coefficient: float = 0.1

    def __post_init__(self):
        if self.input_length < 1:
            raise ValueError(f"input length must be positive, got {self.input_length}")

    @property
    def parameter_count(self) -> int:
        f, h, o = self.input_length, self.hidden_units, self.output_units
        return (f * h + h) + (h * o + o)

    @property
    def expected_shape(self) -> tuple[int, ...]:
        return (self.input_length,)


@dataclass(frozen=True)
class CnnMintSpec:
    """Conv head: 64 then 128 filters, two pools, then FC layers sized to the
    flattened convolution output (flatten -> 64 -> 1)."""

    input_map_shape: tuple[int, int, int]
    conv1_filters: int = 64
    conv2_filters: int = 128
    dropout_rate: float = 0.3
    l1_coefficient: float = 0.1

    def __post_init__(self):
        c, h, w = self.input_map_shape
        if c < 1:
            raise ValueError(f"input maps need at least one channel, got {c}")
        if h < 4 or w < 4 or h % 4 or w % 4:
            raise ValueError(
                f"input maps of {h}x{w} cannot survive two 2x2 pools; "
                "use the Vanilla model for that tap")

    @property
    def flatten_length(self) -> int:
        _, h, w = self.input_map_shape
        return self.conv2_filters * (h // 4) * (w // 4)

    @property
    def parameter_count(self) -> int:
        c = self.input_map_shape[0]
        conv1 = self.conv1_filters * c * 9 + self.conv1_filters
        conv2 = self.conv2_filters * self.conv1_filters * 9 + self.conv2_filters
        fc1 = self.flatten_length * 64 + 64
        fc2 = 64 * 1 + 1
        return conv1 + conv2 + fc1 + fc2

    @property
    def expected_shape(self) -> tuple[int, ...]:
        return self.input_map_shape


@dataclass(frozen=True)
class MembershipScore:
    score: float
    decision: Membership

    @classmethod
    def from_score(cls, score: float, threshold: float) -> "MembershipScore":
        decision = Membership.MEMBER if score >= threshold else Membership.EXTERNAL
        return cls(float(score), decision)


@dataclass
class MintClassifier:
    spec: VanillaMintSpec | CnnMintSpec
    network: nn.Network
    threshold: float = 0.5
    feature_kind: AuditableDataKind | None = None
    train_fingerprint: str | None = None
    # Per-feature affine standardizer fitted on the *training* features only
    # (never test statistics); applied identically at predict time.
    feature_scale: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def architecture(self) -> str:
        return VANILLA if isinstance(self.spec, VanillaMintSpec) else CNN

    @property
    def trained(self) -> bool:
        return self.train_fingerprint is not None

    @property
    def expected_shape(self) -> tuple[int, ...]:
        return self.spec.expected_shape

    @property
    def expected_form(self) -> str:
        return "vector" if isinstance(self.spec, VanillaMintSpec) else "maps"

    def _standardized(self, x: np.ndarray) -> np.ndarray:
        if self.feature_scale is None:
            return x
        mu, sd = self.feature_scale
        return ((x - mu) / sd).astype(np.float32)


def build_vanilla(input_length: int, seed: int = 0) -> MintClassifier:
    spec = VanillaMintSpec(int(input_length))
    network = nn.Network.build(
        [nn.Dense(spec.input_length, spec.hidden_units), nn.ReLU(),
         nn.Dropout(spec.dropout_rate),
         nn.Dense(spec.hidden_units, spec.output_units), nn.Sigmoid()],
        (spec.input_length,), seed=seed)
    return MintClassifier(spec, network)


def build_cnn(input_map_shape, seed: int = 0) -> MintClassifier:
    spec = CnnMintSpec(tuple(int(v) for v in input_map_shape))
    c = spec.input_map_shape[0]
    network = nn.Network.build(
        [nn.Conv2d(c, spec.conv1_filters), nn.ReLU(), nn.MaxPool2d(),
         nn.Conv2d(spec.conv1_filters, spec.conv2_filters), nn.ReLU(), nn.MaxPool2d(),
         nn.Flatten(),
         nn.Dense(spec.flatten_length, 64), nn.ReLU(), nn.Dropout(spec.dropout_rate),
         nn.Dense(64, 1), nn.Sigmoid()],
        spec.input_map_shape, seed=seed)
    return MintClassifier(spec, network)


def train_mint(classifier: MintClassifier, features: FeatureSet,
               config: nn.TrainConfig | None = None, standardize: bool = True) -> TrainMetrics:
    """BCE + L1 training on balanced member/external features.

    The default config applies the spec's L1 coefficient; a caller-supplied
    config is used verbatim. Raw activations span wildly uneven per-feature
    scales, which stalls plain SGD, so features are standardized by default
    with statistics of the training set only; the fitted scale becomes part
    of the classifier and is re-applied on every predict.
    """
    if features.form != classifier.expected_form:
        raise ValueError(f"classifier expects {classifier.expected_form}-form features, "
                         f"got {features.form}")
    got = features.x.shape[1:]
    if got != classifier.expected_shape:
        raise ValueError(f"expected features of shape {classifier.expected_shape}, got {got}")
    n_member = int((features.labels == 1.0).sum())
    n_external = int((features.labels == 0.0).sum())
    if n_member == 0 or n_external == 0:
        raise ValueError("training set must contain both Member and External samples")
    if abs(n_member - n_external) > 1:
        raise ValueError(f"training labels unbalanced beyond ±1: "
                         f"{n_member} member vs {n_external} external")

    if standardize:
        axes = (0,) if features.form == "vector" else (0, 2, 3)
        mu = features.x.mean(axis=axes, keepdims=True)[0]
        sd = features.x.std(axis=axes, keepdims=True)[0] + np.float32(1e-6)
        classifier.feature_scale = (mu.astype(np.float32), sd.astype(np.float32))
    else:
        classifier.feature_scale = None
    x = classifier._standardized(features.x)

    config = config or nn.TrainConfig(l1_coefficient=classifier.spec.l1_coefficient)
    y = features.labels[:, None]
    metrics = nn.fit(classifier.network, x, y, config, nn.bce_grad,
                     epoch_metric=lambda net: _accuracy(net, x, y, classifier.threshold))
    classifier.feature_kind = features.kind
    classifier.train_fingerprint = (
        f"{config.seed:x}-{hashlib.sha256(np.ascontiguousarray(features.x, '<f4').tobytes() + features.labels.tobytes()).hexdigest()[:12]}")
    classifier.network.eval()
    return metrics


def _accuracy(network: nn.Network, x: np.ndarray, y: np.ndarray, threshold: float,
              batch_size: int = 512) -> float:
    hits = 0
    for start in range(0, len(x), batch_size):
        out, _ = nn.forward(network, x[start:start + batch_size])
        hits += int(((out >= threshold) == (y[start:start + batch_size] == 1.0)).sum())
    return hits / len(x)


def predict(classifier: MintClassifier, features) -> MembershipScore:
    """Deterministic eval-mode membership score for one sample."""
    if not classifier.trained:
        raise ValueError("classifier is untrained; train_mint must run before predict")
    if isinstance(features, FeatureVector):
        values = features.values
        if classifier.feature_kind and features.kind != classifier.feature_kind:
            raise ValueError(f"classifier was trained on {classifier.feature_kind.tag}, "
                             f"got {features.kind.tag}")
    elif isinstance(features, FeatureMaps):
        values = features.maps
        if classifier.feature_kind and features.kind != classifier.feature_kind:
            raise ValueError(f"classifier was trained on {classifier.feature_kind.tag}, "
                             f"got {features.kind.tag}")
    else:
        values = np.asarray(features)
    if values.shape != classifier.expected_shape:
        raise ValueError(f"expected features of shape {classifier.expected_shape}, "
                         f"got {values.shape}")
    classifier.network.eval()
    x = classifier._standardized(np.asarray(values, dtype=np.float32)[None])
    out, _ = nn.forward(classifier.network, x)
    return MembershipScore.from_score(float(out[0, 0]), classifier.threshold)


def predict_scores(classifier: MintClassifier, x: np.ndarray,
                   batch_size: int = 512) -> np.ndarray:
    """Batched scores for evaluation runs (same network, eval mode)."""
    if not classifier.trained:
        raise ValueError("classifier is untrained; train_mint must run before predict")
    classifier.network.eval()
    x = classifier._standardized(np.asarray(x, dtype=np.float32))
    scores = []
    for start in range(0, len(x), batch_size):
        out, _ = nn.forward(classifier.network, x[start:start + batch_size])
        scores.append(out[:, 0])
    return np.concatenate(scores) if scores else np.zeros(0, np.float32)
