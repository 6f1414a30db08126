"""Turning Auxiliary Auditable Data into audit-classifier inputs.

Two feature forms exist: max-per-map vectors (one value per activation map,
usable alone or concatenated across all four blocks, or the raw output
embedding) and full activation maps (one tap, never flattened). Full maps of
different blocks have different resolutions, so only the vector form supports
cross-block concatenation.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from . import nn
from .audited import OUTCOME_TAP, AadRecord, AuditedModel, TapConfig
from .data import Membership, Sample

logger = logging.getLogger(__name__)

CONV_LAYER = "conv_layer"
MODEL_OUTCOME = "model_outcome"
ALL_CONV_LAYERS = "all_conv_layers"


@dataclass(frozen=True)
class AuditableDataKind:
    """What part of the audited model a feature was derived from."""

    variant: str
    block: int | None = None

    def __post_init__(self):
        if self.variant == CONV_LAYER:
            if self.block is None or not 1 <= self.block <= 4:
                raise ValueError(f"conv layer block must be 1..4, got {self.block}")
        elif self.variant in (MODEL_OUTCOME, ALL_CONV_LAYERS):
            if self.block is not None:
                raise ValueError(f"{self.variant} takes no block index")
        else:
            raise ValueError(f"unknown auditable-data variant: {self.variant!r}")

    @classmethod
    def conv_layer(cls, block: int) -> "AuditableDataKind":
        return cls(CONV_LAYER, block)

    @classmethod
    def model_outcome(cls) -> "AuditableDataKind":
        return cls(MODEL_OUTCOME)

    @classmethod
    def all_conv_layers(cls) -> "AuditableDataKind":
        return cls(ALL_CONV_LAYERS)

    @classmethod
    def from_tag(cls, tag: str) -> "AuditableDataKind":
        if tag.startswith("conv_layer_"):
            return cls(CONV_LAYER, int(tag.rsplit("_", 1)[1]))
        return cls(tag)

    @property
    def tag(self) -> str:
        return f"conv_layer_{self.block}" if self.variant == CONV_LAYER else self.variant

    @property
    def label(self) -> str:
        if self.variant == CONV_LAYER:
            return f"Conv Layer #{self.block}"
        return "Model Outcome" if self.variant == MODEL_OUTCOME else "All Conv Layers"


VANILLA_KINDS = tuple(
    [AuditableDataKind.conv_layer(k) for k in range(1, 5)]
    + [AuditableDataKind.model_outcome(), AuditableDataKind.all_conv_layers()]
)
CNN_KINDS = tuple(AuditableDataKind.conv_layer(k) for k in range(1, 5))


@dataclass(frozen=True)
class FeatureVector:
    """Vector-form feature: per-map maxima or the raw embedding."""

    values: np.ndarray
    kind: AuditableDataKind

    @property
    def length(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class FeatureMaps:
    """Map-form feature: one tap's full activation tensor, exact values."""

    maps: np.ndarray  # (C, H, W)
    kind: AuditableDataKind

    def __post_init__(self):
        if self.kind.variant != CONV_LAYER:
            raise ValueError("map-form features exist only for single conv layers")


def _tap_or_raise(record: AadRecord, block: int) -> np.ndarray:
    name = f"conv_block_{block}"
    if name not in record.taps:
        raise ValueError(f"record {record.sample_id!r} is missing tap {name}")
    return record.taps[name]


def vectorize_max(record: AadRecord, kind: AuditableDataKind) -> FeatureVector:
    """Max value of each activation map, in channel order; blocks concatenate 1->4."""
    if kind.variant == CONV_LAYER:
        tap = _tap_or_raise(record, kind.block)
        values = tap.reshape(tap.shape[0], -1).max(axis=1)
    elif kind.variant == ALL_CONV_LAYERS:
        parts = [_tap_or_raise(record, k) for k in range(1, 5)]
        values = np.concatenate([t.reshape(t.shape[0], -1).max(axis=1) for t in parts])
    else:  # model outcome: embedding copied verbatim
        if record.outcome is None:
            raise ValueError(f"record {record.sample_id!r} is missing the model outcome")
        values = record.outcome.copy()
    return FeatureVector(values.astype(np.float32, copy=False), kind)


def full_maps(record: AadRecord, layer: AuditableDataKind) -> FeatureMaps:
    """The untouched activation tensor of one conv tap."""
    if layer.variant == ALL_CONV_LAYERS:
        raise ValueError("concatenation impractical for map-form features: "
                         "tap resolutions differ across blocks")
    if layer.variant == MODEL_OUTCOME:
        raise ValueError("no spatial activation maps for outcome")
    tap = _tap_or_raise(record, layer.block)
    return FeatureMaps(tap.copy(), layer)


def batch_extract(model: AuditedModel, samples: list[Sample], taps: TapConfig,
                  batch_size: int = 64, progress_every: int = 1000) -> list[AadRecord]:
    """One AadRecord per sample, order-stable, membership copied from partition tags.

    Samples whose image is malformed are logged by id and skipped; the final
    count line makes any skip visible.
    """
    if not model.trained:
        logger.debug("extracting from an untrained model; records will be flagged")
    mode = model.network.mode
    model.network.eval()
    records: list[AadRecord] = []
    skipped = 0
    try:
        valid: list[Sample] = []
        for s in samples:
            img = np.asarray(s.image)
            if img.shape != model.input_shape or not np.all(np.isfinite(img)):
                logger.warning("skipping unreadable sample %s", s.id)
                skipped += 1
                continue
            valid.append(s)

        tap_names = sorted(n for n in taps.taps if n != OUTCOME_TAP)
        want_outcome = OUTCOME_TAP in taps.taps
        for start in range(0, len(valid), batch_size):
            chunk = valid[start:start + batch_size]
            x = np.stack([s.image for s in chunk]).astype(np.float32)
            _, cache = nn.forward(model.network, x)
            for j, s in enumerate(chunk):
                records.append(AadRecord(
                    sample_id=s.id,
                    membership=s.partition,
                    taps={n: cache.outputs[model.tap_layers[n]][j].copy() for n in tap_names},
                    outcome=(cache.outputs[model.tap_layers[OUTCOME_TAP]][j].copy()
                             if want_outcome else None),
                    source_dataset=s.source_dataset,
                    model_untrained=not model.trained,
                ))
            if progress_every and len(records) % progress_every < batch_size and records:
                logger.info("extracted %d/%d records", len(records), len(valid))
    finally:
        model.network.set_mode(mode)
    logger.info("extraction finished: %d records, %d skipped", len(records), skipped)
    return records


@dataclass
class FeatureSet:
    """A homogeneous labeled feature matrix ready for audit-classifier training."""

    kind: AuditableDataKind
    form: str  # "vector" | "maps"
    ids: tuple[str, ...]
    x: np.ndarray           # (N, F) for vectors, (N, C, H, W) for maps
    labels: np.ndarray      # 1.0 = Member, 0.0 = External
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        if self.form not in ("vector", "maps"):
            raise ValueError(f"unknown feature form {self.form!r}")
        if len(self.ids) != len(self.x) or len(self.labels) != len(self.x):
            raise ValueError("ids/x/labels lengths disagree")
        if not self.sources:
            self.sources = ("",) * len(self.ids)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x, dtype="<f4").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<f4").tobytes())
        return h.hexdigest()

    def subset(self, ids) -> "FeatureSet":
        index = {sid: i for i, sid in enumerate(self.ids)}
        rows = [index[sid] for sid in ids]
        return FeatureSet(self.kind, self.form, tuple(ids), self.x[rows],
                          self.labels[rows], tuple(self.sources[i] for i in rows))


def feature_set_from_records(records: list[AadRecord], kind: AuditableDataKind,
                             form: str = "vector") -> FeatureSet:
    """Stack one feature per record; every record must carry a membership tag."""
    if not records:
        raise ValueError("no records given")
    rows, labels = [], []
    for r in records:
        if r.membership is None:
            raise ValueError(f"record {r.sample_id!r} has no membership tag")
        if form == "vector":
            rows.append(vectorize_max(r, kind).values)
        else:
            rows.append(full_maps(r, kind).maps)
        labels.append(1.0 if r.membership is Membership.MEMBER else 0.0)
    return FeatureSet(
        kind=kind,
        form=form,
        ids=tuple(r.sample_id for r in records),
        x=np.stack(rows).astype(np.float32),
        labels=np.array(labels, dtype=np.float32),
        sources=tuple(r.source_dataset for r in records),
    )
