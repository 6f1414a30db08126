"""Registry of auditable models and their trained audit classifiers.

On disk a registry is a directory with `registry.json` plus checkpoint pairs:
each model or classifier is a `<base>.nn` network checkpoint and a `<base>.json`
sidecar manifest. Everything is validated at load time; a service never starts
on a registry whose classifier shapes do not match its model taps.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import nn
from .aad import AuditableDataKind, full_maps, vectorize_max
from .audited import OUTCOME_TAP, AuditedModel, TapConfig, infer_with_taps
from .classifiers import (
    CnnMintSpec,
    MintClassifier,
    VanillaMintSpec,
    predict,
)
from .data import PreprocessSpec

logger = logging.getLogger(__name__)

DISCLAIMER = ("Scores are statistical membership evidence derived from model "
              "internals, not proof that an image was or was not part of the "
              "training data.")


def save_audited_model(model: AuditedModel, base_path) -> None:
    base = Path(base_path)
    nn.save_network(model.network, base.with_suffix(".nn"))
    manifest = {
        "architecture_id": model.architecture_id,
        "embedding_dim": model.embedding_dim,
        "n_classes": model.n_classes,
        "channels_per_block": list(model.channels_per_block),
        "taps": dict(model.tap_layers),
        "preprocessing": {"size": model.input_shape[1], "channels": model.input_shape[0]},
        "trained": model.trained,
    }
    base.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_audited_model(base_path) -> AuditedModel:
    base = Path(base_path)
    manifest = json.loads(base.with_suffix(".json").read_text())
    network = nn.load_network(base.with_suffix(".nn"))
    return AuditedModel(
        network=network,
        architecture_id=manifest["architecture_id"],
        embedding_dim=manifest["embedding_dim"],
        n_classes=manifest["n_classes"],
        channels_per_block=tuple(manifest["channels_per_block"]),
        tap_layers={k: int(v) for k, v in manifest["taps"].items()},
        trained=manifest["trained"],
    )


def save_classifier(classifier: MintClassifier, base_path) -> None:
    if not classifier.trained:
        raise ValueError("refusing to save an untrained classifier")
    base = Path(base_path)
    nn.save_network(classifier.network, base.with_suffix(".nn"))
    scale = None
    if classifier.feature_scale is not None:
        mu, sd = classifier.feature_scale
        scale = {"mean": mu.tolist(), "std": sd.tolist(), "shape": list(mu.shape)}
    manifest = {
        "spec_kind": classifier.architecture,
        "feature_kind": classifier.feature_kind.tag,
        "expected_shape": list(classifier.expected_shape),
        "threshold": classifier.threshold,
        "train_fingerprint": classifier.train_fingerprint,
        "dropout_rate": classifier.spec.dropout_rate,
        "l1_coefficient": classifier.spec.l1_coefficient,
        "feature_scale": scale,
    }
    base.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_classifier(base_path) -> MintClassifier:
    base = Path(base_path)
    manifest = json.loads(base.with_suffix(".json").read_text())
    network = nn.load_network(base.with_suffix(".nn"))
    shape = tuple(manifest["expected_shape"])
    if manifest["spec_kind"] == "vanilla":
        spec = VanillaMintSpec(shape[0], dropout_rate=manifest["dropout_rate"],
                               l1_coefficient=manifest["l1_coefficient"])
    else:
        spec = CnnMintSpec(shape, dropout_rate=manifest["dropout_rate"],
                           l1_coefficient=manifest["l1_coefficient"])
    scale = None
    if manifest["feature_scale"] is not None:
        s = manifest["feature_scale"]
        scale = (np.asarray(s["mean"], dtype=np.float32).reshape(s["shape"]),
                 np.asarray(s["std"], dtype=np.float32).reshape(s["shape"]))
    return MintClassifier(
        spec=spec,
        network=network,
        threshold=manifest["threshold"],
        feature_kind=AuditableDataKind.from_tag(manifest["feature_kind"]),
        train_fingerprint=manifest["train_fingerprint"],
        feature_scale=scale,
    )


@dataclass
class RegistryEntry:
    model_id: str
    model: AuditedModel
    classifiers: list[MintClassifier]

    @property
    def preprocess(self) -> PreprocessSpec:
        return PreprocessSpec(size=self.model.input_shape[1],
                              channels=self.model.input_shape[0])

    def required_taps(self) -> TapConfig:
        names = set()
        for clf in self.classifiers:
            kind = clf.feature_kind
            if kind.variant == "conv_layer":
                names.add(f"conv_block_{kind.block}")
            elif kind.variant == "all_conv_layers":
                names.update(f"conv_block_{k}" for k in range(1, 5))
            else:
                names.add(OUTCOME_TAP)
        return TapConfig(frozenset(names))


def _expected_shape_for(model: AuditedModel, kind: AuditableDataKind,
                        architecture: str) -> tuple[int, ...]:
    if kind.variant == "conv_layer":
        tap_shape = model.tap_shape(f"conv_block_{kind.block}")
        return tap_shape if architecture == "cnn" else (tap_shape[0],)
    if kind.variant == "all_conv_layers":
        return (sum(model.channels_per_block),)
    return (model.embedding_dim,)


class AuditRegistry:
    """Validated, immutable-once-loaded set of auditable configurations."""

    def __init__(self, entries: list[RegistryEntry]):
        self.entries = entries
        self._validate()

    def _validate(self) -> None:
        if not self.entries:
            raise ValueError("registry has no models")
        seen = set()
        for entry in self.entries:
            if entry.model_id in seen:
                raise ValueError(f"duplicate model id {entry.model_id!r}")
            seen.add(entry.model_id)
            if not entry.model.trained:
                raise ValueError(f"model {entry.model_id!r} is untrained")
            if not entry.classifiers:
                raise ValueError(f"model {entry.model_id!r} has no classifiers")
            for clf in entry.classifiers:
                if not clf.trained:
                    raise ValueError(f"model {entry.model_id!r} carries an untrained classifier")
                expected = _expected_shape_for(entry.model, clf.feature_kind, clf.architecture)
                if tuple(clf.expected_shape) != expected:
                    raise ValueError(
                        f"model {entry.model_id!r} classifier {clf.feature_kind.tag}"
                        f"/{clf.architecture}: feature shape {clf.expected_shape} does not "
                        f"match the model's tap shape {expected}")

    @classmethod
    def load(cls, registry_dir) -> "AuditRegistry":
        root = Path(registry_dir)
        index_path = root / "registry.json"
        if not index_path.is_file():
            raise FileNotFoundError(f"no registry.json under {root}")
        index = json.loads(index_path.read_text())
        entries = []
        for item in index.get("models", []):
            model = load_audited_model(root / item["audited"])
            classifiers = [load_classifier(root / c["path"]) for c in item["classifiers"]]
            entries.append(RegistryEntry(item["model_id"], model, classifiers))
        return cls(entries)

    def model_ids(self) -> list[str]:
        return [e.model_id for e in self.entries]

    def configs(self) -> list[dict]:
        """One row per auditable (model, classifier) configuration."""
        rows = []
        for entry in self.entries:
            for clf in entry.classifiers:
                rows.append({
                    "model_id": entry.model_id,
                    "auditable_data": clf.feature_kind.tag,
                    "architecture": clf.architecture,
                    "input_spec": {
                        "channels": entry.model.input_shape[0],
                        "size": entry.model.input_shape[1],
                        "feature_shape": list(clf.expected_shape),
                    },
                })
        return rows


def init_registry_dir(registry_dir) -> Path:
    root = Path(registry_dir)
    root.mkdir(parents=True, exist_ok=True)
    index_path = root / "registry.json"
    if not index_path.exists():
        index_path.write_text(json.dumps({"models": []}, indent=1))
    return index_path


def register_classifier(registry_dir, model_id: str, audited_base: str,
                        classifier_base: str) -> None:
    """Add (or extend) a model entry in registry.json; paths are dir-relative."""
    index_path = init_registry_dir(registry_dir)
    index = json.loads(index_path.read_text())
    for item in index["models"]:
        if item["model_id"] == model_id:
            if item["audited"] != audited_base:
                raise ValueError(f"model {model_id!r} already registered with a "
                                 f"different checkpoint ({item['audited']})")
            item["classifiers"].append({"path": classifier_base})
            break
    else:
        index["models"].append({"model_id": model_id, "audited": audited_base,
                                "classifiers": [{"path": classifier_base}]})
    index_path.write_text(json.dumps(index, indent=1, sort_keys=True))


@dataclass
class PerConfigResult:
    model_id: str
    auditable_data: str
    architecture: str
    score: float | None = None
    decision: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        d = {"model_id": self.model_id, "auditable_data": self.auditable_data,
             "architecture": self.architecture}
        if self.error is None:
            d["score"] = self.score
            d["decision"] = self.decision
        else:
            d["error"] = self.error
        return d


@dataclass
class MembershipReport:
    sample_id: str
    per_config: list[PerConfigResult]
    aggregate_likelihood: float
    disclaimer: str = DISCLAIMER

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "per_config": [c.to_dict() for c in self.per_config],
            "aggregate_likelihood": self.aggregate_likelihood,
            "disclaimer": self.disclaimer,
        }


class AuditError(RuntimeError):
    """No configuration could score the sample."""


def _feature_for(record, kind: AuditableDataKind, architecture: str):
    if architecture == "cnn":
        return full_maps(record, kind)
    return vectorize_max(record, kind)


def audit_sample(registry: AuditRegistry, image, sample_id: str = "",
                 model_filter: str | None = None) -> MembershipReport:
    """Score one image against every registered configuration.

    `image` is a PIL image (preprocessed per model) or an already-preprocessed
    C x H x W array in [0, 1]. Deterministic for a fixed (registry, image).
    """
    entries = [e for e in registry.entries
               if model_filter is None or e.model_id == model_filter]
    if not entries:
        raise KeyError(f"unknown model id {model_filter!r}")

    if not sample_id:
        if isinstance(image, Image.Image):
            digest_src = image.tobytes()
        else:
            digest_src = np.ascontiguousarray(image, dtype="<f4").tobytes()
        sample_id = "sample-" + hashlib.sha256(digest_src).hexdigest()[:12]

    results: list[PerConfigResult] = []
    for entry in entries:
        try:
            if isinstance(image, Image.Image):
                arr = entry.preprocess.apply(image)
            else:
                arr = np.asarray(image, dtype=np.float32)
            _, record = infer_with_taps(entry.model, arr, entry.required_taps(),
                                        sample_id=sample_id)
        except Exception as exc:  # noqa: BLE001 - per-model failures must not kill the report
            logger.warning("model %s failed on sample %s: %s", entry.model_id, sample_id, exc)
            for clf in entry.classifiers:
                results.append(PerConfigResult(entry.model_id, clf.feature_kind.tag,
                                               clf.architecture, error=str(exc)))
            continue
        for clf in entry.classifiers:
            try:
                score = predict(clf, _feature_for(record, clf.feature_kind, clf.architecture))
                results.append(PerConfigResult(entry.model_id, clf.feature_kind.tag,
                                               clf.architecture, score=score.score,
                                               decision=score.decision.value))
            except Exception as exc:  # noqa: BLE001
                logger.warning("config %s/%s failed on sample %s: %s",
                               entry.model_id, clf.feature_kind.tag, sample_id, exc)
                results.append(PerConfigResult(entry.model_id, clf.feature_kind.tag,
                                               clf.architecture, error=str(exc)))

    scored = [r.score for r in results if r.error is None]
    if not scored:
        raise AuditError(f"all {len(results)} configurations failed for sample {sample_id}")
    return MembershipReport(
        sample_id=sample_id,
        per_config=results,
        aggregate_likelihood=float(np.mean(scored)),
    )
