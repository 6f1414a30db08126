"""Member/external datasets: synthetic generation, image ingestion, split planning.

Member samples are the only ones ever used to train the audited model; the
partition tag is assigned at generation/ingestion time and never recomputed.
Everything here is bit-deterministic under a fixed seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .nn.rng import DATA, SPLIT, stream

logger = logging.getLogger(__name__)


class Membership(Enum):
    MEMBER = "member"
    EXTERNAL = "external"


@dataclass
class Sample:
    """One image with its (immutable) partition tag."""

    id: str
    image: np.ndarray  # (C, H, W) float32 in [0, 1]
    partition: Membership
    source_dataset: str
    class_label: int | None = None

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.image, dtype="<f4").tobytes()).hexdigest()


@dataclass
class DatasetPartition:
    """The member set D and the external set E, id-disjoint by construction."""

    members: list[Sample]
    externals: list[Sample]

    def __post_init__(self):
        member_ids = {s.id for s in self.members}
        external_ids = {s.id for s in self.externals}
        overlap = member_ids & external_ids
        if overlap:
            raise ValueError(f"member/external id overlap: {sorted(overlap)[:5]}")
        if len(member_ids) != len(self.members) or len(external_ids) != len(self.externals):
            raise ValueError("duplicate sample ids within a partition side")
        for s in self.members:
            if s.partition is not Membership.MEMBER:
                raise ValueError(f"sample {s.id} in member set tagged {s.partition}")
        for s in self.externals:
            if s.partition is not Membership.EXTERNAL:
                raise ValueError(f"sample {s.id} in external set tagged {s.partition}")
        self._by_id = {s.id: s for s in self.members}
        self._by_id.update({s.id: s for s in self.externals})

    def __getitem__(self, sample_id: str) -> Sample:
        return self._by_id[sample_id]

    @property
    def all_samples(self) -> list[Sample]:
        return self.members + self.externals

    def digest(self) -> str:
        lines = sorted(f"{s.id}:{s.digest()}" for s in self.all_samples)
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()


@dataclass(frozen=True)
class SyntheticDataConfig:
    """Procedural class-structured images; externals come from a shifted generator.

    `member_external_generator_offset` controls how far the external
    generator's texture parameters sit from the member generator's. Offset 0
    makes D and E identically distributed (useful as a no-signal control) and
    logs a warning, since any audit accuracy above chance would then indicate
    pipeline leakage rather than membership signal.
    """

    n_classes: int = 4
    samples_per_class: int = 1000
    image_size: int = 32
    channels: int = 1
    n_external: int = 4000
    base_frequency: float = 2.0
    frequency_step: float = 1.0
    noise_sigma: float = 0.08
    blob_amplitude: float = 0.5
    member_external_generator_offset: float = 1.0
    seed: int = 0


# Parameter shift applied per unit of generator offset.
_OFFSET_ORIENTATION = 0.12  # radians
_OFFSET_FREQUENCY = 0.35
_OFFSET_BLOB_ANGLE = 0.25

# External heterogeneity: the paper-style external pool is not one database,
# so E is drawn from two differently-shifted generator variants.
_EXTERNAL_SOURCES = (("external_a", 1.0), ("external_b", 1.5))


def _synth_image(config: SyntheticDataConfig, klass: int, offset: float,
                 rng: np.random.Generator) -> np.ndarray:
    size = config.image_size
    orientation = (klass * math.pi / config.n_classes
                   + offset * _OFFSET_ORIENTATION + rng.normal(0, 0.04))
    frequency = (config.base_frequency + klass * config.frequency_step
                 + offset * _OFFSET_FREQUENCY + rng.normal(0, 0.05))
    phase = rng.uniform(0, 2 * math.pi)
    blob_angle = (2 * math.pi * klass / config.n_classes
                  + offset * _OFFSET_BLOB_ANGLE + rng.normal(0, 0.10))

    u, v = np.meshgrid(np.arange(size) / size, np.arange(size) / size, indexing="ij")
    axis = u * math.cos(orientation) + v * math.sin(orientation)
    cy = 0.5 + 0.28 * math.cos(blob_angle)
    cx = 0.5 + 0.28 * math.sin(blob_angle)
    blob = np.exp(-((u - cy) ** 2 + (v - cx) ** 2) / (2 * 0.12**2))

    channels = []
    for ch in range(config.channels):
        carrier = np.sin(2 * math.pi * frequency * axis + phase + 0.5 * ch)
        img = 0.5 + 0.35 * carrier + config.blob_amplitude * blob
        img += rng.normal(0, config.noise_sigma, size=(size, size))
        channels.append(img)
    return np.clip(np.stack(channels), 0.0, 1.0).astype(np.float32)


def generate_synthetic_dataset(config: SyntheticDataConfig) -> DatasetPartition:
    """Build D and E per the config; same config always yields identical pixels."""
    if config.n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {config.n_classes}")
    if config.samples_per_class < 100:
        raise ValueError(f"need at least 100 samples per class, got {config.samples_per_class}")
    if config.member_external_generator_offset == 0.0:
        logger.warning(
            "generator offset is 0: D and E are identically distributed, so any "
            "membership signal may be confounded with a distribution shortcut")

    members = []
    for klass in range(config.n_classes):
        for i in range(config.samples_per_class):
            idx = klass * config.samples_per_class + i
            rng = stream(config.seed, DATA, 0, idx)
            members.append(Sample(
                id=f"member-{idx:05d}",
                image=_synth_image(config, klass, 0.0, rng),
                partition=Membership.MEMBER,
                source_dataset="synthetic_member",
                class_label=klass,
            ))

    externals = []
    n_sources = len(_EXTERNAL_SOURCES)
    for src_idx, (source, scale) in enumerate(_EXTERNAL_SOURCES):
        count = config.n_external // n_sources + (1 if src_idx < config.n_external % n_sources else 0)
        offset = config.member_external_generator_offset * scale
        for i in range(count):
            rng = stream(config.seed, DATA, 1 + src_idx, i)
            latent_class = i % config.n_classes  # balanced latent mixture, never stored
            externals.append(Sample(
                id=f"{source}-{i:05d}",
                image=_synth_image(config, latent_class, offset, rng),
                partition=Membership.EXTERNAL,
                source_dataset=source,
            ))
    return DatasetPartition(members, externals)


@dataclass(frozen=True)
class PreprocessSpec:
    size: int = 32
    channels: int = 1  # 1 = grayscale, 3 = RGB

    def apply(self, img: Image.Image) -> np.ndarray:
        img = img.convert("L" if self.channels == 1 else "RGB")
        img = img.resize((self.size, self.size), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
        if self.channels == 1:
            return arr[None]
        return arr.transpose(2, 0, 1)


def ingest_image_dir(path, partition: Membership, preprocess: PreprocessSpec | None = None,
                     source_dataset: str | None = None) -> list[Sample]:
    """Load a directory of PNG/PGM images as uniformly-tagged samples.

    Ids are the POSIX-style relative paths, so re-ingesting the same tree is
    reproducible. Unreadable files are logged and skipped; an image-free
    directory is an error.
    """
    preprocess = preprocess or PreprocessSpec()
    root = Path(path)
    if not root.is_dir():
        raise ValueError(f"not a directory: {root}")
    files = sorted(p for p in root.rglob("*")
                   if p.suffix.lower() in (".png", ".pgm") and p.is_file())
    if not files:
        raise ValueError(f"no PNG/PGM images found under {root}")
    source = source_dataset if source_dataset is not None else root.name

    samples = []
    for p in files:
        try:
            with Image.open(p) as img:
                arr = preprocess.apply(img)
        except Exception as exc:  # noqa: BLE001 - decoding failures vary by file
            logger.warning("skipping unreadable image %s: %s", p, exc)
            continue
        samples.append(Sample(
            id=p.relative_to(root).as_posix(),
            image=arr,
            partition=partition,
            source_dataset=source,
        ))
    if not samples:
        raise ValueError(f"no readable images under {root}")
    return samples


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint, 50/50-balanced id sets for training and testing the audit model.

    Member ids on both sides come from the audited model's training set, so a
    member in `mint_test` was seen by the audited model but never by the
    audit classifier.
    """

    train_member_ids: tuple[str, ...]
    train_external_ids: tuple[str, ...]
    test_member_ids: tuple[str, ...]
    test_external_ids: tuple[str, ...]

    def __post_init__(self):
        train = set(self.train_member_ids) | set(self.train_external_ids)
        test = set(self.test_member_ids) | set(self.test_external_ids)
        if train & test:
            raise ValueError(f"train/test overlap: {sorted(train & test)[:5]}")
        if abs(len(self.train_member_ids) - len(self.train_external_ids)) > 1:
            raise ValueError("train split unbalanced beyond ±1")
        if abs(len(self.test_member_ids) - len(self.test_external_ids)) > 1:
            raise ValueError("test split unbalanced beyond ±1")

    @property
    def mint_train(self) -> tuple[str, ...]:
        return self.train_member_ids + self.train_external_ids

    @property
    def mint_test(self) -> tuple[str, ...]:
        return self.test_member_ids + self.test_external_ids

    @property
    def counts(self) -> dict[str, int]:
        return {
            "train_member": len(self.train_member_ids),
            "train_external": len(self.train_external_ids),
            "test_member": len(self.test_member_ids),
            "test_external": len(self.test_external_ids),
        }


def plan_split(partition: DatasetPartition, n_mint_train: int, n_mint_test: int,
               seed: int) -> SplitPlan:
    """Draw disjoint balanced train/test id sets, deterministically under `seed`.

    Assumes the audited model was trained on the full member side of
    `partition` (the generation pipeline guarantees this), so every member id
    is a legitimate "seen by M" test subject.
    """
    need_m = math.ceil(n_mint_train / 2) + math.ceil(n_mint_test / 2)
    need_e = n_mint_train // 2 + n_mint_test // 2
    if need_m > len(partition.members):
        raise ValueError(f"need {need_m} member samples, have {len(partition.members)}")
    if need_e > len(partition.externals):
        raise ValueError(f"need {need_e} external samples, have {len(partition.externals)}")

    member_ids = [s.id for s in partition.members]
    external_ids = [s.id for s in partition.externals]
    m_order = stream(seed, SPLIT, 0).permutation(len(member_ids))
    e_order = stream(seed, SPLIT, 1).permutation(len(external_ids))
    m_shuffled = [member_ids[i] for i in m_order]
    e_shuffled = [external_ids[i] for i in e_order]

    mtr, etr = math.ceil(n_mint_train / 2), n_mint_train // 2
    mte, ete = math.ceil(n_mint_test / 2), n_mint_test // 2
    return SplitPlan(
        train_member_ids=tuple(m_shuffled[:mtr]),
        train_external_ids=tuple(e_shuffled[:etr]),
        test_member_ids=tuple(m_shuffled[mtr:mtr + mte]),
        test_external_ids=tuple(e_shuffled[etr:etr + ete]),
    )


def save_dataset(partition: DatasetPartition, out_dir,
                 config: SyntheticDataConfig | None = None) -> str:
    """Write manifest.json + images.npy; returns the dataset digest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = partition.all_samples
    manifest = {
        "generator_config": None if config is None else dataclasses.asdict(config),
        "image_shape": list(samples[0].image.shape) if samples else [],
        "samples": [
            {
                "id": s.id,
                "partition": s.partition.value,
                "source_dataset": s.source_dataset,
                "class_label": s.class_label,
                "digest": s.digest(),
            }
            for s in samples
        ],
        "dataset_digest": partition.digest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    stack = np.stack([s.image for s in samples]).astype("<f4") if samples else np.zeros((0,), "<f4")
    np.save(out / "images.npy", stack)
    return manifest["dataset_digest"]


def load_dataset(in_dir) -> DatasetPartition:
    """Read a saved dataset, verifying the recorded digests."""
    root = Path(in_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    images = np.load(root / "images.npy")
    entries = manifest["samples"]
    if len(images) != len(entries):
        raise ValueError(f"manifest lists {len(entries)} samples, images.npy has {len(images)}")

    members, externals = [], []
    for arr, meta in zip(images, entries):
        s = Sample(
            id=meta["id"],
            image=np.ascontiguousarray(arr, dtype=np.float32),
            partition=Membership(meta["partition"]),
            source_dataset=meta["source_dataset"],
            class_label=meta["class_label"],
        )
        if s.digest() != meta["digest"]:
            raise ValueError(f"content digest mismatch for sample {s.id}")
        (members if s.partition is Membership.MEMBER else externals).append(s)
    partition = DatasetPartition(members, externals)
    if partition.digest() != manifest["dataset_digest"]:
        raise ValueError("dataset digest mismatch")
    return partition


def load_dataset_config(in_dir) -> SyntheticDataConfig | None:
    """The generator config a saved dataset was produced from, if recorded."""
    manifest = json.loads((Path(in_dir) / "manifest.json").read_text())
    raw = manifest.get("generator_config")
    return None if raw is None else SyntheticDataConfig(**raw)
