"""Experiment grid: auditable-data kind x train size x architecture -> accuracy.

Every cell trains a fresh audit classifier on a fresh balanced split and
evaluates it on one shared held-out test split, so cells are comparable
within a table. Controls (label shuffling, untrained model on offset-zero
data) certify that measured accuracy comes from membership signal rather
than pipeline leakage. All cell results are deterministic under the grid
seed.
"""

from __future__ import annotations

import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .aad import (
    VANILLA_KINDS,
    AuditableDataKind,
    FeatureSet,
    feature_set_from_records,
)
from .audited import ALL_TAPS, AuditedModel, build_toy_audited_model
from .classifiers import (
    CNN,
    VANILLA,
    MembershipScore,
    MintClassifier,
    build_cnn,
    build_vanilla,
    predict_scores,
    train_mint,
)
from .data import (
    DatasetPartition,
    Membership,
    SplitPlan,
    SyntheticDataConfig,
    generate_synthetic_dataset,
)
from .nn.rng import CELL, CONTROL, SPLIT, derive_seed, stream

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_SIZES = (250, 1000, 2000)
DEFAULT_TEST_SIZE = 1000

# Harness training defaults; chosen so the paper architectures actually train
# under plain SGD at desk scale (see README). Overridable per run.
VANILLA_CELL_CONFIG = nn.TrainConfig(learning_rate=0.05, epochs=30, batch_size=64,
                                     l1_coefficient=0.01, seed=0)
CNN_CELL_CONFIG = nn.TrainConfig(learning_rate=0.02, epochs=8, batch_size=32,
                                 l1_coefficient=0.01, seed=0)

# Published full-scale accuracies for the same table layout. These numbers
# come from an audit of a 100-layer face model trained on 17M images; they
# orient the reader and are NOT reproduction targets for the toy pipeline.
FULL_SCALE_REFERENCE = {
    VANILLA: {
        "columns": ("1K samples", "50K samples", "100K samples"),
        "rows": (
            ("Conv Layer #1", (0.62, 0.80, 0.80)),
            ("Conv Layer #2", (0.56, 0.67, 0.68)),
            ("Conv Layer #3", (0.56, 0.58, 0.59)),
            ("Conv Layer #4", (0.73, 0.76, 0.76)),
            ("Model Outcome", (0.67, 0.78, 0.78)),
            ("All Conv Layers", (0.76, 0.82, 0.84)),
        ),
        "best_row": "All Conv Layers",
    },
    CNN: {
        "columns": ("1K samples", "50K samples", "100K samples"),
        "rows": (
            ("Conv Layer #1", (0.88, 0.89, 0.89)),
            ("Conv Layer #2", (0.85, 0.86, 0.86)),
            ("Conv Layer #3", (0.68, 0.71, 0.75)),
            ("Conv Layer #4", (0.68, 0.70, 0.74)),
        ),
        "best_row": "Conv Layer #1",
    },
}


@dataclass(frozen=True)
class ExperimentGrid:
    kinds: tuple[AuditableDataKind, ...] = VANILLA_KINDS
    train_sizes: tuple[int, ...] = DEFAULT_TRAIN_SIZES
    architectures: tuple[str, ...] = (VANILLA,)
    repetitions: int = 3
    seed: int = 0

    def __post_init__(self):
        if not self.kinds or not self.train_sizes or not self.architectures:
            raise ValueError("grid axes must be nonempty")
        if any(a not in (VANILLA, CNN) for a in self.architectures):
            raise ValueError(f"unknown architecture in {self.architectures}")
        if any(s < 2 for s in self.train_sizes):
            raise ValueError("train sizes must be at least 2")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        for kind, arch in self.excluded():
            logger.warning("excluding %s x %s: map-form features exist only for "
                           "single conv layers", arch, kind.label)

    @staticmethod
    def is_legal(kind: AuditableDataKind, architecture: str) -> bool:
        # No CNN rows for the output vector or for cross-block concatenation.
        return architecture == VANILLA or kind.variant == "conv_layer"

    def cells(self) -> list[tuple[str, AuditableDataKind, int]]:
        return [(arch, kind, size)
                for arch in self.architectures
                for kind in self.kinds if self.is_legal(kind, arch)
                for size in self.train_sizes]

    def excluded(self) -> list[tuple[AuditableDataKind, str]]:
        return [(kind, arch) for arch in self.architectures
                for kind in self.kinds if not self.is_legal(kind, arch)]


@dataclass
class CellResult:
    architecture: str
    kind: AuditableDataKind
    train_size: int
    accuracies: tuple[float, ...] = ()
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def spread(self) -> float:
        if not self.accuracies:
            return float("nan")
        return float(np.max(np.abs(np.array(self.accuracies) - self.mean)))


@dataclass
class AccuracyTable:
    grid: ExperimentGrid
    cells: list[CellResult]
    test_size: int
    dataset_digest: str = ""
    model_architecture: str = ""
    metadata: dict = field(default_factory=dict)

    def cell(self, architecture: str, kind: AuditableDataKind, train_size: int) -> CellResult:
        for c in self.cells:
            if (c.architecture, c.kind, c.train_size) == (architecture, kind, train_size):
                return c
        raise KeyError(f"no cell {architecture}/{kind.tag}/{train_size}")

    def rows_for(self, architecture: str) -> list[AuditableDataKind]:
        return [k for k in self.grid.kinds if self.grid.is_legal(k, architecture)]


@dataclass
class ControlResult:
    """Sanity controls recorded alongside every accuracy table."""

    shuffled_label_accuracy: float | None = None
    shuffled_label_accuracies: tuple[float, ...] = ()
    untrained_model_accuracy: float | None = None


def compute_accuracy(scores: list[MembershipScore], labels: list[Membership]) -> float:
    """Fraction of threshold decisions matching the labels (balanced input)."""
    if not scores:
        raise ValueError("cannot compute accuracy of an empty score list")
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores vs {len(labels)} labels")
    n_member = sum(1 for l in labels if l is Membership.MEMBER)
    if abs(2 * n_member - len(labels)) > 1:
        raise ValueError("labels must be balanced within ±1 (SplitPlan contract)")
    hits = sum(1 for s, l in zip(scores, labels) if s.decision is l)
    return hits / len(scores)


class FeatureBank:
    """Per-kind feature matrices for a pool of samples, keyed by sample id."""

    def __init__(self, vectors: dict[str, FeatureSet], maps: dict[str, FeatureSet]):
        self.vectors = vectors
        self.maps = maps
        some = next(iter(vectors.values()), None) or next(iter(maps.values()), None)
        if some is None:
            raise ValueError("feature bank needs at least one feature kind")
        self.ids = some.ids
        self.membership = {
            sid: Membership.MEMBER if label == 1.0 else Membership.EXTERNAL
            for sid, label in zip(some.ids, some.labels)
        }

    def features_for(self, kind: AuditableDataKind, architecture: str) -> FeatureSet:
        table = self.vectors if architecture == VANILLA else self.maps
        if kind.tag not in table:
            raise KeyError(f"bank has no {'vector' if architecture == VANILLA else 'map'} "
                           f"features for {kind.tag}")
        return table[kind.tag]

    def member_ids(self) -> list[str]:
        return [sid for sid in self.ids if self.membership[sid] is Membership.MEMBER]

    def external_ids(self) -> list[str]:
        return [sid for sid in self.ids if self.membership[sid] is Membership.EXTERNAL]


def build_feature_bank(model: AuditedModel, partition: DatasetPartition,
                       grid: ExperimentGrid, batch_size: int = 256) -> FeatureBank:
    """Extract every needed feature kind for the whole partition, memory-lean."""
    from .aad import batch_extract  # local import to keep module load cheap

    vector_kinds = {k.tag: k for a in grid.architectures if a == VANILLA
                    for k in grid.kinds if grid.is_legal(k, a)}
    map_kinds = {k.tag: k for a in grid.architectures if a == CNN
                 for k in grid.kinds if grid.is_legal(k, a)}

    samples = partition.all_samples
    vec_chunks: dict[str, list[FeatureSet]] = {t: [] for t in vector_kinds}
    map_chunks: dict[str, list[FeatureSet]] = {t: [] for t in map_kinds}
    for start in range(0, len(samples), batch_size):
        records = batch_extract(model, samples[start:start + batch_size], ALL_TAPS,
                                batch_size=batch_size, progress_every=0)
        for tag, kind in vector_kinds.items():
            vec_chunks[tag].append(feature_set_from_records(records, kind, form="vector"))
        for tag, kind in map_kinds.items():
            map_chunks[tag].append(feature_set_from_records(records, kind, form="maps"))

    def merge(chunks: list[FeatureSet]) -> FeatureSet:
        return FeatureSet(
            kind=chunks[0].kind, form=chunks[0].form,
            ids=tuple(i for c in chunks for i in c.ids),
            x=np.concatenate([c.x for c in chunks]),
            labels=np.concatenate([c.labels for c in chunks]),
            sources=tuple(s for c in chunks for s in c.sources),
        )

    return FeatureBank({t: merge(c) for t, c in vec_chunks.items()},
                       {t: merge(c) for t, c in map_chunks.items()})


def _draw_balanced_ids(member_pool: list[str], external_pool: list[str], n: int,
                       seed: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    need_m, need_e = math.ceil(n / 2), n // 2
    if need_m > len(member_pool) or need_e > len(external_pool):
        raise ValueError(f"need {need_m}+{need_e} samples, pools hold "
                         f"{len(member_pool)}+{len(external_pool)}")
    m_order = stream(seed, SPLIT, 0).permutation(len(member_pool))[:need_m]
    e_order = stream(seed, SPLIT, 1).permutation(len(external_pool))[:need_e]
    return (tuple(member_pool[i] for i in m_order),
            tuple(external_pool[i] for i in e_order))


def _build_classifier(architecture: str, features: FeatureSet, seed: int) -> MintClassifier:
    if architecture == VANILLA:
        return build_vanilla(features.x.shape[1], seed=seed)
    return build_cnn(features.x.shape[1:], seed=seed)


def _cell_config(architecture: str, seed: int,
                 vanilla_config: nn.TrainConfig, cnn_config: nn.TrainConfig) -> nn.TrainConfig:
    base = vanilla_config if architecture == VANILLA else cnn_config
    return dataclasses.replace(base, seed=seed)


def _evaluate(classifier: MintClassifier, features: FeatureSet,
              test_ids: tuple[str, ...]) -> float:
    test = features.subset(test_ids)
    scores = predict_scores(classifier, test.x)
    score_objs = [MembershipScore.from_score(s, classifier.threshold) for s in scores]
    labels = [Membership.MEMBER if l == 1.0 else Membership.EXTERNAL for l in test.labels]
    return compute_accuracy(score_objs, labels)


def run_grid_on_bank(grid: ExperimentGrid, bank: FeatureBank, *,
                     test_size: int = DEFAULT_TEST_SIZE,
                     vanilla_config: nn.TrainConfig = VANILLA_CELL_CONFIG,
                     cnn_config: nn.TrainConfig = CNN_CELL_CONFIG) -> AccuracyTable:
    """Grid over a prepared feature bank; the shared test split is drawn first."""
    members, externals = bank.member_ids(), bank.external_ids()
    test_m, test_e = _draw_balanced_ids(members, externals, test_size,
                                        derive_seed(grid.seed, CELL, 0xFFFF))
    test_ids = test_m + test_e
    pool_m = [i for i in members if i not in set(test_m)]
    pool_e = [i for i in externals if i not in set(test_e)]

    cells = []
    for idx, (arch, kind, size) in enumerate(grid.cells()):
        accuracies = []
        try:
            features = bank.features_for(kind, arch)
            for rep in range(grid.repetitions):
                train_m, train_e = _draw_balanced_ids(
                    pool_m, pool_e, size, derive_seed(grid.seed, CELL, idx, rep, 0))
                SplitPlan(train_m, train_e, test_m, test_e)  # re-assert invariants
                clf = _build_classifier(arch, features,
                                        derive_seed(grid.seed, CELL, idx, rep, 1))
                config = _cell_config(arch, derive_seed(grid.seed, CELL, idx, rep, 2),
                                      vanilla_config, cnn_config)
                train_mint(clf, features.subset(train_m + train_e), config)
                accuracies.append(_evaluate(clf, features, test_ids))
            cells.append(CellResult(arch, kind, size, tuple(accuracies)))
        except Exception as exc:  # noqa: BLE001 - cell failures must not kill the run
            logger.warning("cell %s/%s/%d failed: %s", arch, kind.tag, size, exc)
            cells.append(CellResult(arch, kind, size, tuple(accuracies), error=str(exc)))
    return AccuracyTable(grid, cells, test_size)


def _shuffled_label_control(grid: ExperimentGrid, bank: FeatureBank, *,
                            test_size: int, vanilla_config: nn.TrainConfig,
                            cnn_config: nn.TrainConfig, shuffles: int = 3) -> tuple[float, ...]:
    """Retrain the largest vanilla-legal cell on permuted labels, `shuffles` times.

    A single permutation can drift from 0.5 by chance correlation with the
    informative feature direction, so the control reports several shuffles;
    their mean is the headline number.
    """
    arch = VANILLA if VANILLA in grid.architectures else grid.architectures[0]
    kind = next(k for k in grid.kinds if grid.is_legal(k, arch))
    size = max(grid.train_sizes)

    members, externals = bank.member_ids(), bank.external_ids()
    test_m, test_e = _draw_balanced_ids(members, externals, test_size,
                                        derive_seed(grid.seed, CELL, 0xFFFF))
    pool_m = [i for i in members if i not in set(test_m)]
    pool_e = [i for i in externals if i not in set(test_e)]
    features = bank.features_for(kind, arch)

    accs = []
    for i in range(shuffles):
        train_m, train_e = _draw_balanced_ids(pool_m, pool_e, size,
                                              derive_seed(grid.seed, CONTROL, 0, i))
        train = features.subset(train_m + train_e)
        perm = stream(grid.seed, CONTROL, 1, i).permutation(len(train.labels))
        train.labels = train.labels[perm]
        clf = _build_classifier(arch, features, derive_seed(grid.seed, CONTROL, 2, i))
        config = _cell_config(arch, derive_seed(grid.seed, CONTROL, 3, i),
                              vanilla_config, cnn_config)
        train_mint(clf, train, config)
        accs.append(_evaluate(clf, features, test_m + test_e))
    return tuple(accs)


def _untrained_model_control(control_config: SyntheticDataConfig, grid: ExperimentGrid,
                             model: AuditedModel, *, test_size: int,
                             vanilla_config: nn.TrainConfig) -> float:
    """Audit an UNTRAINED twin of the model on offset-zero data: must be ~0.5."""
    config = dataclasses.replace(control_config, member_external_generator_offset=0.0)
    partition = generate_synthetic_dataset(config)
    twin = build_toy_audited_model(
        channels_per_block=model.channels_per_block,
        embedding_dim=model.embedding_dim,
        n_classes=model.n_classes,
        in_channels=model.input_shape[0],
        image_size=model.input_shape[1],
        seed=derive_seed(grid.seed, CONTROL, 4),
    )
    control_grid = ExperimentGrid(
        kinds=(AuditableDataKind.all_conv_layers(),),
        train_sizes=(max(grid.train_sizes),),
        architectures=(VANILLA,),
        repetitions=1,
        seed=derive_seed(grid.seed, CONTROL, 5),
    )
    bank = build_feature_bank(twin, partition, control_grid)
    table = run_grid_on_bank(control_grid, bank, test_size=test_size,
                             vanilla_config=vanilla_config)
    (cell,) = table.cells
    if cell.failed:
        raise RuntimeError(f"untrained-model control failed: {cell.error}")
    return cell.mean


def run_grid(grid: ExperimentGrid, model: AuditedModel, partition: DatasetPartition, *,
             test_size: int = DEFAULT_TEST_SIZE,
             control_config: SyntheticDataConfig | None = None,
             vanilla_config: nn.TrainConfig = VANILLA_CELL_CONFIG,
             cnn_config: nn.TrainConfig = CNN_CELL_CONFIG,
             with_controls: bool = True) -> tuple[AccuracyTable, ControlResult]:
    """The full experiment: extract features once, fill every legal cell, run controls."""
    if not model.trained:
        raise ValueError("audited model must be trained before running the grid")
    bank = build_feature_bank(model, partition, grid)
    table = run_grid_on_bank(grid, bank, test_size=test_size,
                             vanilla_config=vanilla_config, cnn_config=cnn_config)
    table.dataset_digest = partition.digest()
    table.model_architecture = model.architecture_id
    table.metadata = {
        "seed": grid.seed,
        "test_size": test_size,
        "repetitions": grid.repetitions,
        "vanilla_config": dataclasses.asdict(vanilla_config),
        "cnn_config": dataclasses.asdict(cnn_config),
    }

    controls = ControlResult()
    if with_controls:
        shuffle_accs = _shuffled_label_control(
            grid, bank, test_size=test_size,
            vanilla_config=vanilla_config, cnn_config=cnn_config)
        controls.shuffled_label_accuracies = shuffle_accs
        controls.shuffled_label_accuracy = float(np.mean(shuffle_accs))
        if control_config is not None:
            controls.untrained_model_accuracy = _untrained_model_control(
                control_config, grid, model, test_size=test_size,
                vanilla_config=vanilla_config)
    return table, controls


# ---------------------------------------------------------------------------
# Reporting


def _md_accuracy_table(table: AccuracyTable, architecture: str) -> list[str]:
    rows = table.rows_for(architecture)
    sizes = table.grid.train_sizes
    # Best row: highest mean accuracy at the largest train size.
    best_kind = None
    best_acc = -1.0
    for kind in rows:
        cell = table.cell(architecture, kind, sizes[-1])
        if not cell.failed and cell.mean > best_acc:
            best_acc, best_kind = cell.mean, kind

    lines = ["| Auditable Data | " + " | ".join(f"{s} samples" for s in sizes) + " |",
             "|" + "---|" * (len(sizes) + 1)]
    for kind in rows:
        values = []
        for size in sizes:
            cell = table.cell(architecture, kind, size)
            values.append("failed" if cell.failed else f"{cell.mean:.3f} ± {cell.spread:.3f}")
        label = kind.label
        if kind == best_kind:
            label = f"**{label}**"
            values = [f"**{v}**" for v in values]
        lines.append(f"| {label} | " + " | ".join(values) + " |")
    return lines


def _md_reference_block() -> list[str]:
    lines = ["## Full-scale reference (not reproduced)",
             "",
             "Published accuracies from the full-scale audit (100-layer face model, "
             "17M-image training set). Shown for orientation only; the desk-scale "
             "numbers above are not comparable and do not reproduce them.",
             ""]
    for arch, title in ((VANILLA, "Vanilla audit model (full-scale reference)"),
                        (CNN, "CNN audit model (full-scale reference)")):
        ref = FULL_SCALE_REFERENCE[arch]
        lines += [f"### {title}", "",
                  "| Auditable Data | " + " | ".join(ref["columns"]) + " |",
                  "|" + "---|" * (len(ref["columns"]) + 1)]
        for label, values in ref["rows"]:
            cells = [f"{v:.2f}" for v in values]
            if label == ref["best_row"]:
                label = f"**{label}**"
                cells = [f"**{c}**" for c in cells]
            lines.append(f"| {label} | " + " | ".join(cells) + " |")
        lines.append("")
    return lines


def emit_report(table: AccuracyTable, controls: ControlResult, format: str) -> str:
    """Render the table + controls as markdown, CSV or JSON."""
    if format in ("md", "markdown"):
        lines = ["# Membership audit accuracy (desk scale)", ""]
        if table.model_architecture:
            lines.append(f"- audited model: `{table.model_architecture}`")
        if table.dataset_digest:
            lines.append(f"- dataset digest: `{table.dataset_digest[:16]}`")
        lines += [f"- grid seed: {table.grid.seed}",
                  f"- repetitions: {table.grid.repetitions} (cells are mean ± max deviation)",
                  f"- shared test split: {table.test_size} balanced samples", ""]
        for arch in table.grid.architectures:
            lines += [f"## {arch.capitalize()} audit model", ""]
            lines += _md_accuracy_table(table, arch)
            lines.append("")
        lines += ["## Controls", ""]
        if controls.shuffled_label_accuracy is not None:
            per = "/".join(f"{a:.3f}" for a in controls.shuffled_label_accuracies)
            lines.append(f"- shuffled-label accuracy: {controls.shuffled_label_accuracy:.3f} "
                         f"(shuffles: {per})")
        if controls.untrained_model_accuracy is not None:
            lines.append(f"- untrained-model, zero-offset accuracy: "
                         f"{controls.untrained_model_accuracy:.3f}")
        lines.append("")
        lines += _md_reference_block()
        return "\n".join(lines)

    if format == "csv":
        import csv
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["architecture", "auditable_data", "train_size",
                         "mean_accuracy", "spread", "accuracies", "error"])
        for c in table.cells:
            writer.writerow([
                c.architecture, c.kind.tag, c.train_size,
                "" if c.failed else repr(c.mean),
                "" if c.failed else repr(c.spread),
                ";".join(repr(a) for a in c.accuracies),
                c.error or "",
            ])
        return buf.getvalue()

    if format == "json":
        doc = {
            "metadata": {
                "dataset_digest": table.dataset_digest,
                "model_architecture": table.model_architecture,
                "test_size": table.test_size,
                **table.metadata,
            },
            "grid": {
                "kinds": [k.tag for k in table.grid.kinds],
                "train_sizes": list(table.grid.train_sizes),
                "architectures": list(table.grid.architectures),
                "repetitions": table.grid.repetitions,
                "seed": table.grid.seed,
            },
            "cells": [
                {
                    "architecture": c.architecture,
                    "auditable_data": c.kind.tag,
                    "train_size": c.train_size,
                    "accuracies": list(c.accuracies),
                    "mean": None if c.failed else c.mean,
                    "spread": None if c.failed else c.spread,
                    "error": c.error,
                }
                for c in table.cells
            ],
            "controls": {
                "shuffled_label_accuracy": controls.shuffled_label_accuracy,
                "shuffled_label_accuracies": list(controls.shuffled_label_accuracies),
                "untrained_model_accuracy": controls.untrained_model_accuracy,
            },
            "full_scale_reference": {
                arch: {"columns": list(ref["columns"]),
                       "rows": [[label, list(vals)] for label, vals in ref["rows"]]}
                for arch, ref in FULL_SCALE_REFERENCE.items()
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    raise ValueError(f"unknown report format {format!r}; use md, csv or json")


def table_from_json(doc: dict) -> tuple[AccuracyTable, ControlResult]:
    """Rebuild a table + controls from an emitted run.json document."""
    grid = ExperimentGrid(
        kinds=tuple(AuditableDataKind.from_tag(t) for t in doc["grid"]["kinds"]),
        train_sizes=tuple(doc["grid"]["train_sizes"]),
        architectures=tuple(doc["grid"]["architectures"]),
        repetitions=doc["grid"]["repetitions"],
        seed=doc["grid"]["seed"],
    )
    cells = [CellResult(c["architecture"], AuditableDataKind.from_tag(c["auditable_data"]),
                        c["train_size"], tuple(c["accuracies"]), c["error"])
             for c in doc["cells"]]
    meta = dict(doc["metadata"])
    table = AccuracyTable(grid, cells, meta.pop("test_size"),
                          dataset_digest=meta.pop("dataset_digest", ""),
                          model_architecture=meta.pop("model_architecture", ""),
                          metadata=meta)
    ctrl = doc["controls"]
    controls = ControlResult(
        shuffled_label_accuracy=ctrl["shuffled_label_accuracy"],
        shuffled_label_accuracies=tuple(ctrl["shuffled_label_accuracies"]),
        untrained_model_accuracy=ctrl["untrained_model_accuracy"],
    )
    return table, controls


def parse_csv_cells(text: str) -> list[dict]:
    """Parse an emitted CSV back into cell dicts (round-trip aid for tooling)."""
    import csv
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        out.append({
            "architecture": r["architecture"],
            "auditable_data": r["auditable_data"],
            "train_size": int(r["train_size"]),
            "mean_accuracy": float(r["mean_accuracy"]) if r["mean_accuracy"] else None,
            "spread": float(r["spread"]) if r["spread"] else None,
            "accuracies": [float(a) for a in r["accuracies"].split(";") if a],
            "error": r["error"] or None,
        })
    return out


def write_report_files(table: AccuracyTable, controls: ControlResult, out_dir,
                       run_id: str) -> dict[str, str]:
    """Write `<run-id>.table.md`, `<run-id>.table.csv` and `<run-id>.run.json`."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for fmt, suffix in (("md", "table.md"), ("csv", "table.csv"), ("json", "run.json")):
        path = out / f"{run_id}.{suffix}"
        path.write_text(emit_report(table, controls, fmt))
        paths[fmt] = str(path)
    return paths
