"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete. The desk-scale fixture runs the real default
pipeline once and is shared by the criteria that need it.
"""

from __future__ import annotations

import base64
import dataclasses
import io
import time

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from mintaudit import nn
from mintaudit.aad import (
    VANILLA_KINDS,
    AuditableDataKind,
    FeatureSet,
    batch_extract,
    feature_set_from_records,
    vectorize_max,
)
from mintaudit.audited import ALL_TAPS, AadRecord, build_toy_audited_model, train_audited
from mintaudit.classifiers import (
    CnnMintSpec,
    build_cnn,
    build_vanilla,
    predict,
    train_mint,
)
from mintaudit.data import (
    Membership,
    SyntheticDataConfig,
    generate_synthetic_dataset,
    plan_split,
)
from mintaudit.harness import (
    FULL_SCALE_REFERENCE,
    VANILLA_CELL_CONFIG,
    ControlResult,
    ExperimentGrid,
    FeatureBank,
    emit_report,
    run_grid,
    run_grid_on_bank,
)
from mintaudit.registry import (
    AuditRegistry,
    audit_sample,
    register_classifier,
    save_audited_model,
    save_classifier,
)
from mintaudit.service import MEMBERSHIP_REPORT_SCHEMA, create_app

from gradcheck import REL_TOL, check_layer


def _report(capsys, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    # Step outside pytest's capture so the per-criterion line reaches the log.
    with capsys.disabled():
        print(f"[{status}] {name}{suffix}", flush=True)


# ---------------------------------------------------------------------------
# Shared desk-scale pipeline (defaults: 4 classes, 4000+4000 samples, 32x32)


@pytest.fixture(scope="session")
def desk_run():
    t0 = time.time()
    cfg = SyntheticDataConfig()
    partition = generate_synthetic_dataset(cfg)
    model = build_toy_audited_model(n_classes=4, seed=11)
    audited_metrics = train_audited(
        model, partition.members,
        nn.TrainConfig(learning_rate=0.02, epochs=10, batch_size=64, seed=7))
    grid = ExperimentGrid(kinds=(AuditableDataKind.all_conv_layers(),),
                          train_sizes=(1000,), architectures=("vanilla",),
                          repetitions=1, seed=3)
    table, controls = run_grid(grid, model, partition, test_size=1000,
                               control_config=cfg)
    elapsed = time.time() - t0
    return {
        "config": cfg,
        "partition": partition,
        "model": model,
        "audited_metrics": audited_metrics,
        "table": table,
        "controls": controls,
        "elapsed": elapsed,
    }


# ---------------------------------------------------------------------------
# Criterion 1: gradient suite


def test_criterion_gradient_suite(capsys):
    cases = [
        (nn.Dense(5, 3), (5,), False),
        (nn.Conv2d(2, 3), (2, 6, 6), False),
        (nn.ReLU(), (3, 4, 4), False),
        (nn.Sigmoid(), (7,), False),
        (nn.Dropout(0.3), (4, 3, 3), True),
        (nn.MaxPool2d(), (2, 6, 6), False),
        (nn.GlobalMaxPerMap(), (3, 5, 5), False),
        (nn.Flatten(), (2, 3, 3), False),
    ]
    t0 = time.time()
    worst_overall = 0.0
    rng = np.random.default_rng(1234)
    for layer, in_shape, train_dropout in cases:
        for _ in range(20):
            worst = check_layer(layer, in_shape, batch=2, rng=rng,
                                train_dropout=train_dropout)
            worst_overall = max(worst_overall, worst)
            assert worst <= REL_TOL, (type(layer).__name__, worst)
    elapsed = time.time() - t0
    ok = worst_overall <= REL_TOL and elapsed < 60
    _report(capsys, "gradient suite: analytic backward vs central differences "
            "(20+ cases/layer, rel err <= 1e-3, < 60 s)", ok,
            f"worst rel err {worst_overall:.2e}, {elapsed:.1f} s")
    assert elapsed < 60


# ---------------------------------------------------------------------------
# Criterion 2: extraction oracle


def test_criterion_extraction_oracle(capsys):
    rng = np.random.default_rng(7)
    for i in range(1000):
        c = int(rng.integers(1, 9))
        h = int(rng.integers(1, 7))
        w = int(rng.integers(1, 7))
        tap = rng.normal(size=(c, h, w)).astype(np.float32)
        record = AadRecord(f"r{i}", Membership.MEMBER, {"conv_block_1": tap})
        got = vectorize_max(record, AuditableDataKind.conv_layer(1)).values
        brute = np.array([tap[ch].max() for ch in range(c)], dtype=np.float32)
        assert np.array_equal(got, brute), i

    for i in range(100):
        channels = [int(v) for v in rng.integers(1, 65, size=4)]
        taps = {f"conv_block_{k}": rng.normal(size=(ch, 4, 4)).astype(np.float32)
                for k, ch in enumerate(channels, start=1)}
        record = AadRecord(f"a{i}", Membership.MEMBER, taps)
        fv = vectorize_max(record, AuditableDataKind.all_conv_layers())
        assert fv.length == sum(channels), (channels, fv.length)

    _report(capsys, "extraction oracle: vectorize_max equals brute force on 1000 tensors; "
            "concat length = sum of channels for 100 architectures", True)


# ---------------------------------------------------------------------------
# Criterion 3: parameter-count formulas


def test_criterion_parameter_count_formulas(capsys):
    rng = np.random.default_rng(21)
    for _ in range(50):
        f = int(rng.integers(1, 2000))
        clf = build_vanilla(f)
        assert clf.network.num_params == (f * 64 + 64) + (64 * 1 + 1), f

    checked = 0
    while checked < 50:
        c = int(rng.integers(1, 33))
        h = int(rng.integers(1, 6)) * 4
        w = int(rng.integers(1, 6)) * 4
        spec = CnnMintSpec((c, h, w))
        clf = build_cnn((c, h, w))
        assert spec.flatten_length == 128 * (h // 4) * (w // 4)
        assert clf.network.num_params == spec.parameter_count, (c, h, w)
        checked += 1

    _report(capsys, "parameter-count formulas: vanilla (F*64+64)+(64+1) and CNN flatten "
            "length, 50 random cases each, exact", True)


# ---------------------------------------------------------------------------
# Criterion 4: desk-scale experiment


def test_criterion_desk_scale_experiment(desk_run, capsys):
    train_acc = desk_run["audited_metrics"].final_accuracy
    cell = desk_run["table"].cells[0]
    mint_acc = cell.accuracies[0] if cell.accuracies else float("nan")
    elapsed = desk_run["elapsed"]
    ok = train_acc >= 0.90 and mint_acc >= 0.60 and elapsed <= 600
    _report(capsys, "desk-scale experiment: audited train acc >= 0.90, AllConvLayers "
            "vanilla @1000 train >= 0.60 on 1000 disjoint, <= 10 min", ok,
            f"train {train_acc:.3f}, audit {mint_acc:.3f}, {elapsed:.0f} s")
    assert train_acc >= 0.90
    assert not cell.failed, cell.error
    assert mint_acc >= 0.60
    assert elapsed <= 600


# ---------------------------------------------------------------------------
# Criterion 5: controls


def test_criterion_shuffled_label_control(desk_run, capsys):
    controls: ControlResult = desk_run["controls"]
    acc = controls.shuffled_label_accuracy
    ok = acc is not None and abs(acc - 0.5) <= 0.05
    per = "/".join(f"{a:.3f}" for a in controls.shuffled_label_accuracies)
    _report(capsys, "control: shuffled-label accuracy in 0.5 +/- 0.05", ok,
            f"mean {acc:.3f}, shuffles {per}")
    assert ok


def test_criterion_untrained_model_control(desk_run, capsys):
    acc = desk_run["controls"].untrained_model_accuracy
    ok = acc is not None and abs(acc - 0.5) <= 0.05
    _report(capsys, "control: untrained model + zero offset accuracy in 0.5 +/- 0.05", ok,
            f"{acc:.3f}")
    assert ok


def test_criterion_leaked_feature_oracle(capsys):
    n = 600
    ids = tuple(f"s{i:04d}" for i in range(n))
    labels = np.array([1.0, 0.0] * (n // 2), dtype=np.float32)
    leak = np.where(labels == 1.0, 1.0, -1.0).astype(np.float32)
    vectors = {}
    for kind in VANILLA_KINDS:
        x = np.zeros((n, 10), dtype=np.float32)
        x[:, 0] = leak
        vectors[kind.tag] = FeatureSet(kind, "vector", ids, x, labels)
    maps = {}
    for kind in (AuditableDataKind.conv_layer(k) for k in range(1, 5)):
        x = np.zeros((n, 2, 4, 4), dtype=np.float32)
        x[:, 0] = leak[:, None, None]
        maps[kind.tag] = FeatureSet(kind, "maps", ids, x, labels)
    bank = FeatureBank(vectors, maps)

    grid = ExperimentGrid(kinds=VANILLA_KINDS, train_sizes=(100, 200),
                          architectures=("vanilla", "cnn"), repetitions=2, seed=1)
    fast = nn.TrainConfig(learning_rate=0.05, epochs=12, batch_size=32,
                          l1_coefficient=0.01, seed=0)
    table = run_grid_on_bank(grid, bank, test_size=200,
                             vanilla_config=fast, cnn_config=fast)
    perfect = all(not c.failed and all(a == 1.0 for a in c.accuracies)
                  for c in table.cells)
    _report(capsys, "control: leaked-feature oracle scores 1.0 in every grid cell", perfect,
            f"{len(table.cells)} cells")
    assert perfect


# ---------------------------------------------------------------------------
# Criterion 6: determinism of the full pipeline


def test_criterion_full_pipeline_determinism(tmp_path, capsys):
    def pipeline(out_dir):
        cfg = SyntheticDataConfig(n_classes=2, samples_per_class=300,
                                  n_external=600, seed=17)
        partition = generate_synthetic_dataset(cfg)
        model = build_toy_audited_model(n_classes=2, seed=4)
        train_audited(model, partition.members,
                      nn.TrainConfig(learning_rate=0.02, epochs=3, batch_size=64, seed=2))
        save_audited_model(model, out_dir / "audited")
        grid = ExperimentGrid(kinds=(AuditableDataKind.all_conv_layers(),),
                              train_sizes=(200,), architectures=("vanilla",),
                              repetitions=2, seed=6)
        table, _ = run_grid(grid, model, partition, test_size=200, with_controls=False)
        return partition.digest(), (out_dir / "audited.nn").read_bytes(), \
            [c.accuracies for c in table.cells]

    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    digest_a, ckpt_a, cells_a = pipeline(tmp_path / "a")
    digest_b, ckpt_b, cells_b = pipeline(tmp_path / "b")
    ok = digest_a == digest_b and ckpt_a == ckpt_b and cells_a == cells_b
    _report(capsys, "determinism: two identical-seed pipeline runs give bit-identical "
            "digests, checkpoints and table cells", ok)
    assert digest_a == digest_b
    assert ckpt_a == ckpt_b
    assert cells_a == cells_b


# ---------------------------------------------------------------------------
# Criterion 7: reporting fidelity


def test_criterion_reporting_fidelity(desk_run, capsys):
    md = emit_report(desk_run["table"], desk_run["controls"], "md")

    row_set = ["Conv Layer #1", "Conv Layer #2", "Conv Layer #3", "Conv Layer #4",
               "Model Outcome", "All Conv Layers"]
    reference_ok = True
    for label in row_set:
        if label not in md:
            reference_ok = False

    expected_vanilla = {
        "Conv Layer #1": (0.62, 0.80, 0.80),
        "Conv Layer #2": (0.56, 0.67, 0.68),
        "Conv Layer #3": (0.56, 0.58, 0.59),
        "Conv Layer #4": (0.73, 0.76, 0.76),
        "Model Outcome": (0.67, 0.78, 0.78),
        "All Conv Layers": (0.76, 0.82, 0.84),
    }
    expected_cnn = {
        "Conv Layer #1": (0.88, 0.89, 0.89),
        "Conv Layer #2": (0.85, 0.86, 0.86),
        "Conv Layer #3": (0.68, 0.71, 0.75),
        "Conv Layer #4": (0.68, 0.70, 0.74),
    }
    assert dict(FULL_SCALE_REFERENCE["vanilla"]["rows"]) == expected_vanilla
    assert dict(FULL_SCALE_REFERENCE["cnn"]["rows"]) == expected_cnn

    ref_section = md.split("Full-scale reference (not reproduced)")[1]
    vanilla_block = ref_section.split("### Vanilla")[1].split("### CNN")[0]
    cnn_block = ref_section.split("### CNN")[1]
    for block, table in ((vanilla_block, expected_vanilla), (cnn_block, expected_cnn)):
        for label, values in table.items():
            row_line = next((l for l in block.splitlines()
                             if label in l and "|" in l), "")
            for v in values:
                if f"{v:.2f}" not in row_line:
                    reference_ok = False

    ok = reference_ok and "not reproduced" in md
    _report(capsys, "reporting fidelity: markdown row set and full-scale reference "
            "block match the published values cell-for-cell", ok)
    assert ok


# ---------------------------------------------------------------------------
# Criterion 8: service contract


@pytest.fixture(scope="session")
def prepared_registry(desk_run, tmp_path_factory):
    partition = desk_run["partition"]
    model = desk_run["model"]
    plan = plan_split(partition, 1000, 200, seed=29)
    samples = [partition[sid] for sid in plan.mint_train]
    records = batch_extract(model, samples, ALL_TAPS)
    features = feature_set_from_records(records, AuditableDataKind.all_conv_layers())
    clf = build_vanilla(features.x.shape[1], seed=9)
    train_mint(clf, features, dataclasses.replace(VANILLA_CELL_CONFIG, seed=10))

    root = tmp_path_factory.mktemp("acceptance_registry")
    save_audited_model(model, root / "audited")
    save_classifier(clf, root / "mint_vanilla_all_conv_layers")
    register_classifier(root, "toy-default", "audited", "mint_vanilla_all_conv_layers")
    return AuditRegistry.load(root)


def test_criterion_service_contract(desk_run, prepared_registry, capsys):
    client = TestClient(create_app(prepared_registry))
    fixture_image = desk_run["partition"].members[42].image
    arr = (fixture_image[0] * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    png = buf.getvalue()

    r = client.post("/api/audit", files={"image": ("fixture.png", png, "image/png")})
    schema_ok = r.status_code == 200
    report = r.json()
    try:
        jsonschema.validate(report, MEMBERSHIP_REPORT_SCHEMA)
    except jsonschema.ValidationError:
        schema_ok = False

    offline = audit_sample(prepared_registry, Image.open(io.BytesIO(png)))
    parity = ([c.score for c in offline.per_config]
              == [c["score"] for c in report["per_config"]]
              and offline.aggregate_likelihood == report["aggregate_likelihood"])

    r_empty = client.post("/api/audit", json={})
    r_bad = client.post("/api/audit",
                        json={"image_b64": base64.b64encode(b"junk").decode()})
    r_ghost = client.post("/api/audit", json={
        "image_b64": base64.b64encode(png).decode(), "model_id": "ghost"})
    errors_ok = (r_empty.status_code == 400
                 and r_empty.json()["error_code"] == "empty_payload"
                 and r_bad.status_code == 400
                 and r_bad.json()["error_code"] == "invalid_image"
                 and r_ghost.status_code == 404
                 and r_ghost.json()["error_code"] == "unknown_model")

    ok = schema_ok and parity and errors_ok
    _report(capsys, "service contract: schema-valid report, scores bit-equal to offline "
            "predict, documented error codes", ok,
            f"aggregate {report.get('aggregate_likelihood', float('nan')):.4f}")
    assert schema_ok
    assert parity
    assert errors_ok
