"""Feature extraction: max-per-map vectors, full maps, batch extraction."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mintaudit.aad import (
    AuditableDataKind,
    batch_extract,
    feature_set_from_records,
    full_maps,
    vectorize_max,
)
from mintaudit.audited import ALL_TAPS, AadRecord, build_toy_audited_model, train_audited
from mintaudit.data import Membership, Sample, SyntheticDataConfig, generate_synthetic_dataset
from mintaudit import nn


def _record(block_shapes=((8, 16, 16), (16, 8, 8), (32, 4, 4), (64, 2, 2)), seed=0,
            outcome_dim=32):
    rng = np.random.default_rng(seed)
    taps = {f"conv_block_{k}": rng.normal(size=shape).astype(np.float32)
            for k, shape in enumerate(block_shapes, start=1)}
    return AadRecord("r0", Membership.MEMBER, taps,
                     outcome=rng.normal(size=outcome_dim).astype(np.float32))


def test_kind_constructors_and_tags():
    k = AuditableDataKind.conv_layer(2)
    assert k.tag == "conv_layer_2" and k.label == "Conv Layer #2"
    assert AuditableDataKind.from_tag("conv_layer_2") == k
    assert AuditableDataKind.model_outcome().label == "Model Outcome"
    assert AuditableDataKind.all_conv_layers().label == "All Conv Layers"
    with pytest.raises(ValueError):
        AuditableDataKind.conv_layer(5)
    with pytest.raises(ValueError):
        AuditableDataKind("nonsense")


def test_vectorize_direct_max():
    taps = {"conv_block_1": np.array(
        [[[0.0, 0.0], [0.0, 0.0]], [[-1.0, 3.0], [0.0, 2.0]]], dtype=np.float32)}
    record = AadRecord("x", Membership.MEMBER, taps)
    fv = vectorize_max(record, AuditableDataKind.conv_layer(1))
    assert np.array_equal(fv.values, [0.0, 3.0])


def test_vectorize_equals_bruteforce_per_channel_scan():
    record = _record(seed=3)
    for k in range(1, 5):
        fv = vectorize_max(record, AuditableDataKind.conv_layer(k))
        tap = record.taps[f"conv_block_{k}"]
        brute = np.array([tap[c].max() for c in range(tap.shape[0])], dtype=np.float32)
        assert np.array_equal(fv.values, brute)


def test_all_conv_layers_concatenates_in_block_order():
    record = _record()
    fv = vectorize_max(record, AuditableDataKind.all_conv_layers())
    assert fv.length == 8 + 16 + 32 + 64
    first = vectorize_max(record, AuditableDataKind.conv_layer(1))
    assert np.array_equal(fv.values[:8], first.values)


def test_model_outcome_copied_verbatim():
    record = _record()
    fv = vectorize_max(record, AuditableDataKind.model_outcome())
    assert np.array_equal(fv.values, record.outcome)
    fv.values[0] += 1  # must be a copy, not a view
    assert fv.values[0] != record.outcome[0]


def test_missing_tap_is_named():
    record = AadRecord("x", Membership.MEMBER, {})
    with pytest.raises(ValueError, match="conv_block_2"):
        vectorize_max(record, AuditableDataKind.conv_layer(2))
    with pytest.raises(ValueError, match="conv_block_1"):
        vectorize_max(record, AuditableDataKind.all_conv_layers())


def test_vectorize_is_channel_permutation_equivariant():
    record = _record(seed=5)
    perm = np.random.default_rng(0).permutation(8)
    permuted = AadRecord("p", Membership.MEMBER,
                         {"conv_block_1": record.taps["conv_block_1"][perm]})
    a = vectorize_max(record, AuditableDataKind.conv_layer(1)).values
    b = vectorize_max(permuted, AuditableDataKind.conv_layer(1)).values
    assert np.array_equal(a[perm], b)


def test_vectorize_is_monotone_in_single_activations():
    record = _record(seed=6)
    base = vectorize_max(record, AuditableDataKind.conv_layer(2)).values
    bumped = {k: v.copy() for k, v in record.taps.items()}
    bumped["conv_block_2"][3, 1, 1] += 10.0
    after = vectorize_max(AadRecord("b", Membership.MEMBER, bumped),
                          AuditableDataKind.conv_layer(2)).values
    assert np.all(after >= base)


@settings(max_examples=30, deadline=None)
@given(channels=st.lists(st.integers(1, 12), min_size=4, max_size=4), data=st.data())
def test_feature_lengths_hold_for_any_architecture(channels, data):
    shapes = [(c, 2 ** (5 - i), 2 ** (5 - i)) for i, c in enumerate(channels)]
    record = _record(block_shapes=shapes, seed=data.draw(st.integers(0, 1000)))
    for k in range(1, 5):
        assert vectorize_max(record, AuditableDataKind.conv_layer(k)).length == channels[k - 1]
    assert vectorize_max(record, AuditableDataKind.all_conv_layers()).length == sum(channels)


def test_full_maps_identity():
    record = _record()
    fm = full_maps(record, AuditableDataKind.conv_layer(1))
    assert np.array_equal(fm.maps, record.taps["conv_block_1"])
    assert fm.maps.shape == (8, 16, 16)


def test_full_maps_rejects_concatenation():
    with pytest.raises(ValueError, match="concatenation impractical"):
        full_maps(_record(), AuditableDataKind.all_conv_layers())


def test_full_maps_rejects_outcome():
    with pytest.raises(ValueError, match="no spatial activation maps"):
        full_maps(_record(), AuditableDataKind.model_outcome())


@pytest.fixture(scope="module")
def setup():
    cfg = SyntheticDataConfig(n_classes=2, samples_per_class=100, n_external=200, seed=2)
    part = generate_synthetic_dataset(cfg)
    model = build_toy_audited_model(n_classes=2, seed=1)
    train_audited(model, part.members, nn.TrainConfig(epochs=2, batch_size=64, seed=0))
    return model, part


class TestBatchExtract:
    def test_counts_and_tags_preserved(self, setup):
        model, part = setup
        samples = part.members[:40] + part.externals[:40]
        records = batch_extract(model, samples, ALL_TAPS)
        assert len(records) == 80
        assert sum(r.membership is Membership.MEMBER for r in records) == 40
        assert [r.sample_id for r in records] == [s.id for s in samples]

    def test_empty_stream_is_empty(self, setup):
        model, _ = setup
        assert batch_extract(model, [], ALL_TAPS) == []

    def test_bad_sample_skipped_and_logged(self, setup, caplog):
        model, part = setup
        bad = Sample("corrupt", np.full((1, 32, 32), np.nan, np.float32),
                     Membership.MEMBER, "x", class_label=0)
        with caplog.at_level("WARNING"):
            records = batch_extract(model, [part.members[0], bad, part.members[1]], ALL_TAPS)
        assert len(records) == 2
        assert any("corrupt" in r.message for r in caplog.records)

    def test_rerun_is_bit_identical(self, setup):
        model, part = setup
        samples = part.members[:16] + part.externals[:16]
        a = batch_extract(model, samples, ALL_TAPS)
        b = batch_extract(model, samples, ALL_TAPS)
        for ra, rb in zip(a, b):
            for name in ra.taps:
                assert np.array_equal(ra.taps[name], rb.taps[name])
            assert np.array_equal(ra.outcome, rb.outcome)

    def test_records_match_single_sample_inference(self, setup):
        from mintaudit.audited import infer_with_taps
        model, part = setup
        samples = part.members[:5]
        records = batch_extract(model, samples, ALL_TAPS, batch_size=5)
        for s, r in zip(samples, records):
            _, single = infer_with_taps(model, s.image, ALL_TAPS, sample_id=s.id)
            for name in r.taps:
                assert np.allclose(r.taps[name], single.taps[name], atol=1e-6)


def test_feature_set_requires_membership_tags():
    record = _record()
    record.membership = None
    with pytest.raises(ValueError, match="membership"):
        feature_set_from_records([record], AuditableDataKind.conv_layer(1))


def test_feature_set_stacks_and_labels():
    records = [_record(seed=s) for s in range(4)]
    records[2].membership = Membership.EXTERNAL
    for i, r in enumerate(records):
        r.sample_id = f"r{i}"
    fs = feature_set_from_records(records, AuditableDataKind.all_conv_layers())
    assert fs.x.shape == (4, 120)
    assert np.array_equal(fs.labels, [1.0, 1.0, 0.0, 1.0])
    sub = fs.subset(("r2", "r0"))
    assert sub.ids == ("r2", "r0")
    assert np.array_equal(sub.x[0], fs.x[2])
