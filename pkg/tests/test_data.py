import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsan import container
from tsan.data import (
    FeatureSchema,
    SplitSpec,
    WindowedDataset,
    binarize_labels,
    build_windows,
    encode_records,
    fit_scaler,
    load_dataset,
    parse_records,
    preprocess,
    save_dataset,
    stratified_split,
    synth_generate,
    window_indices,
    write_records,
)
from tsan.data.nslkdd import (
    DOS_LABELS,
    NUMERIC_NAMES,
    ScalerStats,
    apply_scaler,
    binary_label,
    format_record,
    numeric_matrix,
    parse_line,
)
from tsan.data.synth import DESIGNATED_FEATURES
from tsan.data.windows import next_step_targets
from tsan.errors import ConfigError, DataFormatError

LINE = ("0,tcp,http,SF,181,5450,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,8,8,0.00,0.00,0.00,0.00,"
        "1.00,0.00,0.00,9,9,1.00,0.00,0.11,0.00,0.00,0.00,0.00,0.00,normal,21")


def test_parse_valid_line():
    rec = parse_line(LINE.split(","))
    assert rec.protocol_type == "tcp" and rec.service == "http" and rec.flag == "SF"
    assert rec.label == "normal" and rec.difficulty == 21
    assert len(rec.numeric) == len(NUMERIC_NAMES) == 38


def test_parse_empty_file(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("")
    assert parse_records(path) == []


def test_parse_errors_name_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text(LINE + "\n" + ",".join(LINE.split(",")[:42]) + "\n")
    with pytest.raises(DataFormatError) as exc:
        parse_records(path)
    assert exc.value.line == 2
    bad = LINE.split(",")
    bad[4] = "abc"
    with pytest.raises(DataFormatError) as exc:
        parse_line(bad, 7)
    assert exc.value.line == 7 and exc.value.column == 5
    bad = LINE.split(",")
    bad[1] = "sctp"
    with pytest.raises(DataFormatError):
        parse_line(bad, 1)


def test_format_round_trip(tmp_path):
    records = synth_generate(50, 0.5, seed=3)
    path = tmp_path / "r.txt"
    write_records(path, records)
    assert parse_records(path) == records
    assert all(len(format_record(r).split(",")) == 43 for r in records)


def test_binarize_labels():
    recs = synth_generate(30, 0.5, seed=0)
    raw = [r.__class__(r.numeric, r.protocol_type, r.service, r.flag, lab, r.difficulty)
           for r, lab in zip(recs, ["normal", "neptune", "satan", "smurf.", "guess_passwd", "back"] * 5)]
    out = binarize_labels(raw)
    assert set(out.labels.tolist()) <= {0, 1}
    assert np.all(np.diff(out.source_index) > 0)
    assert len(out) == 20
    assert binary_label("Neptune") == 1 and binary_label("normal") == 0 and binary_label("ipsweep") is None


def test_scaler_examples():
    stats = ScalerStats(np.array([4.0]), np.array([np.sqrt(8 / 3)]))
    assert apply_scaler(np.array([[4.0]]), stats)[0, 0] == 0
    assert np.isclose(apply_scaler(np.array([[4.0 + np.sqrt(8 / 3)]]), stats)[0, 0], 1)
    col = np.array([[2.0], [4.0], [6.0]])
    fitted = fit_scaler(col)
    mu = sum(col.ravel()) / 3
    sigma = (sum((v - mu) ** 2 for v in col.ravel()) / 3) ** 0.5
    assert np.isclose(fitted.mean[0], mu) and np.isclose(fitted.std[0], sigma)
    assert np.isclose(sigma, 1.63299, atol=1e-5)
    assert np.allclose(apply_scaler(col, fitted).ravel(), [-1.2247449, 0, 1.2247449])


def test_constant_column_clamped():
    stats = fit_scaler(np.ones((5, 2)))
    assert np.all(stats.std >= 1e-8)
    assert np.all(np.isfinite(apply_scaler(np.ones((5, 2)), stats)))


def test_scaled_training_columns_standardized():
    records = binarize_labels(synth_generate(500, 0.5, seed=5)).records
    x = numeric_matrix(records)
    z = apply_scaler(x, fit_scaler(records))
    varying = x.std(axis=0) > 0
    assert np.all(np.abs(z[:, varying].mean(axis=0)) < 1e-5)
    assert np.all(np.abs(z[:, varying].var(axis=0) - 1) < 1e-4)


def test_one_hot_blocks():
    train = binarize_labels(synth_generate(300, 0.5, seed=6)).records
    schema = FeatureSchema.fit(train)
    x = encode_records(train, schema, fit_scaler(train))
    vocabs = (schema.protocol_vocab, schema.service_vocab, schema.flag_vocab)
    assert x.shape[1] == schema.width == 38 + sum(len(v) for v in vocabs)
    start = 38
    for vocab in vocabs:
        k = len(vocab)
        block = x[:, start:start + k]
        assert np.array_equal(block.sum(axis=1), np.ones(len(train)))
        assert set(np.unique(block)) <= {0.0, 1.0}
        start += k
    unseen = train[0].__class__(train[0].numeric, "tcp", "never_seen", "SF", "normal", 1)
    row = encode_records([unseen], schema, fit_scaler(train))[0]
    s0 = 38 + len(schema.protocol_vocab)
    assert row[s0:s0 + len(schema.service_vocab)].sum() == 0
    assert FeatureSchema.from_dict(schema.to_dict()) == schema


# -- windows -------------------------------------------------------------------


def brute_force_indices(n, w, s):
    return [i for i in range(n) if i >= w - 1 and (i - (w - 1)) % s == 0]


def test_window_indices_exhaustive():
    for n in range(0, 51):
        for w in range(1, 11):
            for s in range(1, 6):
                assert window_indices(n, w, s).tolist() == brute_force_indices(n, w, s), (n, w, s)


def test_window_indices_examples():
    assert window_indices(10, 5, 2).tolist() == [4, 6, 8]
    assert window_indices(5, 5, 1).tolist() == [4]
    assert window_indices(3, 5, 1).tolist() == []
    with pytest.raises(ConfigError):
        window_indices(10, 0, 1)
    with pytest.raises(ConfigError):
        window_indices(10, 2, 0)


def test_build_windows_examples():
    rows = np.arange(10, dtype=np.float32)[:, None] * np.ones((1, 3), np.float32)
    ds = build_windows(rows, np.zeros(10), 5, 2)
    assert len(ds) == 3
    assert np.array_equal(ds.x_temporal[0, :, 0], [0, 1, 2, 3, 4])
    ds1 = build_windows(rows, np.zeros(10), 1, 1)
    assert np.array_equal(ds1.x_temporal[:, 0, :], ds1.x_spatial)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_build_windows_invariants(n, w, s, seed):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, 4)).astype(np.float32)
    labels = rng.integers(0, 2, n)
    ds = build_windows(rows, labels, w, s, protocol_index=rng.integers(-1, 3, n), traffic_column=1)
    assert ds.x_temporal.shape == (len(ds), w, 4)
    assert np.array_equal(ds.x_spatial, ds.x_temporal[:, -1, :]) if len(ds) else True
    for j, i in enumerate(ds.raw_row_index):
        assert np.array_equal(ds.x_temporal[j], rows[i - w + 1:i + 1])
        assert ds.y[j] == labels[i]
        assert np.isclose(ds.aux_traffic[j], rows[i - w + 1:i + 1, 1].mean(), atol=1e-6)


def test_next_step_targets_alignment():
    rows = np.arange(10, dtype=np.float32)[:, None] * np.ones((1, 2), np.float32)
    ds = build_windows(rows, np.zeros(10), 5, 2)
    keep, targets = next_step_targets(ds, rows)
    assert keep.tolist() == [0, 1, 2]
    assert np.array_equal(targets[:, 0], ds.raw_row_index + 1)
    assert targets[2, 0] == 9


def _labelled_dataset(n_neg, n_pos):
    y = np.array([0] * n_neg + [1] * n_pos)
    rows = np.arange(len(y), dtype=np.float32)[:, None]
    return build_windows(rows, y, 1, 1)


def test_stratified_split_counts():
    ds = _labelled_dataset(80, 20)
    train, val = stratified_split(ds, SplitSpec(0.2, True, 0))
    assert val.class_counts() == {0: 16, 1: 4}
    assert len(val) == 20 and len(train) == 80
    assert np.all(np.diff(train.raw_row_index) > 0) and np.all(np.diff(val.raw_row_index) > 0)
    again = stratified_split(ds, SplitSpec(0.2, True, 0))[1]
    assert np.array_equal(again.raw_row_index, val.raw_row_index)
    with pytest.raises(ConfigError):
        SplitSpec(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(2, 60), st.floats(0.05, 0.95))
def test_split_partitions(n_neg, n_pos, fraction):
    ds = _labelled_dataset(n_neg, n_pos)
    train, val = stratified_split(ds, SplitSpec(fraction, True, 1))
    both = np.sort(np.r_[train.raw_row_index, val.raw_row_index])
    assert np.array_equal(both, np.arange(n_neg + n_pos))
    assert len(val) == int(round((n_neg + n_pos) * fraction))


# -- synthetic data ------------------------------------------------------------


def test_synth_examples():
    assert synth_generate(0) == []
    assert all(r.label in DOS_LABELS for r in synth_generate(200, 1.0, seed=1))
    assert all(r.label == "normal" for r in synth_generate(200, 0.0, seed=1))
    assert synth_generate(100, 0.5, seed=9) == synth_generate(100, 0.5, seed=9)


def _least_squares_accuracy(x, y):
    """Oracle linear classifier: least-squares fit on [x, 1], threshold at 0.5."""
    a = np.c_[x, np.ones(len(x))]
    coef, *_ = np.linalg.lstsq(a, y.astype(np.float64), rcond=None)
    return float(np.mean((a @ coef > 0.5) == (y == 1)))


def test_synth_linearly_separable_on_designated_features():
    kept = binarize_labels(synth_generate(1000, 0.5, seed=11))
    x = numeric_matrix(kept.records)
    cols = [NUMERIC_NAMES.index(name) for name in DESIGNATED_FEATURES]
    assert _least_squares_accuracy(x[:, cols], kept.labels) > 0.95


# -- containers ----------------------------------------------------------------


def test_container_layout_and_round_trip(tmp_path):
    entries = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([1.5], np.float32)}
    raw = container.encode(entries, {"kind": "test"})
    head, body = raw.split(b"\n", 1)
    header = json.loads(head)
    assert header["version"] == 1 and header["kind"] == "test"
    assert header["params"] == [{"path": "a", "shape": [2, 3], "offset": 0, "len": 6},
                                {"path": "b", "shape": [1], "offset": 24, "len": 1}]
    assert np.frombuffer(body[24:28], "<f4")[0] == 1.5
    size = container.save(tmp_path / "c.tsan", entries)
    assert size == (tmp_path / "c.tsan").stat().st_size
    back, _ = container.load(tmp_path / "c.tsan")
    assert all(np.array_equal(back[k], entries[k]) for k in entries)
    with pytest.raises(DataFormatError):
        container.decode(b"not json\n")


def test_dataset_container_round_trip(tmp_path, synth_pp):
    ds = synth_pp.test
    save_dataset(tmp_path / "t.tsan", ds)
    back = load_dataset(tmp_path / "t.tsan")
    assert isinstance(back, WindowedDataset)
    for name in ("x_temporal", "x_spatial", "y", "aux_protocol", "aux_traffic", "raw_row_index"):
        assert np.array_equal(getattr(back, name), getattr(ds, name)), name
    assert back.x_temporal.shape[1] == 5


def test_preprocess_summary_and_determinism(synth_pp):
    train = synth_generate(400, 0.5, seed=1)
    a = preprocess(train, None, 5, 2)
    b = preprocess(train, None, 5, 2)
    assert np.array_equal(a.train.x_temporal, b.train.x_temporal)
    assert synth_pp.summary["width"] == synth_pp.schema.width
    s = synth_pp.summary["train_file"]
    assert s["kept"] + s["dropped"] == s["records"]
    assert s["kept_normal"] + s["kept_dos"] == s["kept"]
