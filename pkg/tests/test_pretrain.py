import numpy as np
import pytest

from tsan import ModelConfig, PretrainConfig, build_model, container
from tsan.autodiff import ops
from tsan.data import build_windows
from tsan.errors import ContractError, ShapeError
from tsan.pretrain import (
    PretrainResult,
    load_pretrained,
    pretrain,
    pretrain_spatial,
    pretrain_temporal,
    save_pretrained,
    temporal_pairs,
    transfer_weights,
)


@pytest.fixture(scope="module")
def small(synth_pp):
    idx = np.arange(256)
    return synth_pp.train.subset(idx), synth_pp.train_rows


def _model(width, seed=0):
    return build_model(ModelConfig(), width=width, n_protocol=3, seed=seed)


def test_temporal_constant_dataset_converges():
    c = np.linspace(-1, 1, 10).astype(np.float32)
    rows = np.tile(c, (80, 1))
    ds = build_windows(rows, np.zeros(80), 5, 1)
    windows, targets, _ = temporal_pairs(ds, rows)
    model = _model(10)
    result = pretrain_temporal(model, windows, targets, PretrainConfig(epochs=50, batch=8, lr=1e-3))
    losses = result.history["temporal"]
    assert losses[-1] < 1e-3, losses[-5:]


def test_temporal_target_alignment():
    rows = np.arange(10, dtype=np.float32)[:, None] * np.ones((1, 4), np.float32)
    ds = build_windows(rows, np.zeros(10), 5, 2)
    windows, targets, target_rows = temporal_pairs(ds, rows)
    assert len(windows) == 3
    assert np.array_equal(target_rows, ds.raw_row_index + 1)
    assert target_rows.tolist() == [5, 7, 9]
    assert np.array_equal(targets[:, 0], target_rows)


def test_temporal_no_targets_raises():
    model = _model(10)
    with pytest.raises(ContractError):
        pretrain_temporal(model, np.zeros((0, 5, 10), np.float32), np.zeros((0, 10), np.float32),
                          PretrainConfig(epochs=1))


def test_epochs_zero_is_identity(small):
    ds, rows = small
    model = _model(ds.width)
    before = {k: v.copy() for k, v in model.state_dict().items()}
    result = pretrain(model, ds, rows, PretrainConfig(epochs=0))
    assert len(result) == 0
    assert transfer_weights(result, model) == []
    assert all(np.array_equal(before[k], v) for k, v in model.state_dict().items())


def test_spatial_reconstruction_improves(small):
    ds, _ = small
    result = pretrain_spatial(_model(ds.width), ds.x_spatial, PretrainConfig(epochs=5, batch=32))
    curve = result.history["spatial"]
    assert curve[-1] < curve[0]


def test_spatial_zero_dataset_zero_head_loss(small):
    ds, _ = small
    model = _model(ds.width)
    h = model.spatial_forward(np.zeros((4, ds.width), np.float32))
    recon = ops.linear(h, np.zeros((128, ds.width), np.float32), np.zeros(ds.width, np.float32))
    assert float(np.mean(recon.data ** 2)) == 0.0


def test_pretrain_does_not_touch_model_and_is_deterministic(small):
    ds, rows = small
    model = _model(ds.width)
    before = {k: v.copy() for k, v in model.state_dict().items()}
    a = pretrain(model, ds, rows, PretrainConfig(epochs=1), seed=3)
    b = pretrain(model, ds, rows, PretrainConfig(epochs=1), seed=3)
    assert all(np.array_equal(before[k], v) for k, v in model.state_dict().items())
    assert list(a.state) == list(b.state)
    assert all(np.array_equal(a.state[k], b.state[k]) for k in a.state)


def test_transfer_manifest_and_isolation(small, tmp_path):
    ds, rows = small
    model = _model(ds.width)
    result = pretrain(model, ds, rows, PretrainConfig(epochs=1))
    fresh = _model(ds.width, seed=1)
    others = {k: v.copy() for k, v in fresh.state_dict().items() if not k.startswith(("temporal.", "spatial."))}
    manifest = transfer_weights(result, fresh)
    n_encoder = sum(1 for k in fresh.state_dict() if k.startswith(("temporal.", "spatial.")))
    assert len(manifest) == n_encoder == len(fresh.encoder_paths())
    assert all(np.array_equal(others[k], fresh.state_dict()[k]) for k in others)
    fresh.save(tmp_path / "m.tsan")
    save_pretrained(tmp_path / "p.tsan", result, model)
    saved, _ = container.load(tmp_path / "m.tsan")
    loaded = load_pretrained(tmp_path / "p.tsan")
    assert all(saved[k].tobytes() == loaded.state[k].tobytes() for k in manifest)


def test_transfer_empty_and_shape_mismatch():
    model = _model(10)
    before = {k: v.copy() for k, v in model.state_dict().items()}
    assert transfer_weights(PretrainResult({}), model) == []
    assert all(np.array_equal(before[k], v) for k, v in model.state_dict().items())
    with pytest.raises(ShapeError, match="temporal.input_proj.w"):
        transfer_weights({"temporal.input_proj.w": np.zeros((3, 3))}, model)
