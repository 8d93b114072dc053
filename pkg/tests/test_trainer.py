import numpy as np
import pytest

from tsan import LossWeights, ModelConfig, PretrainConfig, TrainConfig, build_model
from tsan.autodiff import Tape
from tsan.errors import ConfigError, ContractError
from tsan.objective import compute_losses
from tsan import trainer
from tsan.trainer import (
    ABLATION_LABELS,
    ABLATION_VARIANTS,
    Batchable,
    EarlyStopping,
    gradcheck,
    prepare,
    score,
    train,
    variant_configs,
)


@pytest.fixture(scope="module")
def sets(synth_pp):
    model = build_model(ModelConfig(), width=synth_pp.train.width, seed=0)
    n_protocol = model.config.n_protocol
    return (prepare(synth_pp.train, n_protocol, 0.5, 0), prepare(synth_pp.validation, n_protocol, 0.0, 0),
            model.config)


def test_early_stopping_sequence():
    stop = EarlyStopping(patience=2)
    decisions = [stop.update(e, acc, f"state{e}") for e, acc in enumerate([0.8, 0.9, 0.85, 0.85], start=1)]
    assert decisions == [False, False, False, True]
    assert stop.best_epoch == 2 and stop.best_state == "state2"
    never = EarlyStopping(patience=None)
    assert not any(never.update(e, 0.5) for e in range(1, 50))


def test_equal_accuracy_is_not_improvement():
    stop = EarlyStopping(patience=1)
    stop.update(1, 0.9)
    assert stop.update(2, 0.9)
    assert stop.best_epoch == 1


def test_train_reaches_high_validation_accuracy_and_restores_best(sets):
    train_set, val_set, cfg = sets
    model = build_model(cfg, seed=0)
    result = train(model, train_set, val_set, TrainConfig(max_epochs=5), seed=0)
    assert max(r["val_accuracy"] for r in result.history) > 0.95
    acc = float(np.mean((score(model, val_set.data) > 0.5) == (val_set.data.y == 1)))
    assert acc == result.best_val_accuracy == max(r["val_accuracy"] for r in result.history)
    assert len(result.history) <= 5
    assert set(result.history[0]) == set(trainer.HISTORY_FIELDS)


def test_train_is_deterministic(sets):
    train_set, val_set, cfg = sets
    runs = [train(build_model(cfg, seed=4), train_set, val_set, TrainConfig(max_epochs=2, patience=None), 4)
            for _ in range(2)]
    assert runs[0].history == runs[1].history


def test_each_window_used_once_per_epoch(sets, monkeypatch):
    train_set, _, cfg = sets
    seen = []
    original = Batchable.batch

    def spy(self, idx):
        seen.extend(np.asarray(idx).tolist())
        return original(self, idx)

    monkeypatch.setattr(Batchable, "batch", spy)
    train(build_model(cfg, seed=0), train_set, None, TrainConfig(max_epochs=2, batch=100), 0)
    n = len(train_set)
    assert sorted(seen[:n]) == list(range(n))
    assert sorted(seen[n:]) == list(range(n))


def test_training_loss_decreases_for_most_seeds(sets):
    train_set, _, cfg = sets
    ok = 0
    for seed in range(5):
        h = train(build_model(cfg, seed=seed), train_set, None, TrainConfig(max_epochs=3), seed).history
        totals = [r["l_total"] for r in h]
        ok += totals[0] > totals[1] > totals[2]
    assert ok >= 4


def test_train_errors(sets):
    train_set, _, cfg = sets
    with pytest.raises(ContractError):
        train(build_model(cfg), Batchable(train_set.data.subset([]), train_set.aux.subset([])), None,
              TrainConfig(max_epochs=1))
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)


# -- ablations -------------------------------------------------------------------


def test_variant_configs():
    m, t, p = ModelConfig(), TrainConfig(), PretrainConfig()
    assert variant_configs("full", m, t, p) == (m, t, p)
    assert variant_configs("no_temporal", m, t, p)[0].use_temporal is False
    assert variant_configs("no_spatial", m, t, p)[0].use_spatial is False
    assert variant_configs("no_cross_attention", m, t, p)[0].fusion == "concat"
    assert variant_configs("no_pretrain", m, t, p)[2].epochs == 0
    nm = variant_configs("no_multitask", m, t, p)
    full_zero_aux = (m, TrainConfig(loss=LossWeights(1.0, 0.0, 0.0, 0.0)), p)
    assert nm == full_zero_aux
    with pytest.raises(ConfigError, match="unknown ablation variant"):
        variant_configs("no_heads", m, t, p)
    assert list(ABLATION_LABELS) == list(ABLATION_VARIANTS) and len(ABLATION_VARIANTS) == 6


def test_no_multitask_aux_heads_get_zero_gradient(sets):
    train_set, _, cfg = sets
    _, t, _ = variant_configs("no_multitask", cfg, TrainConfig(), PretrainConfig())
    model = build_model(cfg, seed=0)
    ds, aux = train_set.batch(np.arange(16))
    with Tape() as tape:
        out = model.forward(ds.x_temporal, ds.x_spatial, training=True, rng=np.random.default_rng(0))
        loss = compute_losses(out, ds.y, aux, t.loss).l_total
    tape.backward(loss, model.parameters())
    for head in ("traffic", "protocol", "consistency"):
        assert not np.any(model[f"heads.{head}.w"].grad) and not np.any(model[f"heads.{head}.b"].grad)


# -- gradcheck -------------------------------------------------------------------


def _batch(sets, n=4):
    train_set, _, cfg = sets
    ds, aux = train_set.batch(np.arange(n))
    return Batchable(ds, aux), cfg


def test_gradcheck_passes_on_fresh_model(sets):
    batch, cfg = _batch(sets)
    report = gradcheck(build_model(cfg, seed=0), batch, sample_count=50)
    assert report.passed, report.failures
    assert report.max_rel_error < 1e-3 and len(report.checked) == 50


def test_gradcheck_empty():
    report = gradcheck(None, None, sample_count=0)
    assert report.passed and report.checked == []


def test_gradcheck_fault_injection(sets, monkeypatch):
    batch, cfg = _batch(sets)
    original = trainer._analytic_gradients
    target = "heads.main.b"

    def corrupted(*args):
        grads = original(*args)
        grads[target] = -grads[target]
        return grads

    monkeypatch.setattr(trainer, "_analytic_gradients", corrupted)
    report = gradcheck(build_model(cfg, seed=0), batch, sample_count=200, seed=1)
    assert not report.passed
    assert target in report.failures
