import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsan import ModelConfig, build_model
from tsan.errors import ContractError
from tsan.metrics import (
    REFERENCE_RESULTS,
    auc_roc,
    confusion_and_prf1,
    confusion_from_counts,
    evaluate_scores,
    measure_timing,
    roc_points,
    trapezoid_area,
    write_report,
)


def pairwise_auc(scores, labels):
    """O(n^2) oracle: P(score_pos > score_neg) with ties worth 1/2."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def _instance(rng):
    n = int(rng.integers(2, 201))
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    # coarse grid forces ties
    scores = rng.integers(0, int(rng.integers(2, 30)), n) / 10.0
    return scores, labels


def test_auc_matches_pairwise_oracle_exactly():
    rng = np.random.default_rng(0)
    for _ in range(100):
        scores, labels = _instance(rng)
        auc, points = auc_roc(scores, labels)
        assert auc == pairwise_auc(scores, labels)
        assert np.isclose(trapezoid_area(points), auc, atol=1e-12)


def test_auc_examples():
    assert auc_roc([0.9, 0.8, 0.1], [1, 1, 0])[0] == 1.0
    assert auc_roc([0.5, 0.5], [1, 0])[0] == 0.5
    assert auc_roc([0.9, 0.4, 0.6, 0.2], [1, 0, 1, 0])[0] == 1.0
    assert auc_roc([0.9, 0.6, 0.4, 0.2], [1, 0, 1, 0])[0] == 0.75
    with pytest.raises(ContractError):
        auc_roc([0.1, 0.2], [1, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_transform_invariance_and_label_flip(seed):
    scores, labels = _instance(np.random.default_rng(seed))
    auc = auc_roc(scores, labels)[0]
    assert np.isclose(auc_roc(np.exp(3 * scores) + 1, labels)[0], auc, atol=1e-12)
    assert np.isclose(auc_roc(scores, 1 - labels)[0], 1 - auc, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_roc_monotone_and_best_point(seed):
    scores, labels = _instance(np.random.default_rng(seed))
    pts = np.asarray(roc_points(scores, labels))
    assert tuple(pts[0]) == (0.0, 0.0) and np.allclose(pts[-1], (1.0, 1.0))
    assert np.all(np.diff(pts[:, 0]) >= 0) and np.all(np.diff(pts[:, 1]) >= 0)
    n_pos, n_neg = labels.sum(), (1 - labels).sum()
    best = max((tpr * n_pos + (1 - fpr) * n_neg) / len(labels) for fpr, tpr in pts)
    assert best >= confusion_and_prf1(scores, labels, 0.5).accuracy - 1e-12


def test_prf1_examples():
    c = confusion_and_prf1([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], 0.5)
    assert (c.tp, c.tn, c.accuracy, c.f1) == (2, 2, 1.0, 1.0)
    c = confusion_from_counts(tp=9, fp=1, tn=7, fn=3)
    assert np.isclose(c.precision, 0.9) and np.isclose(c.recall, 0.75)
    assert np.isclose(c.f1, 2 * 0.9 * 0.75 / 1.65) and np.isclose(c.f1, 0.8182, atol=1e-4)
    assert c.accuracy == 16 / 20
    c = confusion_and_prf1([0.1, 0.2, 0.3], [1, 0, 1], 0.5)
    assert c.precision == 0 and c.recall == 0 and "precision_undefined" in c.flags
    with pytest.raises(ContractError):
        confusion_and_prf1([], [], 0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_confusion_identities(tp, fp, tn, fn):
    if tp + fp + tn + fn == 0:
        return
    c = confusion_from_counts(tp, fp, tn, fn)
    assert c.accuracy == (tp + tn) / (tp + fp + tn + fn)
    if c.precision + c.recall > 0:
        assert np.isclose(c.f1, 2 * c.precision * c.recall / (c.precision + c.recall))


def test_report_and_timing(tmp_path):
    model = build_model(ModelConfig(), width=20, n_protocol=3)
    size = model.save(tmp_path / "m.tsan")
    rng = np.random.default_rng(0)
    xt, xs = rng.standard_normal((10, 5, 20)), rng.standard_normal((10, 20))
    timing = measure_timing(model, xt, xs, repetitions=1, checkpoint_path=tmp_path / "m.tsan")
    assert timing.model_size_bytes == size == (tmp_path / "m.tsan").stat().st_size
    assert timing.inference_ms_per_sample > 0
    report = evaluate_scores([0.9, 0.1, 0.7], [1, 0, 1])
    report.timing = timing
    write_report(tmp_path / "r.json", report)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["accuracy"] == 1.0 and doc["reference_results"] == REFERENCE_RESULTS
    assert "auc_undefined" in evaluate_scores([0.9, 0.8], [1, 1]).flags
