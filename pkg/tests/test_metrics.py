"""Metric tests anchored on brute-force oracles written independently of the
library code: O(n^2) pairwise AUC and direct confusion-matrix counting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multitrans import metrics


def _pairwise_auc(scores, labels):
    """O(n^2) oracle: fraction of (pos, neg) pairs ranked correctly, ties 0.5."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    if not pos or not neg:
        return None
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (len(pos) * len(neg))


def _counted_f1(pred, true):
    tp = sum(1 for p, t in zip(pred, true) if p == 1 and t == 1)
    fp = sum(1 for p, t in zip(pred, true) if p == 1 and t == 0)
    fn = sum(1 for p, t in zip(pred, true) if p == 0 and t == 1)
    if tp == 0:
        return 0.0
    prec, rec = tp / (tp + fp), tp / (tp + fn)
    return 2 * prec * rec / (prec + rec)


def test_auc_frozen_values():
    # perfect ranking, perfect inversion, all tied
    assert metrics.auc([0.1, 0.9], [0, 1]) == 1.0
    assert metrics.auc([0.9, 0.1], [0, 1]) == 0.0
    assert metrics.auc([0.5, 0.5, 0.5], [0, 1, 0]) == 0.5
    # hand-computed mixed case: pairs (.8>.3)=1, (.8>.6)=1, (.4>.3)=1, (.4<.6)=0
    assert metrics.auc([0.3, 0.8, 0.6, 0.4], [0, 1, 0, 1]) == 0.75


def test_auc_matches_pairwise_oracle_100_instances():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, size=n).tolist()
        # quantized scores force plenty of ties
        scores = np.round(rng.random(n), 2).tolist()
        assert metrics.auc(scores, labels) == pytest.approx(
            _pairwise_auc(scores, labels), abs=0
        ) or (metrics.auc(scores, labels) is None and _pairwise_auc(scores, labels) is None)


def test_auc_single_class_undefined():
    assert metrics.auc([0.2, 0.8], [1, 1]) is None
    assert metrics.auc([0.2, 0.8], [0, 0]) is None


def test_f1_acc_match_confusion_oracles_100_instances():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(1, 60))
        pred = rng.integers(0, 2, size=n).tolist()
        true = rng.integers(0, 2, size=n).tolist()
        assert metrics.f1(pred, true) == pytest.approx(_counted_f1(pred, true), abs=1e-12)
        assert metrics.accuracy(pred, true) == pytest.approx(
            sum(p == t for p, t in zip(pred, true)) / n, abs=0
        )


def test_confusion_counts():
    pred = [1, 1, 0, 0, 1]
    true = [1, 0, 0, 1, 1]
    assert metrics.confusion(pred, true) == (2, 1, 1, 1)  # tp fp tn fn


def test_f1_degenerate_cases():
    assert metrics.f1([0, 0], [1, 1]) == 0.0  # no positive predictions
    assert metrics.f1([1, 1], [0, 0]) == 0.0  # no positive truths


def test_roc_trapezoid_equals_auc():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(4, 80))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.random(n), 1)
        pts = metrics.roc_points(scores.tolist(), labels.tolist())
        assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
        area = metrics.trapezoid_area(pts)
        assert area == pytest.approx(metrics.auc(scores.tolist(), labels.tolist()), abs=1e-12)


def test_report_bundle():
    rep = metrics.report([0.9, 0.2, 0.7, 0.4], [1, 0, 1, 0], [1, 0, 0, 0])
    assert rep.n == 4
    assert (rep.tp, rep.fp, rep.tn, rep.fn) == (1, 1, 2, 0)
    assert rep.accuracy == 0.75
    assert rep.auc == pytest.approx(_pairwise_auc([0.9, 0.2, 0.7, 0.4], [1, 0, 0, 0]))
    assert rep.roc  # both classes present -> curve populated


def test_length_validation():
    with pytest.raises(ValueError):
        metrics.accuracy([1], [1, 0])
    with pytest.raises(ValueError):
        metrics.auc([], [])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 1), st.floats(0, 1, allow_nan=False)),
        min_size=2,
        max_size=40,
    )
)
def test_auc_complement_symmetry(pairs):
    """Negating scores flips AUC to 1 - AUC (when defined)."""
    labels = [y for y, _ in pairs]
    scores = [s for _, s in pairs]
    a = metrics.auc(scores, labels)
    if a is None:
        return
    b = metrics.auc([-s for s in scores], labels)
    assert b == pytest.approx(1.0 - a, abs=1e-12)
