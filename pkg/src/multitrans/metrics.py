"""Binary-classification metrics: accuracy, F1, and AUC.

Positive class defaults to the poor outcome (label 1). AUC is the
Mann-Whitney rank statistic computed from midranks, with ties credited 0.5;
this equals the trapezoidal area under the tie-aware ROC curve.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

GOOD, POOR = 0, 1


@dataclass
class EvalReport:
    n: int
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: Optional[float]  # None when only one class is present
    roc: List[Tuple[float, float]] = field(default_factory=list)
    scores: List[float] = field(default_factory=list)


def _check_lengths(a, b):
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("empty input")


def confusion(pred, true, positive=POOR):
    _check_lengths(pred, true)
    tp = fp = tn = fn = 0
    for p, t in zip(pred, true):
        if t == positive:
            tp, fn = (tp + 1, fn) if p == positive else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if p == positive else (fp, tn + 1)
    return tp, fp, tn, fn


def accuracy(pred, true):
    _check_lengths(pred, true)
    return sum(p == t for p, t in zip(pred, true)) / len(true)


def f1(pred, true, positive=POOR):
    """Harmonic mean of precision and recall; degenerate cases are 0."""
    tp, fp, tn, fn = confusion(pred, true, positive)
    return _f1_from_counts(tp, fp, fn)


def _f1_from_counts(tp, fp, fn):
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    prec = tp / (tp + fp)
    rec = tp / (tp + fn)
    if prec + rec == 0:
        return 0.0
    return 2 * prec * rec / (prec + rec)


def auc(scores, labels, positive=POOR):
    """P(score of random positive > random negative), ties counted 0.5.

    Returns None when the labels contain only one class (undefined).
    """
    _check_lengths(scores, labels)
    labels = np.asarray([1 if y == positive else 0 for y in labels])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[order[j + 1]] == s[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = ranks[labels == 1].sum()
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_points(scores, labels, positive=POOR):
    """ROC polyline thresholded at every distinct score, descending;
    always starts at (0, 0) and ends at (1, 1)."""
    _check_lengths(scores, labels)
    lab = np.asarray([1 if y == positive else 0 for y in labels])
    n_pos = int(lab.sum())
    n_neg = len(lab) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_points: needs both classes present")
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="mergesort")
    pts = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[order[j + 1]] == s[order[i]]:
            j += 1
        for k in range(i, j + 1):
            if lab[order[k]] == 1:
                tp += 1
            else:
                fp += 1
        pts.append((fp / n_neg, tp / n_pos))
        i = j + 1
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return pts


def trapezoid_area(points):
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def report(scores, pred, true, positive=POOR) -> EvalReport:
    """Full evaluation bundle from raw P(positive) scores and hard labels."""
    _check_lengths(pred, true)
    _check_lengths(scores, true)
    tp, fp, tn, fn = confusion(pred, true, positive)
    n = len(true)
    a = auc(scores, true, positive)
    roc = roc_points(scores, true, positive) if a is not None else []
    return EvalReport(
        n=n,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        accuracy=(tp + tn) / n,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        f1=_f1_from_counts(tp, fp, fn),
        auc=a,
        roc=roc,
        scores=[float(x) for x in scores],
    )
