"""Downstream evaluation metrics: QWK, per-class F1/AP, Harrell's C-index."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..core import SurvivalRecord
from ..errors import InvariantViolation, LengthMismatch, NoComparablePairs


def qwk(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int | None = None) -> float:
    """Quadratic weighted kappa over ordinal labels 0..K-1.

    Returns NaN (undefined) when the expected disagreement is zero, e.g.
    when only a single label value occurs.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise LengthMismatch("y_true and y_pred must be equal-length non-empty vectors")
    if y_true.min(initial=0) < 0 or y_pred.min(initial=0) < 0:
        raise InvariantViolation("labels must be non-negative")
    k = n_classes or int(max(y_true.max(), y_pred.max())) + 1
    n = y_true.size
    observed = np.zeros((k, k))
    np.add.at(observed, (y_true, y_pred), 1.0)
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / n
    if k == 1:
        return float("nan")
    idx = np.arange(k)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (k - 1) ** 2
    denom = (weights * expected).sum()
    if denom == 0:
        return float("nan")
    return float(1.0 - (weights * observed).sum() / denom)


def _average_precision(y_bin: np.ndarray, scores: np.ndarray) -> float:
    """Step-interpolated area under the precision-recall curve.

    Sweeps distinct score thresholds in descending order; tied scores enter
    together.  Undefined (NaN) when there is no positive example.
    """
    positives = y_bin.sum()
    if positives == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    y_sorted = y_bin[order]
    s_sorted = scores[order]
    tp = np.cumsum(y_sorted)
    pred = np.arange(1, y_bin.size + 1)
    # last index of each tie group = a threshold
    boundary = np.flatnonzero(np.diff(s_sorted) != 0)
    cut = np.concatenate([boundary, [y_bin.size - 1]])
    precision = tp[cut] / pred[cut]
    recall = tp[cut] / positives
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - prev_recall) * precision).sum())


def classification_metrics(y_true: Sequence[int], probs: np.ndarray) -> dict:
    """Per-class one-vs-rest F1 and AP plus their unweighted means.

    Predicted labels are the argmax of each probability row (ties resolve to
    the lowest class id).  A class with neither true nor predicted members
    has F1 = 0 and is flagged; a class with no true members has undefined AP
    (flagged, excluded from mAP).
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] != y_true.size:
        raise LengthMismatch("probs must be (len(y_true), n_classes)")
    if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise InvariantViolation("probability rows must sum to 1")
    k = probs.shape[1]
    y_pred = probs.argmax(axis=1)

    f1 = np.zeros(k)
    ap = np.full(k, np.nan)
    absent: list[int] = []
    for c in range(k):
        true_c = y_true == c
        pred_c = y_pred == c
        tp = float(np.sum(true_c & pred_c))
        fp = float(np.sum(~true_c & pred_c))
        fn = float(np.sum(true_c & ~pred_c))
        if tp + fp + fn == 0:
            absent.append(c)  # F1 pinned to 0, flagged
        else:
            f1[c] = 2 * tp / (2 * tp + fp + fn)
        ap[c] = _average_precision(true_c.astype(float), probs[:, c])
    ap_defined = ~np.isnan(ap)
    return {
        "f1": f1,
        "ap": ap,
        "mf1": float(f1.mean()),
        "map": float(ap[ap_defined].mean()) if ap_defined.any() else float("nan"),
        "absent_classes": absent,
        "ap_undefined_classes": [c for c in range(k) if not ap_defined[c]],
    }


def c_index(risk: Sequence[float], records: Sequence[SurvivalRecord]) -> float:
    """Harrell's concordance index.

    A pair (i, j) is comparable iff time_i < time_j and patient i had the
    event; it is concordant when risk_i > risk_j, tied risks count half.
    """
    risk = np.asarray(risk, dtype=float)
    if risk.shape != (len(records),):
        raise LengthMismatch("risk vector length must match records")
    times = np.array([r.time for r in records])
    events = np.array([r.event for r in records], dtype=bool)
    comparable = (times[:, None] < times[None, :]) & events[:, None]
    n_comp = int(comparable.sum())
    if n_comp == 0:
        raise NoComparablePairs("no comparable pair under censoring")
    concordant = (risk[:, None] > risk[None, :]) & comparable
    tied = (risk[:, None] == risk[None, :]) & comparable
    return float((concordant.sum() + 0.5 * tied.sum()) / n_comp)
