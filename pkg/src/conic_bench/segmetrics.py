"""Instance matching and the panoptic-quality metric family.

Matching is computed within class: a ground-truth and a predicted instance
of the same class are matched iff their pixel IoU exceeds 0.5, which makes
the match unique on both sides.  Dataset-level aggregation sums the per-class
TP/FP/FN/IoU statistics over all images before computing PQ once (the "+"
aggregation), which is deliberately different from averaging per-image PQ.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import N_CLASSES, ClassRegistry, DEFAULT_REGISTRY, LabeledInstanceGrid
from .errors import EmptyDataset, InvariantViolation, ShapeMismatch

IOU_THRESHOLD = 0.5


@dataclass
class MatchStats:
    """Per-class matching statistics; index i holds class id i+1.

    Supports associative, commutative merging with ``+`` so per-image stats
    can be reduced in any order.
    """

    tp: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES, dtype=np.int64))
    fp: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES, dtype=np.int64))
    fn: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES, dtype=np.int64))
    iou_sum: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES, dtype=float))

    def __post_init__(self):
        for name in ("tp", "fp", "fn"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (N_CLASSES,):
                raise InvariantViolation(f"{name} must have shape ({N_CLASSES},)")
            if (arr < 0).any():
                raise InvariantViolation(f"negative {name} count")
        iou = np.asarray(self.iou_sum, dtype=float)
        if (iou > self.tp + 1e-9).any():
            raise InvariantViolation("iou_sum exceeds tp (matched IoU must be <= 1)")
        if (iou < IOU_THRESHOLD * self.tp - 1e-9).any():
            raise InvariantViolation("iou_sum below 0.5*tp (matched IoU must be > 0.5)")

    def __add__(self, other: "MatchStats") -> "MatchStats":
        return MatchStats(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            iou_sum=self.iou_sum + other.iou_sum,
        )


def _instances_of(grid: LabeledInstanceGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(labels, areas, class_ids) of all instances in the grid."""
    inst = grid.instance_labels.ravel()
    cls = grid.class_labels.ravel()
    fg = inst > 0
    labels, first_idx, areas = np.unique(inst[fg], return_index=True, return_counts=True)
    class_ids = cls[fg][first_idx]
    return labels, areas, class_ids


def match_instances(gt: LabeledInstanceGrid, pred: LabeledInstanceGrid) -> MatchStats:
    """Match instances of equal class with IoU > 0.5 and tally TP/FP/FN."""
    if gt.instance_labels.shape != pred.instance_labels.shape:
        raise ShapeMismatch(
            f"gt grid {gt.instance_labels.shape} != pred grid {pred.instance_labels.shape}")

    gt_labels, gt_areas, gt_classes = _instances_of(gt)
    pr_labels, pr_areas, pr_classes = _instances_of(pred)
    gt_area = dict(zip(gt_labels.tolist(), gt_areas.tolist()))
    pr_area = dict(zip(pr_labels.tolist(), pr_areas.tolist()))
    gt_class = dict(zip(gt_labels.tolist(), gt_classes.tolist()))
    pr_class = dict(zip(pr_labels.tolist(), pr_classes.tolist()))

    # Count co-occurring (gt label, pred label) pixel pairs in one pass.
    gi = gt.instance_labels.ravel().astype(np.int64)
    pi = pred.instance_labels.ravel().astype(np.int64)
    both = (gi > 0) & (pi > 0)
    offset = pi.max() + 1 if pi.size else 1
    pair_keys, inter = np.unique(gi[both] * offset + pi[both], return_counts=True)

    stats = MatchStats()
    matched_gt: set[int] = set()
    matched_pr: set[int] = set()
    for key, inter_px in zip(pair_keys.tolist(), inter.tolist()):
        g, p = divmod(key, offset)
        if gt_class[g] != pr_class[p]:
            continue
        union = gt_area[g] + pr_area[p] - inter_px
        iou = inter_px / union
        if iou > IOU_THRESHOLD:
            t = gt_class[g] - 1
            stats.tp[t] += 1
            stats.iou_sum[t] += iou
            matched_gt.add(g)
            matched_pr.add(p)
    for g in gt_labels.tolist():
        if g not in matched_gt:
            stats.fn[gt_class[g] - 1] += 1
    for p in pr_labels.tolist():
        if p not in matched_pr:
            stats.fp[pr_class[p] - 1] += 1
    return stats


@dataclass(frozen=True)
class PqBreakdown:
    """Per-class PQ/DQ/SQ plus the dataset-level "+" averages.

    A class with tp = fp = fn = 0 is undefined: its entries are NaN and it
    is excluded from the averages (listed in ``undefined_classes``).
    """

    pq: np.ndarray
    dq: np.ndarray
    sq: np.ndarray
    defined: np.ndarray
    mpq_plus: float
    mdq_plus: float
    msq_plus: float

    def undefined_class_ids(self) -> list[int]:
        return [i + 1 for i in range(N_CLASSES) if not self.defined[i]]


def panoptic_quality(stats: MatchStats, strict: bool = False) -> PqBreakdown:
    """PQ = DQ x SQ per class from matching statistics.

    DQ = tp / (tp + fp/2 + fn/2); SQ = iou_sum / tp, defined as 0 when
    tp = 0 with detections or misses present so that PQ = 0 there.
    """
    tp = stats.tp.astype(float)
    fp = stats.fp.astype(float)
    fn = stats.fn.astype(float)
    defined = (stats.tp + stats.fp + stats.fn) > 0

    dq = np.full(N_CLASSES, np.nan)
    sq = np.full(N_CLASSES, np.nan)
    pq = np.full(N_CLASSES, np.nan)
    for i in range(N_CLASSES):
        if not defined[i]:
            continue
        dq[i] = tp[i] / (tp[i] + 0.5 * fp[i] + 0.5 * fn[i])
        sq[i] = stats.iou_sum[i] / tp[i] if stats.tp[i] > 0 else 0.0
        pq[i] = dq[i] * sq[i]

    if not defined.any():
        message = "no class has any instance in the dataset; all metrics undefined"
        if strict:
            raise EmptyDataset(message)
        warnings.warn(message)
        mpq = mdq = msq = float("nan")
    else:
        if not defined.all():
            missing = [str(i + 1) for i in range(N_CLASSES) if not defined[i]]
            message = f"classes {{{', '.join(missing)}}} absent from the whole dataset; excluded from the averages"
            if strict:
                raise EmptyDataset(message)
            warnings.warn(message)
        mpq = float(pq[defined].mean())
        mdq = float(dq[defined].mean())
        msq = float(sq[defined].mean())
    return PqBreakdown(pq=pq, dq=dq, sq=sq, defined=defined,
                       mpq_plus=mpq, mdq_plus=mdq, msq_plus=msq)


def aggregate_mpq(per_image: Sequence[MatchStats], strict: bool = False) -> PqBreakdown:
    """Sum matching statistics over all images, then compute PQ once."""
    if len(per_image) == 0:
        raise EmptyDataset("no images to aggregate")
    total = MatchStats()
    for stats in per_image:
        total = total + stats
    return panoptic_quality(total, strict=strict)


def pq_report(stats_list: Sequence[MatchStats],
              registry: ClassRegistry = DEFAULT_REGISTRY) -> dict:
    """The JSON-ready per-class metrics report."""
    total = MatchStats()
    for stats in stats_list:
        total = total + stats
    breakdown = aggregate_mpq(stats_list)

    def _opt(x: float) -> Optional[float]:
        return None if np.isnan(x) else float(x)

    classes = {}
    for i in range(N_CLASSES):
        classes[registry.name_of(i + 1)] = {
            "pq": _opt(breakdown.pq[i]),
            "dq": _opt(breakdown.dq[i]),
            "sq": _opt(breakdown.sq[i]),
            "tp": int(total.tp[i]),
            "fp": int(total.fp[i]),
            "fn": int(total.fn[i]),
        }
    return {
        "classes": classes,
        "mpq_plus": _opt(breakdown.mpq_plus),
        "mdq_plus": _opt(breakdown.mdq_plus),
        "msq_plus": _opt(breakdown.msq_plus),
        "undefined_classes": [registry.name_of(c) for c in breakdown.undefined_class_ids()],
    }


@dataclass(frozen=True)
class BootstrapResult:
    samples: np.ndarray
    mean: float
    lo: float
    hi: float


def bootstrap_metric(images: Sequence, metric: Callable[[Sequence], float],
                     n: int, seed: int) -> BootstrapResult:
    """Percentile bootstrap (2.5/97.5) of a dataset-level metric.

    Each of the ``n`` resamples draws ``len(images)`` images with
    replacement; deterministic under ``seed``.
    """
    if len(images) == 0:
        raise EmptyDataset("cannot bootstrap an empty image list")
    if n < 1:
        raise InvariantViolation("bootstrap n must be >= 1")
    rng = np.random.default_rng(seed)
    samples = np.empty(n)
    m = len(images)
    for k in range(n):
        idx = rng.integers(0, m, size=m)
        samples[k] = metric([images[i] for i in idx])
    lo, hi = np.percentile(samples, [2.5, 97.5])
    return BootstrapResult(samples=samples, mean=float(samples.mean()),
                           lo=float(lo), hi=float(hi))
