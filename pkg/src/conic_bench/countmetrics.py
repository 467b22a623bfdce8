"""Cellular-composition counting and the regression metric family.

Counting follows the majority rule: a nucleus contributes to its class count
iff strictly more than half of its pixels fall inside the (by default,
central 224x224) crop.  The regression metrics compare predicted and true
per-class counts across images: R^2, MAE and MAAPE per class plus their
unweighted class means.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ClassRegistry, DEFAULT_REGISTRY, N_CLASSES, ClassCounts, LabeledInstanceGrid
from .errors import CropOutOfBounds, ShapeMismatch, TooFewImages


@dataclass(frozen=True)
class CropSpec:
    """A centered crop; the challenge convention is 224x224 inside 256x256."""

    height: int = 224
    width: int = 224

    def bounds(self, grid_height: int, grid_width: int) -> tuple[int, int, int, int]:
        if self.height > grid_height or self.width > grid_width:
            raise CropOutOfBounds(
                f"crop {self.height}x{self.width} does not fit in grid {grid_height}x{grid_width}")
        top = (grid_height - self.height) // 2
        left = (grid_width - self.width) // 2
        return top, top + self.height, left, left + self.width


def counts_from_segmentation(grid: LabeledInstanceGrid,
                             crop: Optional[CropSpec] = None,
                             image_id: str = "",
                             registry: ClassRegistry = DEFAULT_REGISTRY) -> ClassCounts:
    """Count nuclei whose pixel majority lies inside the central crop."""
    crop = crop or CropSpec()
    top, bottom, left, right = crop.bounds(grid.height, grid.width)

    inst = grid.instance_labels
    inside = np.zeros_like(inst, dtype=bool)
    inside[top:bottom, left:right] = True

    fg = inst > 0
    labels = inst[fg]
    counts = np.zeros(N_CLASSES, dtype=np.int64)
    if labels.size:
        total = np.bincount(labels.ravel())
        inner = np.bincount(inst[fg & inside].ravel(), minlength=total.size)
        cls_flat = grid.class_labels[fg]
        uniq, first_idx = np.unique(labels, return_index=True)
        for lab, cls in zip(uniq.tolist(), cls_flat[first_idx].tolist()):
            if 2 * inner[lab] > total[lab]:
                counts[cls - 1] += 1
    return ClassCounts(
        counts={registry.name_of(i + 1): int(counts[i]) for i in range(N_CLASSES)},
        image_id=image_id,
    )


@dataclass(frozen=True)
class CompositionReport:
    """Per-class regression metrics over an image axis.

    Undefined entries are NaN: R^2 when the class's true counts are constant
    (TSS = 0), MAAPE when every element of the class was skipped (truth and
    prediction both zero).  The m-variants average defined classes only.
    """

    r2: np.ndarray
    mae: np.ndarray
    maape: np.ndarray
    mr2: float
    mmae: float
    mmaape: float
    r2_defined: np.ndarray
    maape_defined: np.ndarray
    maape_skipped: np.ndarray  # per class: elements with truth = pred = 0

    def to_json(self, registry: ClassRegistry = DEFAULT_REGISTRY) -> dict:
        def _opt(x: float):
            return None if np.isnan(x) else float(x)

        classes = {}
        for i in range(N_CLASSES):
            classes[registry.name_of(i + 1)] = {
                "r2": _opt(self.r2[i]),
                "mae": float(self.mae[i]),
                "maape": _opt(self.maape[i]),
                "maape_skipped_elements": int(self.maape_skipped[i]),
            }
        return {
            "classes": classes,
            "mr2": _opt(self.mr2),
            "mmae": _opt(self.mmae),
            "mmaape": _opt(self.mmaape),
            "r2_undefined_classes": [registry.name_of(i + 1)
                                     for i in range(N_CLASSES) if not self.r2_defined[i]],
            "zero_truth_convention": "maape element skipped when truth=pred=0, pi/2 when truth=0 and pred!=0",
        }


def composition_metrics(pred: np.ndarray, truth: np.ndarray) -> CompositionReport:
    """R^2, MAE and MAAPE per class over the image axis.

    R^2_t = 1 - RSS_t / TSS_t with RSS the squared-residual sum and TSS the
    total sum of squares about the class mean.  MAAPE elements are
    arctan(|truth - pred| / |truth|); a zero truth contributes pi/2 when the
    prediction is nonzero and is skipped (flagged) when both are zero.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"pred {pred.shape} != truth {truth.shape}")
    if pred.ndim != 2 or pred.shape[1] != N_CLASSES:
        raise ShapeMismatch(f"count matrices must be (images, {N_CLASSES})")
    n_images = pred.shape[0]
    if n_images < 2:
        raise TooFewImages("composition metrics need at least 2 images")

    resid = truth - pred
    rss = (resid ** 2).sum(axis=0)
    tss = ((truth - truth.mean(axis=0)) ** 2).sum(axis=0)
    r2_defined = tss > 0
    r2 = np.full(N_CLASSES, np.nan)
    r2[r2_defined] = 1.0 - rss[r2_defined] / tss[r2_defined]

    mae = np.abs(resid).mean(axis=0)

    abs_err = np.abs(resid)
    zero_truth = truth == 0
    skipped = zero_truth & (pred == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        elem = np.arctan(abs_err / np.abs(truth))
    elem[zero_truth & (pred != 0)] = np.pi / 2
    elem[skipped] = 0.0
    used = (~skipped).sum(axis=0)
    maape_defined = used > 0
    maape = np.full(N_CLASSES, np.nan)
    maape[maape_defined] = elem.sum(axis=0)[maape_defined] / used[maape_defined]

    def _mean_defined(values: np.ndarray, defined: np.ndarray) -> float:
        return float(values[defined].mean()) if defined.any() else float("nan")

    return CompositionReport(
        r2=r2, mae=mae, maape=maape,
        mr2=_mean_defined(r2, r2_defined),
        mmae=float(mae.mean()),
        mmaape=_mean_defined(maape, maape_defined),
        r2_defined=r2_defined,
        maape_defined=maape_defined,
        maape_skipped=skipped.sum(axis=0).astype(np.int64),
    )
