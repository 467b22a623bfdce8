"""Permutation importance and the median selection rule."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import WidthMismatch
from .gbt import GbtModel, predict


def permutation_importance(model: GbtModel, features: np.ndarray, targets,
                           metric: Callable, n_perm: int = 5, seed: int = 0) -> np.ndarray:
    """Per-feature drop of a higher-is-better metric under column shuffling.

    importance(f) = baseline - mean over ``n_perm`` independent shuffles of
    column f (other columns untouched).  Columns the model never splits on
    are exactly 0 (predictions cannot change), so they are skipped.  Each
    feature uses its own seed stream, making the result independent of the
    evaluation order.
    """
    X = np.asarray(features, dtype=float)
    baseline = metric(targets, predict(model, X))
    importances = np.zeros(X.shape[1])
    work = X.copy()
    for f in range(X.shape[1]):
        if f not in model.features_used:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, f]))
        saved = work[:, f].copy()
        drops = np.empty(n_perm)
        for p in range(n_perm):
            work[:, f] = saved[rng.permutation(X.shape[0])]
            drops[p] = baseline - metric(targets, predict(model, work))
        work[:, f] = saved
        importances[f] = drops.mean()
    return importances


@dataclass(frozen=True)
class ImportanceReport:
    """Aggregated importances with the strictly-greater-than-median rule."""

    aggregated_mean: np.ndarray
    median: float
    selected: np.ndarray  # boolean mask
    degenerate: bool      # nothing exceeded the median

    @property
    def selected_ids(self) -> list[int]:
        return np.flatnonzero(self.selected).tolist()

    def to_json(self) -> dict:
        return {
            "aggregated_mean": [float(v) for v in self.aggregated_mean],
            "median": float(self.median),
            "selected_ids": self.selected_ids,
            "degenerate": self.degenerate,
        }


def select_features(importances: Sequence[np.ndarray]) -> ImportanceReport:
    """Mean importance over the split vectors, then keep features strictly
    above the median; ties at the median are excluded."""
    if not importances:
        raise WidthMismatch("no importance vectors supplied")
    width = len(importances[0])
    stacked = []
    for vec in importances:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (width,):
            raise WidthMismatch(f"importance vector of width {vec.shape} != ({width},)")
        stacked.append(vec)
    aggregated = np.stack(stacked).mean(axis=0)
    median = float(np.median(aggregated))
    selected = aggregated > median
    return ImportanceReport(
        aggregated_mean=aggregated,
        median=median,
        selected=selected,
        degenerate=not selected.any(),
    )
