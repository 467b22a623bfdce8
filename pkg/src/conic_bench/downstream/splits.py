"""Repeated cross-validation splits: 5 folds x 5 repeats, 60/20/20."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import InvariantViolation, TooFewPatients


@dataclass(frozen=True)
class CvSplit:
    """One train/valid/test partition of the patient ids."""

    repeat: int
    fold: int
    train: tuple[str, ...]
    valid: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        sets = [set(self.train), set(self.valid), set(self.test)]
        total = sum(len(s) for s in sets)
        union = set().union(*sets)
        if total != len(union):
            raise InvariantViolation("train/valid/test sets overlap")


def _fold_assignment(patients: Sequence[str], labels: Optional[Sequence[int]],
                     folds: int, rng: np.random.Generator) -> list[list[str]]:
    """Deal patients to folds; stratified dealing keeps per-label fold counts
    within one of each other while the global cursor keeps fold sizes even."""
    order = rng.permutation(len(patients))
    buckets: list[list[str]] = [[] for _ in range(folds)]
    cursor = 0
    if labels is None:
        for i in order:
            buckets[cursor % folds].append(patients[i])
            cursor += 1
    else:
        by_label: dict[int, list[int]] = {}
        for i in order:
            by_label.setdefault(labels[i], []).append(i)
        for label in sorted(by_label):
            for i in by_label[label]:
                buckets[cursor % folds].append(patients[i])
                cursor += 1
    return buckets


def make_cv_splits(patients: Sequence[str],
                   stratify_labels: Optional[Sequence[int]] = None,
                   seed: int = 0,
                   folds: int = 5,
                   repeats: int = 5) -> list[CvSplit]:
    """folds x repeats splits; within one repeat the test folds partition the
    patients, validation is the next fold, training the remaining folds."""
    patients = list(patients)
    if len(set(patients)) != len(patients):
        raise InvariantViolation("duplicate patient ids")
    if folds < 2:
        raise InvariantViolation("need at least 2 folds")
    if len(patients) < folds:
        raise TooFewPatients(f"need at least {folds} patients, got {len(patients)}")
    if stratify_labels is not None and len(stratify_labels) != len(patients):
        raise InvariantViolation("stratify_labels length differs from patients")

    splits: list[CvSplit] = []
    for repeat in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed, repeat]))
        buckets = _fold_assignment(patients, stratify_labels, folds, rng)
        for fold in range(folds):
            test = buckets[fold]
            valid = buckets[(fold + 1) % folds]
            train = [p for k in range(folds) if k not in (fold, (fold + 1) % folds)
                     for p in buckets[k]]
            splits.append(CvSplit(repeat=repeat, fold=fold,
                                  train=tuple(train), valid=tuple(valid), test=tuple(test)))
    return splits
