"""Synthetic cohort generator with planted class-dependent structure.

Grade shifts the cellular composition toward epithelial nuclei and enlarges
them; the survival variant plants a hazard that grows with epithelial
density.  Used by harness and acceptance tests.
"""
from __future__ import annotations

import math

import numpy as np

from conic_bench import NucleusRecord, SurvivalRecord

CLASS_NAMES = ("neutrophil", "epithelial", "lymphocyte", "plasma", "eosinophil", "connective")


def _octagon(cx: float, cy: float, radius: float) -> np.ndarray:
    t = np.linspace(0, 2 * math.pi, 8, endpoint=False)
    return np.stack([cx + radius * np.cos(t), cy + radius * np.sin(t)], axis=1)


def _class_probs(grade: int) -> np.ndarray:
    epithelial = 0.15 + 0.25 * grade          # planted density signal
    rest = (1.0 - epithelial) / 5.0
    probs = np.full(6, rest)
    probs[1] = epithelial
    return probs


def make_patient_nuclei(patient_id: str, grade: int, rng: np.random.Generator,
                        n_nuclei: int = 120, n_images: int = 2) -> list[NucleusRecord]:
    records = []
    probs = _class_probs(grade)
    nucleus_id = 0
    for img in range(n_images):
        image_id = f"{patient_id}_img{img}"
        count = n_nuclei // n_images
        xs = rng.uniform(0, 1500.0, size=count)
        ys = rng.uniform(0, 1500.0, size=count)
        classes = rng.choice(6, size=count, p=probs)
        for x, y, c in zip(xs, ys, classes):
            radius = rng.uniform(2.5, 4.0) + (0.8 * grade if c == 1 else 0.0)
            records.append(NucleusRecord(
                nucleus_id=nucleus_id,
                class_name=CLASS_NAMES[c],
                centroid_x_um=float(x),
                centroid_y_um=float(y),
                contour=_octagon(float(x), float(y), float(radius)),
                area_px=max(1, int(math.pi * radius * radius / 0.25)),
                image_id=image_id,
                patient_id=patient_id,
            ))
            nucleus_id += 1
    return records


def make_grading_cohort(n_patients: int, seed: int = 0, n_nuclei: int = 120):
    """(records by patient, labels by patient) with grade-linked composition."""
    rng = np.random.default_rng(seed)
    nuclei: dict[str, list[NucleusRecord]] = {}
    labels: dict[str, int] = {}
    for i in range(n_patients):
        pid = f"pat{i:04d}"
        grade = i % 3
        labels[pid] = grade
        nuclei[pid] = make_patient_nuclei(pid, grade, rng, n_nuclei=n_nuclei)
    return nuclei, labels


def make_survival_cohort(n_patients: int, seed: int = 0, n_nuclei: int = 120):
    """(records by patient, SurvivalRecord by patient) with a planted hazard
    that increases with epithelial density."""
    rng = np.random.default_rng(seed)
    nuclei: dict[str, list[NucleusRecord]] = {}
    survival: dict[str, SurvivalRecord] = {}
    for i in range(n_patients):
        pid = f"pat{i:04d}"
        grade = i % 3
        nuclei[pid] = make_patient_nuclei(pid, grade, rng, n_nuclei=n_nuclei)
        epithelial_share = np.mean([r.class_name == "epithelial" for r in nuclei[pid]])
        hazard = math.exp(3.0 * epithelial_share)
        time = float(rng.exponential(365.0 / hazard)) + 1.0
        event = bool(rng.random() < 0.75)
        survival[pid] = SurvivalRecord(pid, time, event)
    return nuclei, survival
