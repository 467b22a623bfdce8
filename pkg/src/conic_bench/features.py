"""Assembly of the canonical 222-entry patient feature vector."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import NucleusRecord, PatientFeatureVector
from .errors import IdMismatch
from .morphology import aggregate_morphology, morphology_from_contour
from .spatial import DEFAULT_RADII_UM, colocalisation_features, density_features


def patient_feature_vector(patient_id: str,
                           nuclei: Sequence[NucleusRecord],
                           radii_um: Sequence[float] = DEFAULT_RADII_UM,
                           threads: int = 1,
                           clinical: dict | None = None) -> PatientFeatureVector:
    """Morphology (0-71) + colocalisation (72-215) + density (216-221)
    for one patient, pooling nuclei across all of the patient's images."""
    for rec in nuclei:
        if rec.patient_id != patient_id:
            raise IdMismatch(
                f"nucleus {rec.nucleus_id} belongs to {rec.patient_id!r}, not {patient_id!r}")
    morph = aggregate_morphology(
        [rec.class_name for rec in nuclei],
        [morphology_from_contour(rec.contour) for rec in nuclei],
    )
    coloc = colocalisation_features(nuclei, radii_um=radii_um, threads=threads)
    density = density_features(nuclei)
    values = np.concatenate([morph, coloc, density])
    return PatientFeatureVector(
        patient_id=patient_id,
        values=values,
        missing_mask=np.isnan(values),
        clinical=clinical,
    )
