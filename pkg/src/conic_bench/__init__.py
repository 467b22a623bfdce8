"""Evaluation stack for nuclear instance segmentation / cellular composition
and the downstream patient-level cell-analytics pipeline."""

from .core import (
    ALPHA_CLASS_NAMES,
    DEFAULT_CLASS_NAMES,
    DEFAULT_REGISTRY,
    FEATURE_SET_IDS,
    ClassCounts,
    ClassRegistry,
    LabeledInstanceGrid,
    NucleusRecord,
    PatientFeatureVector,
    SurvivalRecord,
    canonical_feature_names,
    feature_category,
)
from .config import RunConfig
from .countmetrics import CompositionReport, CropSpec, composition_metrics, counts_from_segmentation
from .features import patient_feature_vector
from .morphology import (
    MorphologyFeatures,
    aggregate_morphology,
    best_alignment_metric,
    morphology_from_contour,
    region_properties,
)
from .segmetrics import (
    BootstrapResult,
    MatchStats,
    PqBreakdown,
    aggregate_mpq,
    bootstrap_metric,
    match_instances,
    panoptic_quality,
    pq_report,
)
from .spatial import (
    SpatialIndex,
    colocalisation_features,
    density_features,
    neighbor_counts,
    per_image_neighbor_counts,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHA_CLASS_NAMES",
    "DEFAULT_CLASS_NAMES",
    "DEFAULT_REGISTRY",
    "FEATURE_SET_IDS",
    "BootstrapResult",
    "ClassCounts",
    "ClassRegistry",
    "CompositionReport",
    "CropSpec",
    "LabeledInstanceGrid",
    "MatchStats",
    "MorphologyFeatures",
    "NucleusRecord",
    "PatientFeatureVector",
    "PqBreakdown",
    "RunConfig",
    "SpatialIndex",
    "SurvivalRecord",
    "aggregate_morphology",
    "aggregate_mpq",
    "best_alignment_metric",
    "bootstrap_metric",
    "canonical_feature_names",
    "colocalisation_features",
    "composition_metrics",
    "counts_from_segmentation",
    "density_features",
    "feature_category",
    "match_instances",
    "morphology_from_contour",
    "neighbor_counts",
    "panoptic_quality",
    "patient_feature_vector",
    "per_image_neighbor_counts",
    "pq_report",
    "region_properties",
]
