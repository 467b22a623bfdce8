"""Shared domain types, the nucleus class registry, and the canonical
feature-name catalogue.

The catalogue order is the persistence contract for every feature matrix
written or read by this package: 222 entries, ids 0-221, grouped as
morphology (0-71), colocalisation (72-215) and density (216-221).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np
from shapely.geometry import Polygon

from .errors import InvariantViolation

N_CLASSES = 6
N_FEATURES = 222

# Numeric ids as stored in class-label grids and tables. 0 is background.
DEFAULT_CLASS_NAMES: tuple[str, ...] = (
    "neutrophil",
    "epithelial",
    "lymphocyte",
    "plasma",
    "eosinophil",
    "connective",
)

# Alphabetical order used by the feature catalogue (morphology blocks,
# colocalisation centers, density entries).
ALPHA_CLASS_NAMES: tuple[str, ...] = (
    "connective",
    "eosinophil",
    "epithelial",
    "lymphocyte",
    "neutrophil",
    "plasma",
)

MORPHOLOGY_IDS = range(0, 72)
COLOCALISATION_IDS = range(72, 216)
DENSITY_IDS = range(216, 222)

FEATURE_SET_IDS: dict[str, tuple[int, ...]] = {
    "Dm": tuple(MORPHOLOGY_IDS),
    "Dc": tuple(COLOCALISATION_IDS),
    "Dd": tuple(DENSITY_IDS),
    "D": tuple(range(N_FEATURES)),
}


@dataclass(frozen=True)
class ClassRegistry:
    """Pinned bijection between class ids 1..6 and class names.

    The numeric convention is configurable (config file) because upstream
    label dumps do not all agree on one; the default is the mapping used
    throughout this package's own file formats.
    """

    names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        if len(self.names) != N_CLASSES:
            raise InvariantViolation(f"registry needs exactly {N_CLASSES} classes, got {len(self.names)}")
        if sorted(self.names) != sorted(ALPHA_CLASS_NAMES):
            raise InvariantViolation(f"registry names must be a permutation of {sorted(ALPHA_CLASS_NAMES)}")

    def id_of(self, name: str) -> int:
        return self.names.index(name) + 1

    def name_of(self, class_id: int) -> str:
        if not 1 <= class_id <= N_CLASSES:
            raise InvariantViolation(f"class id {class_id} outside 1..{N_CLASSES}")
        return self.names[class_id - 1]

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(range(1, N_CLASSES + 1))


DEFAULT_REGISTRY = ClassRegistry()


def _capit(name: str) -> str:
    return name.capitalize()


def _article(name: str) -> str:
    return "an" if name[0] in "aeiou" else "a"


@lru_cache(maxsize=1)
def _feature_names() -> tuple[str, ...]:
    names: list[str] = []
    # Morphology: per class (alphabetical), six stats, avg/var pairs.  The
    # upstream catalogue labels both axis pairs "minor axis length"; the
    # second pair carries the major axis.  We reproduce the labels verbatim
    # because the name list is a persistence contract.
    morph_stats = ("area", "eccentricity", "perimeter",
                   "minor axis length", "minor axis length", "BAM")
    for cls in ALPHA_CLASS_NAMES:
        for stat in morph_stats:
            names.append(f"Average {_capit(cls)}'s {stat}")
            names.append(f"Variation in {_capit(cls)}'s {stat}")
    # Colocalisation: radius block (200 then 400), center class alphabetical,
    # neighbor class in registry-id order, avg/var pairs.
    for radius in (200, 400):
        for center in ALPHA_CLASS_NAMES:
            art = _article(center)
            for neighbor in DEFAULT_CLASS_NAMES:
                tail = (f"# {_capit(neighbor)} within {radius}um radius "
                        f"of {art} {_capit(center)} nucleus")
                names.append(f"Average {tail}")
                names.append(f"Variation in {tail}")
    # Density: one share per class, alphabetical.
    for cls in ALPHA_CLASS_NAMES:
        names.append(f"{_capit(cls)} cellular composition")
    assert len(names) == N_FEATURES
    return tuple(names)


def canonical_feature_names() -> list[str]:
    """The 222 canonical feature names in id order (ids 0-221)."""
    return list(_feature_names())


def feature_category(feature_id: int) -> str:
    if feature_id in MORPHOLOGY_IDS:
        return "Morphology"
    if feature_id in COLOCALISATION_IDS:
        return "Colocalisation"
    if feature_id in DENSITY_IDS:
        return "Density"
    raise InvariantViolation(f"feature id {feature_id} outside 0..{N_FEATURES - 1}")


@dataclass(frozen=True)
class LabeledInstanceGrid:
    """One image patch: an instance-label grid paired with a class-label grid.

    ``instance_labels`` uses 0 for background and equal positive labels for
    the pixels of one nucleus.  ``class_labels`` holds 0 on background and
    the nucleus class id (1..6) elsewhere; all pixels of one instance must
    agree on the class.
    """

    instance_labels: np.ndarray
    class_labels: np.ndarray
    mpp: float

    def __post_init__(self):
        inst = np.asarray(self.instance_labels)
        cls = np.asarray(self.class_labels)
        if inst.ndim != 2 or cls.ndim != 2:
            raise InvariantViolation("label grids must be 2-D")
        if inst.shape != cls.shape:
            raise InvariantViolation(f"instance grid {inst.shape} != class grid {cls.shape}")
        if not self.mpp > 0:
            raise InvariantViolation(f"mpp must be positive, got {self.mpp}")
        if inst.size and inst.min() < 0:
            raise InvariantViolation("negative instance label")
        fg = inst > 0
        if np.any((cls[fg] < 1) | (cls[fg] > N_CLASSES)):
            raise InvariantViolation("foreground pixel with class label outside 1..6")
        if np.any(cls[~fg] != 0):
            raise InvariantViolation("background pixel with nonzero class label")
        # One instance label may not span two class labels.
        labels = inst[fg].ravel()
        classes = cls[fg].ravel()
        if labels.size:
            order = np.argsort(labels, kind="stable")
            lab_s, cls_s = labels[order], classes[order]
            boundary = np.flatnonzero(np.diff(lab_s)) + 1
            for seg in np.split(cls_s, boundary):
                if seg.size and (seg != seg[0]).any():
                    raise InvariantViolation("instance label spans multiple class labels")
        object.__setattr__(self, "instance_labels", inst)
        object.__setattr__(self, "class_labels", cls)

    @property
    def height(self) -> int:
        return self.instance_labels.shape[0]

    @property
    def width(self) -> int:
        return self.instance_labels.shape[1]


def _is_simple_polygon(contour: np.ndarray) -> bool:
    try:
        poly = Polygon(contour)
    except Exception:
        return False
    return poly.is_valid and poly.area > 0


@dataclass(frozen=True)
class NucleusRecord:
    """One detected nucleus with its centroid and contour in microns."""

    nucleus_id: int
    class_name: str
    centroid_x_um: float
    centroid_y_um: float
    contour: np.ndarray  # (n, 2) vertices in microns
    area_px: int
    image_id: str
    patient_id: str

    def __post_init__(self):
        contour = np.asarray(self.contour, dtype=float)
        if contour.ndim != 2 or contour.shape[1] != 2 or contour.shape[0] < 3:
            raise InvariantViolation(
                f"nucleus {self.nucleus_id}: contour needs >= 3 (x, y) vertices")
        if not np.isfinite(contour).all():
            raise InvariantViolation(f"nucleus {self.nucleus_id}: non-finite contour vertex")
        if not _is_simple_polygon(contour):
            raise InvariantViolation(
                f"nucleus {self.nucleus_id}: contour is degenerate or self-intersecting")
        if self.area_px < 1:
            raise InvariantViolation(f"nucleus {self.nucleus_id}: area_px must be >= 1")
        if self.class_name not in ALPHA_CLASS_NAMES:
            raise InvariantViolation(f"nucleus {self.nucleus_id}: unknown class {self.class_name!r}")
        object.__setattr__(self, "contour", contour)


@dataclass(frozen=True)
class ClassCounts:
    """Per-class nucleus counts for one image."""

    counts: Mapping[str, int]
    image_id: str

    def __post_init__(self):
        missing = set(ALPHA_CLASS_NAMES) - set(self.counts)
        if missing:
            raise InvariantViolation(f"{self.image_id}: counts missing classes {sorted(missing)}")
        extra = set(self.counts) - set(ALPHA_CLASS_NAMES)
        if extra:
            raise InvariantViolation(f"{self.image_id}: unknown classes {sorted(extra)}")
        for name, value in self.counts.items():
            if value < 0:
                raise InvariantViolation(f"{self.image_id}: negative count for {name}")
        object.__setattr__(self, "counts", dict(self.counts))

    def as_vector(self, registry: ClassRegistry = DEFAULT_REGISTRY) -> np.ndarray:
        """Counts as a length-6 vector in registry id order."""
        return np.array([self.counts[registry.name_of(i)] for i in registry.ids], dtype=np.int64)


@dataclass(frozen=True)
class PatientFeatureVector:
    """The canonical 222-entry feature vector for one patient.

    Missing entries (e.g. no nuclei of a class) are NaN in ``values`` and
    True in ``missing_mask``.
    """

    patient_id: str
    values: np.ndarray
    missing_mask: np.ndarray
    clinical: Optional[dict] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.missing_mask, dtype=bool)
        if values.shape != (N_FEATURES,) or mask.shape != (N_FEATURES,):
            raise InvariantViolation(
                f"{self.patient_id}: feature vector must have exactly {N_FEATURES} entries")
        if not (np.isnan(values) == mask).all():
            raise InvariantViolation(f"{self.patient_id}: missing_mask disagrees with NaN entries")
        density = values[list(DENSITY_IDS)]
        if not np.isnan(density).all():
            if np.isnan(density).any():
                raise InvariantViolation(f"{self.patient_id}: density entries must be all present or all missing")
            if (density < -1e-9).any() or (density > 1 + 1e-9).any():
                raise InvariantViolation(f"{self.patient_id}: density entry outside [0, 1]")
            if abs(density.sum() - 1.0) > 1e-9:
                raise InvariantViolation(f"{self.patient_id}: density entries must sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)


@dataclass(frozen=True)
class SurvivalRecord:
    """Observed or censored survival time for one patient."""

    patient_id: str
    time: float  # days
    event: bool  # True = event observed, False = censored

    def __post_init__(self):
        if not self.time > 0:
            raise InvariantViolation(f"{self.patient_id}: survival time must be positive")
