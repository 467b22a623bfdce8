"""Per-nucleus shape features and their patient-level aggregation.

Two extraction routes share one definition of the moment-matched ellipse:

* the mask route (``region_properties`` / ``best_alignment_metric``) works on
  binary pixel sets, treating each pixel as a unit square (uniform density),
  hence the 1/12 correction on the diagonal of the covariance;
* the contour route (``morphology_from_contour``) evaluates the exact polygon
  integrals for nuclei whose only stored shape is a contour in microns.

The alignment score is the Jaccard dissimilarity between the shape and its
moment-matched ellipse: 0 for a perfect ellipse, approaching 1 for highly
irregular shapes.  The external reference defining the original score was
not available, so this concrete stand-in with the same intent is used; see
README.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np
from shapely.geometry import Polygon

from .core import ALPHA_CLASS_NAMES, N_CLASSES
from .errors import DisconnectedMask, EmptyMask, InvariantViolation

MORPH_STAT_COUNT = 6  # area, eccentricity, perimeter, minor axis, major axis, bam
_PIXEL_VAR = 1.0 / 12.0  # second moment of a unit square about its center


@dataclass(frozen=True)
class MorphologyFeatures:
    """Shape features of one nucleus, lengths in microns."""

    area_um2: float
    eccentricity: float
    perimeter_um: float
    major_axis_um: float
    minor_axis_um: float
    bam: float = float("nan")

    def __post_init__(self):
        if not (self.major_axis_um >= self.minor_axis_um > 0):
            raise InvariantViolation(
                f"axis lengths must satisfy major >= minor > 0, "
                f"got {self.major_axis_um} / {self.minor_axis_um}")
        if not 0 <= self.eccentricity < 1:
            raise InvariantViolation(f"eccentricity {self.eccentricity} outside [0, 1)")
        if not math.isnan(self.bam) and not 0 <= self.bam <= 1:
            raise InvariantViolation(f"bam {self.bam} outside [0, 1]")

    def as_vector(self) -> np.ndarray:
        """Stats in catalogue order: area, ecc, perimeter, minor, major, bam."""
        return np.array([self.area_um2, self.eccentricity, self.perimeter_um,
                         self.minor_axis_um, self.major_axis_um, self.bam])


def _as_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InvariantViolation("mask must be 2-D")
    mask = mask > 0
    if not mask.any():
        raise EmptyMask("mask has no foreground pixel")
    n_labels, _ = cv2.connectedComponents(mask.astype(np.uint8), connectivity=8)
    if n_labels > 2:
        raise DisconnectedMask(f"mask has {n_labels - 1} 8-connected components")
    return mask


def _mask_moments(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centroid (row, col) and pixel-extent-corrected covariance matrix."""
    rows, cols = np.nonzero(mask)
    pts = np.stack([rows, cols], axis=1).astype(float)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / pts.shape[0]
    cov[0, 0] += _PIXEL_VAR
    cov[1, 1] += _PIXEL_VAR
    return centroid, cov


def _axes_from_cov(cov: np.ndarray) -> tuple[float, float, float]:
    """(major_axis, minor_axis, eccentricity) of the moment-matched ellipse."""
    lam, _ = np.linalg.eigh(cov)
    lam_minor, lam_major = float(lam[0]), float(lam[1])
    major = 4.0 * math.sqrt(lam_major)
    minor = 4.0 * math.sqrt(lam_minor)
    ecc = math.sqrt(1.0 - lam_minor / lam_major)
    return major, minor, ecc


def _traced_perimeter(mask: np.ndarray) -> float:
    """Length of the traced outer contour (chain through boundary pixel
    centers, diagonal steps sqrt(2))."""
    contours, _ = cv2.findContours(mask.astype(np.uint8),
                                   cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    return float(cv2.arcLength(contours[0], closed=True))


def region_properties(mask: np.ndarray, mpp: float) -> MorphologyFeatures:
    """Area, perimeter, axes and eccentricity of a binary mask.

    Axis lengths are 4*sqrt(lambda) for the eigenvalues of the covariance of
    the pixel set (uniform density over unit-square pixels), the ellipse with
    matching second moments.  The alignment score is left NaN; use
    ``best_alignment_metric``.
    """
    if not mpp > 0:
        raise InvariantViolation(f"mpp must be positive, got {mpp}")
    mask = _as_mask(mask)
    area = float(mask.sum()) * mpp * mpp
    perimeter = _traced_perimeter(mask) * mpp
    _, cov = _mask_moments(mask)
    major, minor, ecc = _axes_from_cov(cov)
    return MorphologyFeatures(
        area_um2=area,
        eccentricity=ecc,
        perimeter_um=perimeter,
        major_axis_um=major * mpp,
        minor_axis_um=minor * mpp,
    )


def _ellipse_mask(shape: tuple[int, int], centroid: np.ndarray, cov: np.ndarray) -> np.ndarray:
    lam, vecs = np.linalg.eigh(cov)
    semi = 2.0 * np.sqrt(lam)  # semi-axes of the moment-matched ellipse
    rr, cc = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    dr = rr - centroid[0]
    dc = cc - centroid[1]
    u = (dr * vecs[0, 0] + dc * vecs[1, 0]) / semi[0]
    v = (dr * vecs[0, 1] + dc * vecs[1, 1]) / semi[1]
    return u * u + v * v <= 1.0


def best_alignment_metric(mask: np.ndarray) -> float:
    """1 - Jaccard(mask, moment-matched ellipse); 0 = perfectly elliptical."""
    mask = _as_mask(mask)
    centroid, cov = _mask_moments(mask)
    # Pad so the ellipse is never clipped by the array bounds.
    reach = int(math.ceil(2.0 * math.sqrt(np.linalg.eigvalsh(cov)[1]))) + 2
    padded = np.pad(mask, reach)
    ellipse = _ellipse_mask(padded.shape, centroid + reach, cov)
    inter = float(np.logical_and(padded, ellipse).sum())
    union = float(np.logical_or(padded, ellipse).sum())
    return 1.0 - inter / union


# ---------------------------------------------------------------------------
# contour route

def _polygon_moments(contour: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """(area, centroid, covariance) of a simple polygon, uniform density."""
    x = contour[:, 0]
    y = contour[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    a_signed = cross.sum() / 2.0
    cx = ((x + xn) * cross).sum() / (6.0 * a_signed)
    cy = ((y + yn) * cross).sum() / (6.0 * a_signed)
    exx = ((x * x + x * xn + xn * xn) * cross).sum() / (12.0 * a_signed)
    eyy = ((y * y + y * yn + yn * yn) * cross).sum() / (12.0 * a_signed)
    exy = ((x * yn + 2 * x * y + 2 * xn * yn + xn * y) * cross).sum() / (24.0 * a_signed)
    cov = np.array([[exx - cx * cx, exy - cx * cy],
                    [exy - cx * cy, eyy - cy * cy]])
    return abs(a_signed), np.array([cx, cy]), cov


def _ellipse_polygon(centroid: np.ndarray, cov: np.ndarray, n_vertices: int = 128) -> Polygon:
    lam, vecs = np.linalg.eigh(cov)
    semi = 2.0 * np.sqrt(np.maximum(lam, 0))
    t = np.linspace(0.0, 2.0 * np.pi, n_vertices, endpoint=False)
    pts = (vecs @ np.stack([semi[0] * np.cos(t), semi[1] * np.sin(t)])).T + centroid
    return Polygon(pts)


def morphology_from_contour(contour_um: np.ndarray) -> MorphologyFeatures:
    """Shape features of a nucleus from its polygon contour in microns.

    Uses exact polygon integrals for area, perimeter and second moments, and
    the polygon/ellipse Jaccard dissimilarity for the alignment score.
    """
    contour = np.asarray(contour_um, dtype=float)
    if contour.ndim != 2 or contour.shape[1] != 2 or contour.shape[0] < 3:
        raise InvariantViolation("contour needs >= 3 (x, y) vertices")
    area, centroid, cov = _polygon_moments(contour)
    if area <= 0:
        raise InvariantViolation("contour encloses no area")
    edges = np.diff(np.vstack([contour, contour[:1]]), axis=0)
    perimeter = float(np.hypot(edges[:, 0], edges[:, 1]).sum())
    major, minor, ecc = _axes_from_cov(cov)

    poly = Polygon(contour)
    ellipse = _ellipse_polygon(centroid, cov)
    inter = poly.intersection(ellipse).area
    union = poly.union(ellipse).area
    bam = 1.0 - inter / union

    return MorphologyFeatures(
        area_um2=area,
        eccentricity=ecc,
        perimeter_um=perimeter,
        major_axis_um=major,
        minor_axis_um=minor,
        bam=min(max(bam, 0.0), 1.0),
    )


# ---------------------------------------------------------------------------
# aggregation

def aggregate_morphology(class_names: Sequence[str],
                         features: Sequence[MorphologyFeatures]) -> np.ndarray:
    """Patient-level morphology block: 72 values (feature ids 0-71).

    Nuclei are pooled across all the patient's images, grouped by class in
    catalogue order; each of the six stats yields (mean, population std).
    A class with no nuclei yields NaN entries.
    """
    if len(class_names) != len(features):
        raise InvariantViolation("class_names and features lengths differ")
    out = np.full(len(ALPHA_CLASS_NAMES) * MORPH_STAT_COUNT * 2, np.nan)
    by_class: dict[str, list[np.ndarray]] = {name: [] for name in ALPHA_CLASS_NAMES}
    for name, feat in zip(class_names, features):
        by_class[name].append(feat.as_vector())
    for c, name in enumerate(ALPHA_CLASS_NAMES):
        rows = by_class[name]
        if not rows:
            continue
        stacked = np.stack(rows)
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)  # population std: well-defined at n = 1
        base = c * MORPH_STAT_COUNT * 2
        out[base + 0:base + MORPH_STAT_COUNT * 2:2] = mean
        out[base + 1:base + MORPH_STAT_COUNT * 2:2] = std
    return out
