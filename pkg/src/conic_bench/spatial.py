"""Fixed-radius neighbor counting over patient-scale nuclei sets.

A uniform grid with cell size equal to the query radius serves the
colocalisation features: neighbor lookups probe the 3x3 cell ring around a
point, which cannot miss a neighbor within one cell size.  Distances are
centroid-to-centroid in microns, boundary inclusive (<= radius), and the
center nucleus itself is excluded from its own counts.  Neighborhoods never
cross image boundaries: indexes are built per image and pooled per patient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np
from numba import njit, prange

from .core import ALPHA_CLASS_NAMES, DEFAULT_REGISTRY, N_CLASSES, NucleusRecord
from .errors import InvariantViolation, NonPositiveRadius

DEFAULT_RADII_UM = (200.0, 400.0)


@njit(cache=True, parallel=True)
def _bulk_counts(x, y, cls0, order, cell_start, nx, ny, xmin, ymin,
                 cell, r2, reach, out):  # pragma: no cover - jitted
    n = x.shape[0]
    for i in prange(n):
        cx = int((x[i] - xmin) / cell)
        cy = int((y[i] - ymin) / cell)
        if cx < 0:
            cx = 0
        if cx > nx - 1:
            cx = nx - 1
        if cy < 0:
            cy = 0
        if cy > ny - 1:
            cy = ny - 1
        gx_lo = max(0, cx - reach)
        gx_hi = min(nx - 1, cx + reach)
        gy_lo = max(0, cy - reach)
        gy_hi = min(ny - 1, cy + reach)
        for gx in range(gx_lo, gx_hi + 1):
            base = gx * ny
            for gy in range(gy_lo, gy_hi + 1):
                c = base + gy
                for k in range(cell_start[c], cell_start[c + 1]):
                    j = order[k]
                    dx = x[j] - x[i]
                    dy = y[j] - y[i]
                    if dx * dx + dy * dy <= r2:
                        out[i, cls0[j]] += 1
        out[i, cls0[i]] -= 1  # the center always sees itself at distance 0


@dataclass(frozen=True)
class SpatialIndex:
    """Uniform-grid bucket index over nucleus centroids (one image)."""

    x: np.ndarray
    y: np.ndarray
    class_ids: np.ndarray  # 1..6
    cell_size: float
    xmin: float
    ymin: float
    nx: int
    ny: int
    order: np.ndarray       # point indices sorted by cell
    cell_start: np.ndarray  # CSR offsets, length nx*ny + 1

    @staticmethod
    def build(x_um: np.ndarray, y_um: np.ndarray, class_ids: np.ndarray,
              cell_size_um: float) -> "SpatialIndex":
        if not cell_size_um > 0:
            raise NonPositiveRadius(f"cell size must be positive, got {cell_size_um}")
        x = np.ascontiguousarray(x_um, dtype=np.float64)
        y = np.ascontiguousarray(y_um, dtype=np.float64)
        cls = np.ascontiguousarray(class_ids, dtype=np.int64)
        if not (x.shape == y.shape == cls.shape) or x.ndim != 1:
            raise InvariantViolation("x, y and class_ids must be equal-length 1-D arrays")
        if x.size and ((cls < 1) | (cls > N_CLASSES)).any():
            raise InvariantViolation("class ids must be in 1..6")
        if x.size == 0:
            return SpatialIndex(x=x, y=y, class_ids=cls, cell_size=float(cell_size_um),
                                xmin=0.0, ymin=0.0, nx=1, ny=1,
                                order=np.zeros(0, dtype=np.int64),
                                cell_start=np.zeros(2, dtype=np.int64))
        xmin, ymin = float(x.min()), float(y.min())
        nx = int((x.max() - xmin) / cell_size_um) + 1
        ny = int((y.max() - ymin) / cell_size_um) + 1
        ix = np.clip(((x - xmin) / cell_size_um).astype(np.int64), 0, nx - 1)
        iy = np.clip(((y - ymin) / cell_size_um).astype(np.int64), 0, ny - 1)
        lin = ix * ny + iy
        order = np.argsort(lin, kind="stable").astype(np.int64)
        counts = np.bincount(lin, minlength=nx * ny)
        cell_start = np.zeros(nx * ny + 1, dtype=np.int64)
        np.cumsum(counts, out=cell_start[1:])
        return SpatialIndex(x=x, y=y, class_ids=cls, cell_size=float(cell_size_um),
                            xmin=xmin, ymin=ymin, nx=nx, ny=ny,
                            order=order, cell_start=cell_start)

    def __len__(self) -> int:
        return self.x.shape[0]

    def _candidate_slices(self, qx: float, qy: float, reach: int):
        cx = min(max(int((qx - self.xmin) / self.cell_size), 0), self.nx - 1)
        cy = min(max(int((qy - self.ymin) / self.cell_size), 0), self.ny - 1)
        for gx in range(max(0, cx - reach), min(self.nx - 1, cx + reach) + 1):
            base = gx * self.ny
            for gy in range(max(0, cy - reach), min(self.ny - 1, cy + reach) + 1):
                c = base + gy
                lo, hi = self.cell_start[c], self.cell_start[c + 1]
                if hi > lo:
                    yield self.order[lo:hi]

    def query_counts(self, qx: float, qy: float, radius_um: float,
                     exclude_index: Optional[int] = None) -> np.ndarray:
        """Per-class counts of indexed points within ``radius_um`` of (qx, qy)."""
        if not radius_um > 0:
            raise NonPositiveRadius(f"radius must be positive, got {radius_um}")
        reach = max(1, int(math.ceil(radius_um / self.cell_size)))
        r2 = radius_um * radius_um
        counts = np.zeros(N_CLASSES, dtype=np.int64)
        if len(self) == 0:
            return counts
        for cand in self._candidate_slices(qx, qy, reach):
            dx = self.x[cand] - qx
            dy = self.y[cand] - qy
            hit = cand[dx * dx + dy * dy <= r2]
            if hit.size:
                counts += np.bincount(self.class_ids[hit] - 1, minlength=N_CLASSES)
        if exclude_index is not None:
            dx = self.x[exclude_index] - qx
            dy = self.y[exclude_index] - qy
            if dx * dx + dy * dy <= r2:
                counts[self.class_ids[exclude_index] - 1] -= 1
        return counts

    def bulk_neighbor_counts(self, radius_um: float, threads: int = 1) -> np.ndarray:
        """(n, 6) neighbor counts for every indexed point, self excluded."""
        if not radius_um > 0:
            raise NonPositiveRadius(f"radius must be positive, got {radius_um}")
        n = len(self)
        out = np.zeros((n, N_CLASSES), dtype=np.int64)
        if n == 0:
            return out
        reach = max(1, int(math.ceil(radius_um / self.cell_size)))
        numba.set_num_threads(max(1, threads))
        _bulk_counts(self.x, self.y, self.class_ids - 1, self.order, self.cell_start,
                     self.nx, self.ny, self.xmin, self.ymin,
                     self.cell_size, radius_um * radius_um, reach, out)
        return out


def neighbor_counts(index: SpatialIndex, x_um: float, y_um: float, radius_um: float,
                    exclude_index: Optional[int] = None) -> np.ndarray:
    """Per-class neighbor counts around one centroid, excluding the center
    nucleus itself when it is part of the index."""
    return index.query_counts(x_um, y_um, radius_um, exclude_index=exclude_index)


def _records_arrays(nuclei: Sequence[NucleusRecord]):
    x = np.array([r.centroid_x_um for r in nuclei], dtype=np.float64)
    y = np.array([r.centroid_y_um for r in nuclei], dtype=np.float64)
    cls = np.array([DEFAULT_REGISTRY.id_of(r.class_name) for r in nuclei], dtype=np.int64)
    return x, y, cls


def per_image_neighbor_counts(nuclei: Sequence[NucleusRecord], radius_um: float,
                              threads: int = 1) -> np.ndarray:
    """(n, 6) neighbor counts with indexes built per image_id, so
    neighborhoods never cross image boundaries."""
    if not radius_um > 0:
        raise NonPositiveRadius(f"radius must be positive, got {radius_um}")
    counts = np.zeros((len(nuclei), N_CLASSES), dtype=np.int64)
    by_image: dict[str, list[int]] = {}
    for i, rec in enumerate(nuclei):
        by_image.setdefault(rec.image_id, []).append(i)
    for idxs in by_image.values():
        subset = [nuclei[i] for i in idxs]
        x, y, cls = _records_arrays(subset)
        index = SpatialIndex.build(x, y, cls, cell_size_um=radius_um)
        counts[np.array(idxs)] = index.bulk_neighbor_counts(radius_um, threads=threads)
    return counts


def colocalisation_features(nuclei: Sequence[NucleusRecord],
                            radii_um: Sequence[float] = DEFAULT_RADII_UM,
                            threads: int = 1) -> np.ndarray:
    """Patient-level colocalisation block (feature ids 72-215 for the
    default two radii): per radius, per center class, per neighbor class,
    the (mean, population std) over center nuclei of the neighbor counts.

    Center classes run in catalogue (alphabetical) order, neighbor classes in
    registry id order; a center class with no nuclei yields NaN entries.
    """
    n_block = len(ALPHA_CLASS_NAMES) * N_CLASSES * 2
    out = np.full(len(radii_um) * n_block, np.nan)
    center_class = np.array([ALPHA_CLASS_NAMES.index(r.class_name) for r in nuclei],
                            dtype=np.int64)
    for ri, radius in enumerate(radii_um):
        counts = per_image_neighbor_counts(nuclei, radius, threads=threads)
        for c in range(len(ALPHA_CLASS_NAMES)):
            rows = counts[center_class == c]
            if rows.shape[0] == 0:
                continue
            mean = rows.mean(axis=0)
            std = rows.std(axis=0)
            base = ri * n_block + c * N_CLASSES * 2
            out[base + 0:base + N_CLASSES * 2:2] = mean
            out[base + 1:base + N_CLASSES * 2:2] = std
    return out


def density_features(nuclei: Sequence[NucleusRecord]) -> np.ndarray:
    """Per-class share of all the patient's nuclei, in catalogue order
    (feature ids 216-221); all NaN when the patient has no nuclei."""
    if len(nuclei) == 0:
        return np.full(len(ALPHA_CLASS_NAMES), np.nan)
    counts = np.zeros(len(ALPHA_CLASS_NAMES))
    for rec in nuclei:
        counts[ALPHA_CLASS_NAMES.index(rec.class_name)] += 1
    return counts / counts.sum()
