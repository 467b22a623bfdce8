"""Deterministic readers and writers for the package's file formats.

Formats (all little-endian, UTF-8, comma-delimited CSV with '.' decimals):

* label grids   -- raw u32 payload at ``<path>`` (instance layer then class
                   layer, row-major) with a JSON sidecar at ``<path>.json``
                   holding ``{height, width, dtype, layers, mpp}``.
* nuclei tables -- newline-delimited JSON, one nucleus per line, coordinates
                   already in microns.
* counts tables -- CSV ``image_id,neutrophil,epithelial,lymphocyte,plasma,
                   eosinophil,connective``.
* feature matrix-- CSV ``patient_id`` + the 222 canonical feature columns +
                   optional trailing ``sex,age,stage``; empty cell = missing.
"""
from __future__ import annotations

import csv
import json
import math
import os
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    ALPHA_CLASS_NAMES,
    DEFAULT_CLASS_NAMES,
    N_FEATURES,
    ClassCounts,
    LabeledInstanceGrid,
    NucleusRecord,
    PatientFeatureVector,
    SurvivalRecord,
    canonical_feature_names,
)
from .errors import (
    InvariantViolation,
    MissingMpp,
    NegativeCount,
    ParseError,
    ShapeMismatch,
)

GRID_DTYPE = np.dtype("<u4")
GRID_LAYERS = ["instance", "class"]
CLINICAL_COLUMNS = ["sex", "age", "stage"]


# ---------------------------------------------------------------------------
# label grids

def write_label_grid(path: str | os.PathLike, grid: LabeledInstanceGrid) -> None:
    inst = np.ascontiguousarray(grid.instance_labels, dtype=GRID_DTYPE)
    cls = np.ascontiguousarray(grid.class_labels, dtype=GRID_DTYPE)
    header = {
        "height": grid.height,
        "width": grid.width,
        "dtype": "u32",
        "layers": GRID_LAYERS,
        "mpp": grid.mpp,
    }
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True)
        fh.write("\n")
    with open(path, "wb") as fh:
        fh.write(inst.tobytes())
        fh.write(cls.tobytes())


def read_label_grid(path: str | os.PathLike) -> LabeledInstanceGrid:
    sidecar = f"{path}.json"
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            header = json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"{sidecar}: sidecar not found")
    except json.JSONDecodeError as exc:
        raise ParseError(f"{sidecar}: {exc}")
    for key in ("height", "width", "dtype", "layers"):
        if key not in header:
            raise ParseError(f"{sidecar}: missing header field {key!r}")
    if "mpp" not in header:
        raise MissingMpp(f"{sidecar}: header lacks mpp")
    if header["dtype"] != "u32":
        raise ParseError(f"{sidecar}: unsupported dtype {header['dtype']!r}")
    if header["layers"] != GRID_LAYERS:
        raise ParseError(f"{sidecar}: unsupported layers {header['layers']!r}")
    height, width = int(header["height"]), int(header["width"])
    with open(path, "rb") as fh:
        payload = fh.read()
    expected = 2 * height * width * GRID_DTYPE.itemsize
    if len(payload) != expected:
        raise ShapeMismatch(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    flat = np.frombuffer(payload, dtype=GRID_DTYPE)
    inst = flat[: height * width].reshape(height, width)
    cls = flat[height * width:].reshape(height, width)
    return LabeledInstanceGrid(instance_labels=inst, class_labels=cls, mpp=float(header["mpp"]))


# ---------------------------------------------------------------------------
# nuclei tables

def _record_to_json(rec: NucleusRecord) -> dict:
    return {
        "nucleus_id": rec.nucleus_id,
        "class": rec.class_name,
        "centroid_x_um": rec.centroid_x_um,
        "centroid_y_um": rec.centroid_y_um,
        "contour": [[float(x), float(y)] for x, y in rec.contour],
        "area_px": rec.area_px,
        "image_id": rec.image_id,
        "patient_id": rec.patient_id,
    }


def write_nuclei_table(path: str | os.PathLike, records: Iterable[NucleusRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_record_to_json(rec), sort_keys=True))
            fh.write("\n")


def read_nuclei_table(path: str | os.PathLike) -> list[NucleusRecord]:
    records: list[NucleusRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}")
            try:
                records.append(NucleusRecord(
                    nucleus_id=int(obj["nucleus_id"]),
                    class_name=str(obj["class"]),
                    centroid_x_um=float(obj["centroid_x_um"]),
                    centroid_y_um=float(obj["centroid_y_um"]),
                    contour=np.asarray(obj["contour"], dtype=float),
                    area_px=int(obj["area_px"]),
                    image_id=str(obj["image_id"]),
                    patient_id=str(obj["patient_id"]),
                ))
            except InvariantViolation as exc:
                raise InvariantViolation(f"{path}:{lineno}: {exc}")
            except KeyError as exc:
                raise ParseError(f"{path}:{lineno}: missing field {exc}")
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}")
    return records


# ---------------------------------------------------------------------------
# counts tables

COUNTS_HEADER = ["image_id", *DEFAULT_CLASS_NAMES]


def write_counts_table(path: str | os.PathLike, rows: Iterable[ClassCounts]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COUNTS_HEADER)
        for row in rows:
            writer.writerow([row.image_id, *(row.counts[name] for name in DEFAULT_CLASS_NAMES)])


def read_counts_table(path: str | os.PathLike) -> list[ClassCounts]:
    out: list[ClassCounts] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file")
        if header != COUNTS_HEADER:
            raise ParseError(f"{path}: header must be {','.join(COUNTS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COUNTS_HEADER):
                raise ParseError(f"{path}:{lineno}: expected {len(COUNTS_HEADER)} cells")
            counts = {}
            for name, cell in zip(DEFAULT_CLASS_NAMES, row[1:]):
                try:
                    value = int(cell)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: non-integer count {cell!r}")
                if value < 0:
                    raise NegativeCount(f"{path}:{lineno}: negative count for {name}")
                counts[name] = value
            out.append(ClassCounts(counts=counts, image_id=row[0]))
    return out


# ---------------------------------------------------------------------------
# feature matrices

def write_feature_matrix(path: str | os.PathLike,
                         vectors: Sequence[PatientFeatureVector],
                         include_clinical: bool = False) -> None:
    names = canonical_feature_names()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["patient_id", *names]
        if include_clinical:
            header += CLINICAL_COLUMNS
        writer.writerow(header)
        for vec in vectors:
            cells: list[str] = [vec.patient_id]
            for value, missing in zip(vec.values, vec.missing_mask):
                cells.append("" if missing else repr(float(value)))
            if include_clinical:
                clinical = vec.clinical or {}
                for col in CLINICAL_COLUMNS:
                    value = clinical.get(col)
                    cells.append("" if value is None else repr(float(value)))
            writer.writerow(cells)


def read_feature_matrix(path: str | os.PathLike) -> list[PatientFeatureVector]:
    names = canonical_feature_names()
    out: list[PatientFeatureVector] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file")
        if len(header) < 1 + N_FEATURES or header[0] != "patient_id" or header[1:1 + N_FEATURES] != names:
            raise ParseError(f"{path}: header must be patient_id + the 222 canonical feature names")
        extra = header[1 + N_FEATURES:]
        if extra and extra != CLINICAL_COLUMNS[: len(extra)]:
            raise ParseError(f"{path}: unexpected trailing columns {extra!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} cells")
            values = np.full(N_FEATURES, np.nan)
            for j, cell in enumerate(row[1:1 + N_FEATURES]):
                if cell != "":
                    try:
                        values[j] = float(cell)
                    except ValueError:
                        raise ParseError(f"{path}:{lineno}: bad numeric cell {cell!r}")
            clinical = None
            if extra:
                clinical = {}
                for col, cell in zip(extra, row[1 + N_FEATURES:]):
                    clinical[col] = None if cell == "" else float(cell)
            out.append(PatientFeatureVector(
                patient_id=row[0],
                values=values,
                missing_mask=np.isnan(values),
                clinical=clinical,
            ))
    return out


# ---------------------------------------------------------------------------
# small auxiliary tables (manifest, grading labels, survival)

def read_manifest(path: str | os.PathLike) -> dict[str, str]:
    """image_id -> patient_id mapping from a two-column CSV."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["image_id", "patient_id"]:
            raise ParseError(f"{path}: header must be image_id,patient_id")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ParseError(f"{path}:{lineno}: expected image_id,patient_id")
            mapping[row[0]] = row[1]
    return mapping


def read_grading_labels(path: str | os.PathLike) -> dict[str, int]:
    """patient_id -> ordinal grade from a two-column CSV."""
    labels: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["patient_id", "grade"]:
            raise ParseError(f"{path}: header must be patient_id,grade")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                labels[row[0]] = int(row[1])
            except (IndexError, ValueError):
                raise ParseError(f"{path}:{lineno}: expected patient_id,<integer grade>")
    return labels


def read_survival_table(path: str | os.PathLike) -> list[SurvivalRecord]:
    records: list[SurvivalRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["patient_id", "time_days", "event"]:
            raise ParseError(f"{path}: header must be patient_id,time_days,event")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                records.append(SurvivalRecord(
                    patient_id=row[0],
                    time=float(row[1]),
                    event=bool(int(row[2])),
                ))
            except InvariantViolation as exc:
                raise InvariantViolation(f"{path}:{lineno}: {exc}")
            except (IndexError, ValueError):
                raise ParseError(f"{path}:{lineno}: expected patient_id,time_days,event(0/1)")
    return records


def write_survival_table(path: str | os.PathLike, records: Iterable[SurvivalRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "time_days", "event"])
        for rec in records:
            writer.writerow([rec.patient_id, repr(float(rec.time)), int(rec.event)])
