"""Horizontal motion vectors: Shannon entropy of each GEI row."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .dataio import DataError, parallel_map
from .templates import GaitTemplate, TemplateKind


def quantize_gei(values):
    """Round GEI reals to integer gray levels in ``[0, 255]``."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64)), 0, 255).astype(np.uint8)


def motion_vector(gei):
    """Entropy (bits) of the gray-level histogram of every row of a GEI."""
    if isinstance(gei, GaitTemplate):
        if gei.kind is not TemplateKind.GEI:
            raise DataError(f"motion vectors are defined on GEIs, got {gei.kind.value}")
        values = gei.values
    else:
        values = np.asarray(gei, dtype=np.float64)
    return kernels.row_entropy(quantize_gei(values))


@dataclass
class MotionMatrix:
    """``N x P`` matrix whose columns are the motion vectors of ``P`` GEIs."""

    values: np.ndarray
    column_meta: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("motion matrix must be 2-D")
        if not self.column_meta:
            self.column_meta = [("", "")] * self.values.shape[1]
        if len(self.column_meta) != self.values.shape[1]:
            raise DataError("one metadata entry per column required")

    @property
    def shape(self):
        return self.values.shape


def assemble_motion_matrix(geis, column_meta=None, workers=None):
    geis = list(geis)
    if not geis:
        raise DataError("no GEIs to assemble")
    heights = {g.height if isinstance(g, GaitTemplate) else np.shape(g)[0] for g in geis}
    if len(heights) != 1:
        raise DataError(f"GEIs differ in height: {sorted(heights)}")
    cols = parallel_map(motion_vector, geis, workers)
    return MotionMatrix(np.column_stack(cols), list(column_meta) if column_meta else [])


def save_motion_matrix(mm, path):
    """Write ``N`` rows of ``P`` values plus a ``<name>.meta.csv`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for row in mm.values.tolist():
            fh.write(",".join(map(repr, row)) + "\n")
    meta_path = path.with_suffix(".meta.csv")
    with open(meta_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column", "subject", "condition"])
        for k, (subject, condition) in enumerate(mm.column_meta):
            w.writerow([k, subject, condition])
    return path, meta_path


def load_motion_matrix(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"motion matrix {path} does not exist")
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    meta = []
    meta_path = path.with_suffix(".meta.csv")
    if meta_path.is_file():
        with open(meta_path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        meta = [(r[1], r[2]) for r in rows]
    return MotionMatrix(values, meta)
