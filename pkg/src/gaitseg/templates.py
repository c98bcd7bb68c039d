"""Gait templates computed over one gait cycle: GEI, GEnI and GPPE."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import DataError, SilhouetteSequence, write_pgm

GPPE_MAX = float(np.exp(0.5))


class TemplateKind(str, enum.Enum):
    GEI = "GEI"
    GENI = "GEnI"
    GPPE = "GPPE"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        for member in cls:
            if str(text).strip().lower() == member.value.lower():
                return member
        raise DataError(f"unknown template kind {text!r}")


@dataclass(frozen=True)
class GaitTemplate:
    kind: TemplateKind
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("template values must be a 2-D array")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", TemplateKind.parse(self.kind))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def _stack(frames):
    if isinstance(frames, SilhouetteSequence):
        frames = frames.frames
    if isinstance(frames, np.ndarray):
        stack = frames if frames.ndim == 3 else frames[None]
    else:
        frames = list(frames)
        if not frames:
            raise DataError("cannot build a template from zero frames")
        shapes = {np.shape(f) for f in frames}
        if len(shapes) != 1:
            raise DataError(f"frames differ in size: {sorted(shapes)}")
        stack = np.stack([np.asarray(f) for f in frames])
    if stack.shape[0] == 0:
        raise DataError("cannot build a template from zero frames")
    return stack.astype(np.float64)


def foreground_frequency(frames):
    """Per-pixel fraction of frames in which the pixel is foreground."""
    return _stack(frames).mean(axis=0)


def compute_gei(frames):
    """Average silhouette scaled to ``[0, 255]``: ``255/T * sum_t B_t``."""
    stack = _stack(frames)
    return GaitTemplate(TemplateKind.GEI, (255.0 / stack.shape[0]) * stack.sum(axis=0))


def compute_geni(frames):
    """Per-pixel Shannon entropy (bits) of the binary value stream, ``0 log 0 = 0``."""
    p1 = foreground_frequency(frames)
    p0 = 1.0 - p1
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p1 > 0, p1 * np.log2(p1), 0.0) + np.where(p0 > 0, p0 * np.log2(p0), 0.0))
    return GaitTemplate(TemplateKind.GENI, h + 0.0)


def compute_gppe(frames):
    """Per-pixel Pal-and-Pal exponential entropy, ``sum_k p_k exp(1 - p_k)``."""
    p1 = foreground_frequency(frames)
    p0 = 1.0 - p1
    return GaitTemplate(TemplateKind.GPPE, p1 * np.exp(1.0 - p1) + p0 * np.exp(1.0 - p0))


_BUILDERS = {
    TemplateKind.GEI: compute_gei,
    TemplateKind.GENI: compute_geni,
    TemplateKind.GPPE: compute_gppe,
}


def compute_template(frames, kind=TemplateKind.GEI):
    return _BUILDERS[TemplateKind.parse(kind)](frames)


# --- serialization --------------------------------------------------------


def save_template_csv(template, path):
    """Row-major CSV at full precision, with a ``# kind=...`` header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# kind={template.kind.value}\n")
        for row in template.values.tolist():
            fh.write(",".join(map(repr, row)))
            fh.write("\n")
    return path


def load_template_csv(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"template file {path} does not exist")
    kind = TemplateKind.GEI
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# kind="):
        kind = TemplateKind.parse(first.split("=", 1)[1])
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return GaitTemplate(kind, values)


def template_to_gray(template):
    """Rescale to 8-bit gray for viewing only."""
    scale = {TemplateKind.GEI: 1.0, TemplateKind.GENI: 255.0, TemplateKind.GPPE: 255.0 / GPPE_MAX}
    return np.clip(np.rint(template.values * scale[template.kind]), 0, 255).astype(np.uint8)


def save_template_pgm(template, path):
    write_pgm(path, template_to_gray(template))
    return Path(path)
