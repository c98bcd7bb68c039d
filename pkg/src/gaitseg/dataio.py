"""Silhouette sequences, dataset manifests, frame normalization and cycle detection.

Frames are handled as 2-D ``uint8`` arrays holding 0 (background) or 1
(foreground). A sequence stacks them into a ``(T, H, W)`` array.
"""

from __future__ import annotations

import csv
import enum
import functools
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
from PIL import Image

CASIA_ANGLES = (0, 18, 36, 54, 72, 90, 108, 126, 144, 162, 180)
BINARY_THRESHOLD = 127
MIN_PERIOD = 10


class DataError(ValueError):
    """Input data violates a loader or preprocessing precondition."""


class EmptyForegroundError(DataError):
    """A frame has no foreground pixel and cannot be normalized."""


class Condition(str, enum.Enum):
    NORMAL = "Normal"
    CARRYING = "CarryingBag"
    CLOTHING = "Clothing"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip()
        aliases = {"nl": cls.NORMAL, "nm": cls.NORMAL, "cb": cls.CARRYING, "bg": cls.CARRYING, "cl": cls.CLOTHING}
        for member in cls:
            if key.lower() == member.value.lower():
                return member
        try:
            return aliases[key.lower()]
        except KeyError:
            raise DataError(f"unknown condition {text!r}") from None


class Role(str, enum.Enum):
    TRAIN = "Train"
    VALIDATION = "Validation"
    TEST_NORMAL = "TestNormal"
    TEST_CARRYING = "TestCarrying"
    TEST_CLOTHING = "TestClothing"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        for member in cls:
            if key == member.value.lower():
                return member
        raise DataError(f"unknown role {text!r}")

    @property
    def condition(self):
        return {
            Role.TEST_CARRYING: Condition.CARRYING,
            Role.TEST_CLOTHING: Condition.CLOTHING,
        }.get(self, Condition.NORMAL)


TEST_ROLES = (Role.TEST_NORMAL, Role.TEST_CARRYING, Role.TEST_CLOTHING)


def check_angle(angle):
    angle = int(angle)
    if angle not in CASIA_ANGLES:
        raise DataError(f"view angle {angle} is not one of {CASIA_ANGLES}")
    return angle


def as_frame(pixels):
    """Validate and return a binary frame as a ``uint8`` array."""
    frame = np.asarray(pixels)
    if frame.ndim != 2 or frame.shape[0] == 0 or frame.shape[1] == 0:
        raise DataError(f"frame must be a non-empty 2-D array, got shape {frame.shape}")
    if not ((frame == 0) | (frame == 1)).all():
        raise DataError("frame pixels must be 0 or 1")
    return frame.astype(np.uint8, copy=False)


@dataclass(frozen=True)
class SilhouetteSequence:
    """One walking pass: binary frames plus subject, condition and view."""

    frames: np.ndarray
    subject_id: str
    condition: Condition = Condition.NORMAL
    view_angle_deg: int = 90

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[0] == 0:
            raise DataError("a sequence needs at least one 2-D frame")
        if frames.shape[1] == 0 or frames.shape[2] == 0:
            raise DataError("frames must have positive width and height")
        if not ((frames == 0) | (frames == 1)).all():
            raise DataError("frame pixels must be 0 or 1")
        frames = frames.astype(np.uint8)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "condition", Condition.parse(self.condition))
        object.__setattr__(self, "view_angle_deg", check_angle(self.view_angle_deg))

    def __len__(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:]


# --- PGM frames -----------------------------------------------------------


def read_pgm(path):
    with Image.open(path) as img:
        if img.format != "PPM" or img.mode not in ("L", "1"):
            raise DataError(f"{path}: expected an 8-bit binary PGM, got {img.format}/{img.mode}")
        return np.asarray(img.convert("L"), dtype=np.uint8)


def write_pgm(path, gray):
    gray = np.asarray(gray)
    if gray.dtype != np.uint8:
        gray = np.clip(np.rint(gray), 0, 255).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path, format="PPM")


def _frame_files(dir_path):
    return sorted(p for p in Path(dir_path).iterdir() if p.suffix.lower() == ".pgm" and p.is_file())


def load_sequence(dir_path, subject_id=None, condition=Condition.NORMAL, view_angle_deg=90):
    """Load every ``*.pgm`` frame of a directory in lexicographic order.

    Gray values above 127 become foreground.
    """
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise DataError(f"sequence directory {dir_path} does not exist")
    files = _frame_files(dir_path)
    if not files:
        raise DataError(f"no PGM frames in {dir_path}")
    frames = []
    for f in files:
        gray = read_pgm(f)
        if frames and gray.shape != frames[0].shape:
            raise DataError(f"{f.name}: frame size {gray.shape} differs from {frames[0].shape}")
        frames.append((gray > BINARY_THRESHOLD).astype(np.uint8))
    return SilhouetteSequence(
        np.stack(frames),
        subject_id=subject_id if subject_id is not None else dir_path.name,
        condition=condition,
        view_angle_deg=view_angle_deg,
    )


def save_sequence(seq, dir_path):
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    width = max(6, len(str(len(seq))))
    for t, frame in enumerate(seq.frames):
        write_pgm(dir_path / f"{t:0{width}d}.pgm", frame * np.uint8(255))
    return dir_path


# --- manifests ------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    subject_id: str
    condition: Condition
    view_angle_deg: int
    role: Role


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    base_dir: Path = Path(".")

    def resolve(self, entry):
        p = Path(entry.path)
        return p if p.is_absolute() else self.base_dir / p

    def select(self, role=None, angle=None, condition=None):
        roles = None if role is None else {role} if isinstance(role, Role) else set(role)
        return [
            e
            for e in self.entries
            if (roles is None or e.role in roles)
            and (angle is None or e.view_angle_deg == angle)
            and (condition is None or e.condition == condition)
        ]

    def subjects(self, role):
        return {e.subject_id for e in self.entries if e.role == role}

    def validate(self):
        """Every test subject must have a training entry."""
        train = self.subjects(Role.TRAIN)
        missing = set()
        for role in TEST_ROLES:
            missing |= self.subjects(role) - train
        if missing:
            raise DataError(f"test subjects without training data: {sorted(missing)}")


def read_manifest(path):
    """Parse ``path,subject,condition,angle,role`` lines; ``#`` lines are comments."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest {path} does not exist")
    entries = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            p, subject, cond, angle, role = (x.strip() for x in row)
            try:
                angle = int(angle)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad angle {angle!r}") from None
            entries.append(ManifestEntry(p, subject, Condition.parse(cond), check_angle(angle), Role.parse(role)))
    return DatasetManifest(entries, base_dir=path.parent)


def write_manifest(path, entries: Iterable[ManifestEntry], header=True):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write("# path,subject,condition,angle,role\n")
        w = csv.writer(fh, lineterminator="\n")
        for e in entries:
            w.writerow([e.path, e.subject_id, e.condition.value, e.view_angle_deg, e.role.value])
    return path


def load_entry(manifest, entry):
    return load_sequence(manifest.resolve(entry), entry.subject_id, entry.condition, entry.view_angle_deg)


# --- preprocessing --------------------------------------------------------


@functools.lru_cache(maxsize=1024)
def _resample_index(n_in, n_out):
    # endpoint-aligned nearest neighbour: first and last output samples hit the extremes
    idx = np.rint(np.linspace(0, n_in - 1, n_out)).astype(int)
    idx.setflags(write=False)
    return idx


def normalize_frame(frame, out_h=64, out_w=64):
    """Crop to the foreground box, scale to ``out_h`` rows, centre on the centroid.

    The aspect ratio is kept. The result is ``out_h x out_w`` and binary; columns
    falling outside ``out_w`` are cropped.
    """
    frame = as_frame(frame)
    rows = np.flatnonzero(frame.any(axis=1))
    if rows.size == 0:
        raise EmptyForegroundError("frame has no foreground pixel")
    cols = np.flatnonzero(frame.any(axis=0))
    box = frame[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    h, w = box.shape
    new_w = max(1, int(round(w * out_h / h)))
    scaled = box[np.ix_(_resample_index(h, out_h), _resample_index(w, new_w))]

    col_mass = scaled.sum(axis=0)
    if col_mass.sum() == 0:  # pathological downscale; fall back to box centre
        cx = new_w / 2.0
    else:
        cx = float((col_mass * (np.arange(new_w) + 0.5)).sum() / col_mass.sum())
    offset = int(np.round(out_w / 2.0 - cx))

    out = np.zeros((out_h, out_w), dtype=np.uint8)
    src_lo = max(0, -offset)
    src_hi = min(new_w, out_w - offset)
    if src_hi > src_lo:
        out[:, src_lo + offset : src_hi + offset] = scaled[:, src_lo:src_hi]
    return out


def normalize_sequence(seq, out_h=64, out_w=64, skip_empty=True):
    """Normalize every frame; empty frames are dropped when ``skip_empty``."""
    frames = []
    for f in seq.frames:
        try:
            frames.append(normalize_frame(f, out_h, out_w))
        except EmptyForegroundError:
            if not skip_empty:
                raise
    if not frames:
        raise EmptyForegroundError(f"sequence of subject {seq.subject_id} has no usable frame")
    return SilhouetteSequence(np.stack(frames), seq.subject_id, seq.condition, seq.view_angle_deg)


class GaitCycles(NamedTuple):
    intervals: list
    period: int
    fallback: bool

    @property
    def frame_range(self):
        return self.intervals[0][0], self.intervals[-1][1]


def _autocorrelation(x, lag):
    a, b = x[:-lag], x[lag:]
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    return 0.0 if denom == 0 else float((a * b).sum() / denom)


def detect_gait_cycle(seq, min_period=MIN_PERIOD, peak_ratio=0.9, min_corr=0.3):
    """Split a sequence into consecutive gait cycles.

    The period is the smallest local maximum of the foreground-count
    autocorrelation (lags ``min_period .. len/2``) reaching ``peak_ratio`` of the
    best one. A flat or aperiodic signal returns the whole sequence as a single
    interval with ``fallback=True``. Intervals are inclusive ``(start, end)``.
    """
    frames = seq.frames if isinstance(seq, SilhouetteSequence) else np.asarray(seq)
    n = len(frames)
    if n < 2 * min_period:
        raise DataError(f"sequence of {n} frames is shorter than twice the minimum period {min_period}")
    counts = frames.reshape(n, -1).sum(axis=1).astype(float)
    x = counts - counts.mean()
    whole = GaitCycles([(0, n - 1)], n, True)
    if not np.any(np.abs(x) > 1e-9 * max(1.0, np.abs(counts).max())):
        return whole

    lags = np.arange(min_period, n // 2 + 1)
    r = np.array([_autocorrelation(x, int(lag)) for lag in lags])
    best = r.max()
    if best < min_corr:
        return whole
    padded = np.concatenate(([-np.inf], r, [-np.inf]))
    is_peak = (r >= padded[:-2]) & (r >= padded[2:])
    candidates = lags[is_peak & (r >= peak_ratio * best)]
    period = int(candidates[0]) if candidates.size else int(lags[np.argmax(r)])
    intervals = [(s, s + period - 1) for s in range(0, n - period + 1, period)]
    return GaitCycles(intervals, period, False)


def cycle_frames(seq, min_period=MIN_PERIOD):
    """Frames covered by the detected cycles (whole sequence on fallback)."""
    cycles = detect_gait_cycle(seq, min_period=min_period)
    lo, hi = cycles.frame_range
    return seq.frames[lo : hi + 1], cycles


def parallel_map(fn, items, workers=None):
    """Map over independent items, in a thread pool when ``workers > 1``."""
    items = list(items)
    workers = workers if workers is not None else int(os.environ.get("GAITSEG_WORKERS", "1"))
    if workers <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
