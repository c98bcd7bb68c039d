"""Synthetic walking silhouettes with known subjects, conditions, views and body bands.

Each subject is a head block, a torso block and two legs. Each leg has a thigh
and a shin segment swinging sideways in antiphase with subject-specific
amplitudes, so all the motion sits in the leg band at the bottom of the frame.
Clothing widens the torso only; carrying adds a block on one side of the
torso. Views are horizontal shears plus a view-dependent swing amplitude.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import (
    Condition,
    DataError,
    ManifestEntry,
    Role,
    SilhouetteSequence,
    check_angle,
    save_sequence,
    write_manifest,
)

# band limits as fractions of the frame height
HEAD_END = 0.125
TORSO_END = 0.53
THIGH_END = 0.765
BAG_ROWS = (0.22, 0.47)

_THIGH_AMPS = (5.0, 6.0, 7.0)
_SHIN_AMPS = (9.0, 10.0, 11.0, 12.0, 13.0)
_LEG_WIDTHS = (4.0, 5.0, 6.0)
_CONDITION_CODE = {Condition.NORMAL: 0, Condition.CARRYING: 1, Condition.CLOTHING: 2}


@dataclass(frozen=True)
class SyntheticConfig:
    n_subjects: int = 10
    n_cycles_per_subject: int = 4
    n_test_normal: int = 2
    n_carrying: int = 2
    n_clothing: int = 2
    n_validation_subjects: int = 24
    frames_per_cycle: int = 24
    cycles_per_sequence: int = 2
    height: int = 64
    width: int = 64
    noise_flip_prob: float = 0.02
    view_angles: tuple = (90,)
    validation_angle: int = 90
    coat_widen: float = 8.0
    bag_width: float = 6.0
    # horizontal shear in pixels per row at the 0 and 180 degree views
    view_shear: float = 1.2
    seed: int = 0

    def validate(self):
        if not 0 <= self.noise_flip_prob < 0.5:
            raise DataError("noise_flip_prob must be in [0, 0.5)")
        if self.frames_per_cycle < 4:
            raise DataError("frames_per_cycle must be at least 4")
        if self.n_subjects < 1 or self.n_cycles_per_subject <= self.n_test_normal or self.n_test_normal < 0:
            raise DataError("need at least one subject and one training pass per subject")
        if self.height < 16 or self.width < 16:
            raise DataError("frames must be at least 16 x 16")
        if self.n_subjects > len(_THIGH_AMPS) * len(_SHIN_AMPS) * len(_LEG_WIDTHS):
            raise DataError("too many subjects for distinct leg parameters")
        for a in (*self.view_angles, self.validation_angle):
            check_angle(a)
        return self


@dataclass(frozen=True)
class SubjectParams:
    subject_id: str
    head_width: float
    torso_width: float
    thigh_amp: float
    shin_amp: float
    leg_width: float


def leg_band(height=64):
    """Inclusive 1-indexed rows of the constructed leg band."""
    return band_rows(height)["legs"]


def band_rows(height=64):
    head = int(round(HEAD_END * height))
    torso = int(round(TORSO_END * height))
    thigh = int(round(THIGH_END * height))
    return {
        "head": (1, head),
        "torso": (head + 1, torso),
        "thigh": (torso + 1, thigh),
        "shin": (thigh + 1, height),
        "legs": (torso + 1, height),
    }


def make_subjects(config, prefix="s", count=None, stream=0, distinct=True):
    rng = np.random.default_rng([config.seed, 7919, stream])
    count = config.n_subjects if count is None else count
    grid = list(itertools.product(_THIGH_AMPS, _SHIN_AMPS, _LEG_WIDTHS))
    if distinct:
        legs = [grid[i] for i in rng.choice(len(grid), size=count, replace=False)]
    else:
        legs = [grid[i] for i in rng.integers(0, len(grid), size=count)]
    torso = rng.choice(np.arange(14, 25, 2.0), size=count)
    head = rng.choice(np.arange(6, 11, 1.0), size=count)
    width = len(str(count))
    return [
        SubjectParams(f"{prefix}{i + 1:0{width}d}", head[i], torso[i], *legs[i])
        for i in range(count)
    ]


def _cover(lo, hi, width):
    # pixel j is covered when its centre j + 0.5 lies in [lo, hi)
    centres = np.arange(width) + 0.5
    return (centres >= lo[..., None]) & (centres < hi[..., None])


def _render(subject, ts, phase, config, condition, view):
    """Render frames ``ts`` at once; returns a ``(len(ts), H, W)`` uint8 stack."""
    n, m = config.height, config.width
    bands = band_rows(n)
    rows = np.arange(1, n + 1)
    theta = np.deg2rad(view)
    ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
    swing = (0.55 + 0.45 * np.sin(theta)) * np.sin(2 * np.pi * ts / config.frames_per_cycle + phase)
    shear = config.view_shear * (view - 90) / 90.0
    centre = m / 2.0 + shear * (rows - 0.5 - n / 2.0)

    torso_w = subject.torso_width + (config.coat_widen if condition is Condition.CLOTHING else 0.0)
    head = rows <= bands["head"][1]
    torso = ~head & (rows <= bands["torso"][1])
    legs = rows > bands["torso"][1]
    half = np.where(head, subject.head_width / 2, np.where(torso, torso_w / 2, 0.0))
    right = half.copy()
    if condition is Condition.CARRYING:
        bag_lo, bag_hi = int(round(BAG_ROWS[0] * n)), int(round(BAG_ROWS[1] * n))
        right[(rows - 1 >= bag_lo) & (rows - 1 < bag_hi) & torso] += config.bag_width
    upper = _cover(centre - half, centre + right, m) & ~legs[:, None]

    amp = np.where(rows <= bands["thigh"][1], subject.thigh_amp, subject.shin_amp)
    offset = amp[None, :] * swing[:, None]
    w = subject.leg_width / 2
    leg_a = _cover(centre + offset - w, centre + offset + w, m)
    leg_b = _cover(centre - offset - w, centre - offset + w, m)
    lower = (leg_a | leg_b) & legs[None, :, None]
    return (upper[None] | lower).astype(np.uint8)


def render_frame(subject, t, phase, config, condition=Condition.NORMAL, view=90):
    return _render(subject, [t], phase, config, condition, view)[0]


def render_sequence(subject, config, condition=Condition.NORMAL, view=90, rng=None):
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n_frames = config.frames_per_cycle * config.cycles_per_sequence
    phase = rng.uniform(0, 2 * np.pi)
    frames = _render(subject, np.arange(n_frames), phase, config, condition, view)
    if config.noise_flip_prob > 0:
        flips = rng.random(frames.shape) < config.noise_flip_prob
        frames = frames ^ flips.astype(np.uint8)
    return SilhouetteSequence(frames, subject.subject_id, condition, view)


@dataclass
class SyntheticDataset:
    config: SyntheticConfig
    sequences: list = field(default_factory=list)
    roles: list = field(default_factory=list)
    subjects: list = field(default_factory=list)

    def select(self, role=None, angle=None):
        roles = None if role is None else {role} if isinstance(role, Role) else set(role)
        return [
            s
            for s, r in zip(self.sequences, self.roles)
            if (roles is None or r in roles) and (angle is None or s.view_angle_deg == angle)
        ]


def _passes(config):
    n_train = config.n_cycles_per_subject - config.n_test_normal
    yield from ((Condition.NORMAL, Role.TRAIN, i) for i in range(n_train))
    yield from ((Condition.NORMAL, Role.TEST_NORMAL, n_train + i) for i in range(config.n_test_normal))
    yield from ((Condition.CARRYING, Role.TEST_CARRYING, i) for i in range(config.n_carrying))
    yield from ((Condition.CLOTHING, Role.TEST_CLOTHING, i) for i in range(config.n_clothing))


def generate_sequences(config=None):
    """Render the whole dataset in memory; deterministic for a given config."""
    config = (config or SyntheticConfig()).validate()
    subjects = make_subjects(config)
    data = SyntheticDataset(config, subjects=subjects)

    def add(subject, s_idx, cond, role, idx, view, group):
        rng = np.random.default_rng([config.seed, group, s_idx, _CONDITION_CODE[cond], view, idx])
        data.sequences.append(render_sequence(subject, config, cond, view, rng))
        data.roles.append(role)

    for s_idx, subject in enumerate(subjects):
        for view in config.view_angles:
            for cond, role, idx in _passes(config):
                add(subject, s_idx, cond, role, idx, view, 1)
    if config.n_validation_subjects:
        validators = make_subjects(config, prefix="v", count=config.n_validation_subjects, stream=1, distinct=False)
        data.subjects.extend(validators)
        for s_idx, subject in enumerate(validators):
            for cond in Condition:
                add(subject, s_idx, cond, Role.VALIDATION, 0, config.validation_angle, 2)
    return data


def generate(config, out_dir):
    """Write every sequence as a PGM directory plus ``manifest.csv``; returns the manifest path."""
    out_dir = Path(out_dir)
    data = generate_sequences(config)
    entries = []
    counter = {}
    for seq, role in zip(data.sequences, data.roles):
        key = (seq.subject_id, seq.condition, seq.view_angle_deg)
        counter[key] = counter.get(key, 0) + 1
        rel = Path("sequences") / f"{seq.subject_id}_{seq.condition.value}_{seq.view_angle_deg:03d}_{counter[key]:02d}"
        save_sequence(seq, out_dir / rel)
        entries.append(ManifestEntry(rel.as_posix(), seq.subject_id, seq.condition, seq.view_angle_deg, role))
    return write_manifest(out_dir / "manifest.csv", entries)

