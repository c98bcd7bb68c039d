"""Stage functions shared by the command line and the end-to-end tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataio import CASIA_ANGLES, MIN_PERIOD, Condition, DataError, Role, cycle_frames, normalize_sequence, parallel_map
from .recognition import FeatureSet, cross_view_matrix, evaluate_ccr, extract_features, fit_cda
from .motion import assemble_motion_matrix
from .segmentation import DEFAULT_K_MAX, DEFAULT_TOP_K, BodyPartition, segment_motion, select_parts
from .templates import TemplateKind, compute_template

log = logging.getLogger(__name__)


@dataclass
class LabeledTemplate:
    template: object
    subject_id: str
    condition: Condition
    view_angle_deg: int
    role: Role = None
    cycle_fallback: bool = False


def build_template(seq, kind=TemplateKind.GEI, size=(64, 64), min_period=MIN_PERIOD):
    """Normalize frames, cut to whole gait cycles and average into a template."""
    norm = normalize_sequence(seq, *size)
    if len(norm) >= 2 * min_period:
        frames, cycles = cycle_frames(norm, min_period)
        fallback = cycles.fallback
    else:
        frames, fallback = norm.frames, True
    return compute_template(frames, kind), fallback


def build_templates(sequences, roles=None, kind=TemplateKind.GEI, size=(64, 64), workers=None):
    roles = roles if roles is not None else [None] * len(sequences)

    def one(item):
        seq, role = item
        tmpl, fallback = build_template(seq, kind, size)
        return LabeledTemplate(tmpl, seq.subject_id, seq.condition, seq.view_angle_deg, role, fallback)

    return parallel_map(one, list(zip(sequences, roles)), workers)


def feature_set(templates, rows=None):
    if not templates:
        raise DataError("no templates for this role")
    return FeatureSet(
        extract_features([t.template for t in templates], rows),
        [t.subject_id for t in templates],
        [t.condition for t in templates],
        [t.view_angle_deg for t in templates],
    )


def by_role(templates, role, angle=None):
    return [t for t in templates if t.role == role and (angle is None or t.view_angle_deg == angle)]


@dataclass
class SegmentParams:
    L: int = 5
    bag_size: int = 45
    k_max: int = DEFAULT_K_MAX
    seed: int = 0
    top_k: int = DEFAULT_TOP_K
    weighted: bool = True


def validation_motion(validation, workers=None):
    """Motion matrix of validation templates, one column per GEI."""
    if not validation:
        raise DataError("no validation GEIs")
    geis = [t.template if isinstance(t, LabeledTemplate) else t for t in validation]
    meta = [(t.subject_id, t.condition.value) if isinstance(t, LabeledTemplate) else ("", "") for t in validation]
    return assemble_motion_matrix(geis, meta, workers)


def partition_from_motion(motion, params=None, workers=None):
    """Bagged group-fused-Lasso segmentation plus part selection."""
    params = params or SegmentParams()
    n_cols = motion.shape[1]
    bag = min(params.bag_size, n_cols)
    if bag < params.bag_size:
        log.warning("bag size %d reduced to %d available validation GEIs", params.bag_size, bag)
    partition = segment_motion(motion, params.L, bag, params.k_max, params.seed, params.weighted, workers)
    return select_parts(partition, params.top_k)


def learn_partition(validation, params=None, workers=None):
    return partition_from_motion(validation_motion(validation, workers), params, workers)


@dataclass
class ConditionReport:
    condition: Role
    angle_train: int
    angle_test: int
    ccr: float
    n_test: int


def evaluate_conditions(templates, partition=None, angle_train=90, angle_test=None, n_pca=None, n_lda=None):
    """Train at one view and score every test role present at the test view."""
    angle_test = angle_train if angle_test is None else angle_test
    rows = None if partition is None else partition.selected_rows()
    train = by_role(templates, Role.TRAIN, angle_train)
    model = fit_cda(feature_set(train, rows), n_pca=n_pca, n_lda=n_lda)
    out = []
    for role in (Role.TEST_NORMAL, Role.TEST_CARRYING, Role.TEST_CLOTHING):
        test = by_role(templates, role, angle_test)
        if test:
            out.append(ConditionReport(role, angle_train, angle_test, evaluate_ccr(model, feature_set(test, rows)), len(test)))
    return model, out


def features_by_angle(templates, roles, rows=None, angles=CASIA_ANGLES):
    roles = {roles} if isinstance(roles, Role) else set(roles)
    out = {}
    for a in angles:
        sel = [t for t in templates if t.role in roles and t.view_angle_deg == a]
        if sel:
            out[a] = feature_set(sel, rows)
    return out


def cross_view(templates, test_role, partition=None, angles=CASIA_ANGLES, workers=None):
    rows = None if partition is None else partition.selected_rows()
    return cross_view_matrix(
        features_by_angle(templates, Role.TRAIN, rows, angles),
        features_by_angle(templates, test_role, rows, angles),
        angles,
        workers=workers,
    )


def summary_table(results):
    """Text table: method rows x (Normal, Carrying, Clothing, Mean, Std) in percent."""
    header = f"{'Method':<32}{'Normal':>9}{'Carrying':>10}{'Clothing':>10}{'Mean':>9}{'Std':>9}"
    lines = [header, "-" * len(header)]
    order = (Role.TEST_NORMAL, Role.TEST_CARRYING, Role.TEST_CLOTHING)
    for name, reports in results.items():
        by = {r.condition: 100.0 * r.ccr for r in reports}
        vals = [by.get(role) for role in order]
        cells = "".join(f"{v:>{w}.2f}" if v is not None else f"{'-':>{w}}" for v, w in zip(vals, (9, 10, 10)))
        got = [v for v in vals if v is not None]
        mean = float(np.mean(got)) if got else float("nan")
        std = float(np.std(got, ddof=1)) if len(got) > 1 else float("nan")
        lines.append(f"{name:<32}{cells}{mean:>9.2f}{std:>9.2f}")
    return "\n".join(lines) + "\n"


@dataclass
class PipelineResult:
    partition: BodyPartition
    reports: dict = field(default_factory=dict)
