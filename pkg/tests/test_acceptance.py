"""Acceptance checks, one recorded pass/fail line per criterion.

Every check asserts at its stated tolerance and also records a line that the
conftest prints in the terminal summary under "acceptance criteria".
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from gaitseg.cli import RunConfig, run_pipeline
from gaitseg.dataio import CASIA_ANGLES, Role
from gaitseg.pipeline import (
    build_templates,
    by_role,
    evaluate_conditions,
    feature_set,
    features_by_angle,
    learn_partition,
)
from gaitseg.recognition import cross_view_matrix, fit_lda, fit_pca
from gaitseg.segmentation import BodyPartition, detect_change_points, load_partition
from gaitseg.synth import SyntheticConfig, generate_sequences, leg_band
from gaitseg.templates import compute_gei, compute_geni, compute_gppe
from gaitseg.viewfree import PoseEstimator, fit_view_models, pose_confusion, view_free_ccr

from oracles import dp_segmentation, fisher_direction, pixel_gei, pixel_geni, pixel_gppe

TEST_ROLES = (Role.TEST_NORMAL, Role.TEST_CARRYING, Role.TEST_CLOTHING)


# --- 1: segmentation against the DP oracle ----------------------------------------


def separated_instance(rng, n_bounds=2, sigma=1.0):
    """Piecewise-constant rows with every jump at least 10 sigma per coordinate."""
    n = int(rng.integers(4, 13))
    p = int(rng.integers(1, 4))
    bounds = np.sort(rng.choice(np.arange(1, n), size=n_bounds, replace=False))
    level = rng.normal(size=p)
    E = np.empty((n, p))
    edges = [0, *bounds, n]
    for lo, hi in zip(edges, edges[1:]):
        E[lo:hi] = level
        level = level + rng.choice([-1.0, 1.0], size=p) * rng.uniform(10.0, 20.0, size=p) * sigma
    return E + sigma * rng.normal(size=E.shape)


def test_criterion_1_lars_matches_dp(acceptance):
    rng = np.random.default_rng(0)
    instances = [separated_instance(rng) for _ in range(200)]
    start = time.perf_counter()
    mismatches = []
    for i, E in enumerate(instances):
        path = detect_change_points(E, k_max=2)
        for k in (1, 2):
            if path.sets[k - 1] != dp_segmentation(E, k):
                mismatches.append((i, k))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 10.0
    acceptance(
        "1",
        ok,
        f"{400 - len(mismatches)}/400 LARS sets equal DP at k in {{1,2}} over 200 instances "
        f"(mismatches {mismatches}), {elapsed:.2f} s < 10 s",
    )
    assert elapsed < 10.0
    assert not mismatches


# --- 2: path properties ---------------------------------------------------------


def test_criterion_2_path_nested_and_lambda_non_increasing(acceptance):
    rng = np.random.default_rng(0)
    failures = 0
    for _ in range(100):
        n = int(rng.integers(8, 65))
        p = int(rng.integers(1, 46))
        E = rng.uniform(0.0, 6.0, size=(n, p))
        path = detect_change_points(E, k_max=int(rng.integers(1, min(n - 1, 10) + 1)))
        sets = [set(s) for s in path.sets]
        nested = all(a < b and len(b) == len(a) + 1 for a, b in zip(sets, sets[1:]))
        lam = np.asarray(path.lambdas)
        monotone = bool(np.all(np.diff(lam) <= 1e-12 * lam[0]))
        failures += not (nested and monotone)
    acceptance("2", failures == 0, f"{100 - failures}/100 random motion matrices nested with non-increasing lambda")
    assert failures == 0


# --- 3: template formulas -------------------------------------------------------


def test_criterion_3_template_oracles_and_edge_cases(acceptance):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        T, H, W = (int(v) for v in rng.integers(2, 9, size=3))
        frames = (rng.random((T, H, W)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
        for compute, oracle in ((compute_gei, pixel_gei), (compute_geni, pixel_geni), (compute_gppe, pixel_gppe)):
            worst = max(worst, float(np.abs(compute(frames).values - oracle(frames)).max()))
    const = np.ones((6, 3, 3), dtype=np.uint8)
    half = np.concatenate([np.zeros((4, 2, 2)), np.ones((4, 2, 2))]).astype(np.uint8)
    edges = [
        float(np.abs(compute_geni(const).values).max()),
        float(np.abs(compute_geni(np.zeros_like(const)).values).max()),
        float(np.abs(compute_geni(half).values - 1.0).max()),
        float(np.abs(compute_gppe(const).values - 1.0).max()),
        float(np.abs(compute_gppe(np.zeros_like(const)).values - 1.0).max()),
    ]
    ok = worst <= 1e-12 and max(edges) <= 1e-12
    acceptance("3", ok, f"max oracle deviation {worst:.2e} over 50 cycles, max edge-case deviation {max(edges):.2e} (tol 1e-12)")
    assert worst <= 1e-12
    assert max(edges) <= 1e-12


# --- 4: CDA checks --------------------------------------------------------------


def test_criterion_4_pca_orthonormal_and_lda_closed_form(acceptance):
    rng = np.random.default_rng(0)
    gram = 0.0
    # both the covariance route (n > d) and the Gram route (n < d)
    for n, d in [(200, 30), (30, 200), (12, 4096), (50, 50)]:
        X = rng.normal(size=(n, d))
        _, basis, _ = fit_pca(X, min(n - 1, d))
        gram = max(gram, float(np.abs(basis.T @ basis - np.eye(basis.shape[1])).max()))
    cosines = []
    for _ in range(20):
        dim = int(rng.integers(2, 8))
        A = rng.normal(size=(dim, dim))
        X1 = rng.normal(size=(80, dim)) @ A
        X2 = rng.normal(size=(80, dim)) @ A + 6.0 * rng.normal(size=dim)
        lda = fit_lda(np.vstack([X1, X2]), ["a"] * 80 + ["b"] * 80)
        w = lda.basis[:, 0] / np.linalg.norm(lda.basis[:, 0])
        cosines.append(abs(float(w @ fisher_direction(X1, X2))))
    ok = gram < 1e-8 and min(cosines) >= 0.99
    acceptance("4", ok, f"PCA Gram deviation {gram:.2e} < 1e-8, min LDA cosine {min(cosines):.6f} >= 0.99 over 20 instances")
    assert gram < 1e-8
    assert min(cosines) >= 0.99


# --- 5: synthetic end to end ----------------------------------------------------


def test_criterion_5_synthetic_end_to_end(acceptance):
    cfg = SyntheticConfig(n_subjects=10, n_cycles_per_subject=4, noise_flip_prob=0.02)
    data = generate_sequences(cfg)
    templates = build_templates(data.sequences, data.roles)
    partition = learn_partition(by_role(templates, Role.VALIDATION))
    lo, hi = partition.selected_range()
    band = leg_band(cfg.height)
    _, selected = evaluate_conditions(templates, partition)
    _, whole = evaluate_conditions(templates, BodyPartition.whole(cfg.height))
    sel = {r.condition: r.ccr for r in selected}
    base = {r.condition: r.ccr for r in whole}
    in_band = abs(lo - band[0]) <= 1 and abs(hi - band[1]) <= 1
    gap = 100.0 * (sel[Role.TEST_CLOTHING] - base[Role.TEST_CLOTHING])
    ok = in_band and sel[Role.TEST_NORMAL] >= 0.95 and gap >= 10.0
    acceptance(
        "5",
        ok,
        f"selected rows {lo}-{hi} vs leg band {band[0]}-{band[1]} (tol 1 row); held-out normal CCR "
        f"{sel[Role.TEST_NORMAL]:.3f} >= 0.95 (carrying {sel[Role.TEST_CARRYING]:.3f}); clothing "
        f"{100 * sel[Role.TEST_CLOTHING]:.1f} vs whole GEI {100 * base[Role.TEST_CLOTHING]:.1f}, gap {gap:.1f} >= 10 points",
    )
    assert in_band
    assert sel[Role.TEST_NORMAL] >= 0.95
    assert gap >= 10.0


# --- 6: view-free consistency ----------------------------------------------------


@pytest.fixture(scope="module")
def multiview():
    cfg = SyntheticConfig(view_angles=CASIA_ANGLES, noise_flip_prob=0.02)
    data = generate_sequences(cfg)
    templates = build_templates(data.sequences, data.roles)
    partition = learn_partition(by_role(templates, Role.VALIDATION))
    return templates, partition


def test_criterion_6_view_free_consistency(multiview, acceptance):
    templates, partition = multiview
    rows = partition.selected_rows()
    train = features_by_angle(templates, Role.TRAIN, rows)
    estimator = PoseEstimator.from_views(train)
    models = fit_view_models(train)
    exact = True
    for role in TEST_ROLES:
        test = features_by_angle(templates, role, rows)
        diagonal = np.diag(cross_view_matrix(train, test))
        for i, a in enumerate(CASIA_ANGLES):
            exact &= view_free_ccr(estimator, models, test[a], oracle_views=True) == diagonal[i]
    tests = feature_set([t for t in templates if t.role in TEST_ROLES], rows)
    diag = np.diag(pose_confusion(estimator, tests))
    ok = exact and diag.min() >= 97.0
    acceptance(
        "6",
        ok,
        f"oracle view-free CCR equals cross-view diagonal exactly: {exact}; pose diagonal min {diag.min():.1f}% "
        f"mean {diag.mean():.1f}% >= 97% over {len(tests)} test GEIs",
    )
    assert exact
    assert diag.min() >= 97.0


# --- 7: CASIA-B reproduction (only when the data is present) -----------------------

CASIA_MANIFEST = os.environ.get("GAITSEG_CASIA_MANIFEST")
CASIA_TARGET = {"TestNormal": 98.39, "TestCarrying": 75.89, "TestClothing": 91.96}


@pytest.mark.skipif(not CASIA_MANIFEST or not Path(CASIA_MANIFEST).is_file(), reason="CASIA-B manifest not available (set GAITSEG_CASIA_MANIFEST)")
def test_criterion_7_casia_reproduction(tmp_path, acceptance):
    art = run_pipeline(RunConfig(manifest=Path(CASIA_MANIFEST), out_dir=tmp_path))
    lines = art["report"].read_text().splitlines()[1:]
    ccr = {row.split(",")[0]: 100.0 * float(row.split(",")[3]) for row in lines}
    lo, hi = load_partition(art["partition"]).selected_range()
    close = all(abs(ccr[k] - v) <= 2.0 for k, v in CASIA_TARGET.items())
    ok = close and (lo, hi) == (46, 64)
    acceptance("7", ok, f"90 degree CCRs {ccr} vs {CASIA_TARGET} (tol 2 points); selected rows {lo}-{hi} vs 46-64")
    assert close
    assert (lo, hi) == (46, 64)


def test_criterion_7_reported_when_absent(acceptance):
    if CASIA_MANIFEST and Path(CASIA_MANIFEST).is_file():
        pytest.skip("CASIA-B present; the reproduction test reports criterion 7")
    acceptance("7", None, "CASIA-B not available locally, criteria 1-6 constitute acceptance")
