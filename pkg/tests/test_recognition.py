import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitseg.dataio import CASIA_ANGLES, DataError
from gaitseg.recognition import (
    CdaModel,
    FeatureSet,
    classify_nn,
    cross_view_matrix,
    data_rank,
    evaluate_ccr,
    export_model_csv,
    extract_features,
    fit_cda,
    fit_lda,
    fit_pca,
    load_model,
    nearest_index,
    predict,
    save_matrix_csv,
    save_model,
)
from gaitseg.templates import GaitTemplate, TemplateKind

from oracles import fisher_direction


def clustered(n_classes, per_class, dim, spread=0.1, seed=0):
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(n_classes, dim)) * 5
    X = np.repeat(centres, per_class, axis=0) + spread * rng.normal(size=(n_classes * per_class, dim))
    labels = [f"s{c:03d}" for c in range(n_classes) for _ in range(per_class)]
    return X, labels


# --- PCA ----------------------------------------------------------------------


def test_pca_on_a_line():
    rng = np.random.default_rng(0)
    direction = np.array([1.0, 2.0, -2.0]) / 3.0
    X = rng.normal(size=(50, 1)) * direction + np.array([1.0, 0.0, 5.0])
    _, basis, evals = fit_pca(X, 1)
    assert abs(abs(basis[:, 0] @ direction) - 1) < 1e-6
    assert evals[0] > 0


def test_pca_isotropic_sample():
    X = np.random.default_rng(1).normal(size=(4000, 2))
    _, basis, evals = fit_pca(X, 2)
    np.testing.assert_allclose(basis.T @ basis, np.eye(2), atol=1e-12)
    assert evals[0] >= evals[1]
    assert evals[0] / evals[1] < 1.15
    np.testing.assert_allclose(evals, np.linalg.eigvalsh(np.cov(X, rowvar=False))[::-1], rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 40), st.integers(2, 60), st.integers(0, 2**32 - 1))
def test_pca_orthonormal_both_routes(n, d, seed):
    X = np.random.default_rng(seed).normal(size=(n, d))
    k = min(n - 1, d)
    _, basis, evals = fit_pca(X, k)
    assert np.abs(basis.T @ basis - np.eye(k)).max() < 1e-8
    assert np.all(np.diff(evals) <= 1e-9 * max(1.0, evals[0]))


def test_pca_gram_route_matches_covariance_route():
    X = np.random.default_rng(2).normal(size=(8, 20))
    _, b_gram, e_gram = fit_pca(X, 5)
    Xc = X - X.mean(axis=0)
    evals, evecs = np.linalg.eigh(Xc.T @ Xc)
    np.testing.assert_allclose(e_gram, evals[::-1][:5] / 7, rtol=1e-9)
    np.testing.assert_allclose(np.abs(b_gram.T @ evecs[:, ::-1][:, :5]), np.eye(5), atol=1e-8)


def test_pca_component_bounds():
    with pytest.raises(DataError):
        fit_pca(np.zeros((1, 3)), 1)
    with pytest.raises(DataError):
        fit_pca(np.random.default_rng(0).normal(size=(5, 3)), 4)


def test_two_c_components_for_many_classes():
    X, labels = clustered(124, 3, 300, spread=1.0, seed=3)
    model = fit_cda(X, labels)
    assert model.pca_basis.shape == (300, 248)
    assert model.lda_basis.shape == (248, 123)


def test_pca_size_clipped_by_rank():
    X, labels = clustered(5, 2, 40, seed=4)
    model = fit_cda(X, labels)
    assert model.pca_basis.shape[1] == min(10, len(X) - 1, data_rank(X))


# --- LDA ----------------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_two_class_axis_matches_closed_form(dim, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(dim, dim))
    X1 = rng.normal(size=(60, dim)) @ A
    X2 = rng.normal(size=(60, dim)) @ A + 4 * rng.normal(size=dim)
    lda = fit_lda(np.vstack([X1, X2]), ["a"] * 60 + ["b"] * 60)
    w = lda.basis[:, 0] / np.linalg.norm(lda.basis[:, 0])
    assert abs(w @ fisher_direction(X1, X2)) >= 0.99


def test_identical_means_flagged_degenerate():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(40, 2))
    B = rng.normal(size=(40, 2)) * 2
    X = np.vstack([A - A.mean(axis=0), B - B.mean(axis=0)])
    lda = fit_lda(X, ["a"] * 40 + ["b"] * 40)
    assert lda.degenerate
    assert np.allclose(lda.eigenvalues, 0, atol=1e-10)


def test_lda_at_most_c_minus_one_axes():
    X, labels = clustered(3, 10, 5, seed=6)
    lda = fit_lda(X, labels)
    assert lda.basis.shape[1] == 2
    with pytest.raises(DataError):
        fit_lda(X, labels, n_components=3)
    with pytest.raises(DataError):
        fit_lda(X, ["x"] * len(X))


def test_lda_under_sampled_still_solvable():
    X, labels = clustered(4, 2, 30, seed=7)
    lda = fit_lda(X, labels)
    assert np.all(np.isfinite(lda.basis))


# --- nearest neighbour and CCR -------------------------------------------------


def _identity_model(gallery, labels):
    d = gallery.shape[1]
    return CdaModel(np.zeros(d), np.eye(d), np.eye(d), gallery, labels, len(set(labels)))


def test_exact_match_and_midpoint_tie():
    gallery = np.array([[0.0, 0.0], [2.0, 2.0]])
    model = _identity_model(gallery, ["a", "b"])
    assert classify_nn(model, [2.0, 2.0]) == ("b", 0.0)
    assert classify_nn(model, [1.0, 1.0])[0] == "a"
    model = _identity_model(gallery[::-1].copy(), ["b", "a"])
    assert classify_nn(model, [1.0, 1.0])[0] == "b"
    assert nearest_index(gallery, np.array([1.0, 1.0]))[0] == 0


def test_separable_subjects_all_correct():
    X, labels = clustered(10, 4, 30, seed=8)
    train = [i for i in range(len(X)) if i % 4 < 2]
    test = [i for i in range(len(X)) if i % 4 >= 2]
    model = fit_cda(X[train], [labels[i] for i in train])
    assert evaluate_ccr(model, X[test], [labels[i] for i in test]) == 1.0


def test_gallery_duplicates_and_adversarial_labels():
    X, labels = clustered(6, 3, 12, seed=9)
    model = fit_cda(X, labels)
    assert evaluate_ccr(model, FeatureSet(X, labels)) == 1.0
    wrong = [labels[(i + 3) % len(labels)] for i in range(len(labels))]
    assert evaluate_ccr(model, X, wrong) == 0.0
    with pytest.raises(DataError):
        evaluate_ccr(model, np.zeros((0, 12)), [])


def test_predict_parallel_matches_serial():
    X, labels = clustered(5, 4, 10, seed=10)
    model = fit_cda(X, labels)
    assert predict(model, X, workers=3) == predict(model, X)


def test_feature_dimension_checked():
    X, labels = clustered(3, 3, 6, seed=11)
    model = fit_cda(X, labels)
    with pytest.raises(DataError):
        classify_nn(model, np.zeros(5))


def test_extract_rows():
    t = GaitTemplate(TemplateKind.GEI, np.arange(12.0).reshape(4, 3))
    np.testing.assert_array_equal(extract_features([t], [2, 3]), [[6, 7, 8, 9, 10, 11]])
    assert extract_features([t, t]).shape == (2, 12)


def test_feature_set_subset():
    fs = FeatureSet(np.eye(3), ["a", "b", "c"], ["n", "n", "c"], [0, 90, 90])
    sub = fs.subset([False, True, True])
    assert sub.labels == ["b", "c"] and sub.views == [90, 90]
    with pytest.raises(DataError):
        FeatureSet(np.eye(3), ["a"])


# --- cross view ---------------------------------------------------------------


def test_cross_view_diagonal_on_gallery_duplicates():
    angles = (0, 90, 180)
    data = {}
    for j, a in enumerate(angles):
        X, labels = clustered(4, 3, 8, seed=20 + j)
        data[a] = FeatureSet(X, labels)
    m = cross_view_matrix(data, data, angles)
    assert m.shape == (3, 3)
    np.testing.assert_array_equal(np.diag(m), 1.0)
    with pytest.raises(DataError):
        cross_view_matrix(data, data, CASIA_ANGLES)


# --- model file -----------------------------------------------------------------


def test_model_round_trip_is_bit_exact(tmp_path):
    X, labels = clustered(5, 3, 20, seed=12)
    model = fit_cda(X, labels)
    path = save_model(model, tmp_path / "m.bin")
    back = load_model(path)
    for name in ("mean", "pca_basis", "lda_basis", "gallery"):
        np.testing.assert_array_equal(getattr(back, name), getattr(model, name))
    assert back.labels == model.labels and back.n_classes == 5
    assert predict(back, X) == predict(model, X)
    out = export_model_csv(back, tmp_path / "csv")
    assert np.loadtxt(out / "gallery.csv", delimiter=",").shape == model.gallery.shape


def test_model_file_errors(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a model")
    with pytest.raises(DataError):
        load_model(bad)
    X, labels = clustered(3, 3, 5, seed=13)
    raw = save_model(fit_cda(X, labels), tmp_path / "m.bin").read_bytes()
    (tmp_path / "cut.bin").write_bytes(raw[:60])
    with pytest.raises(DataError):
        load_model(tmp_path / "cut.bin")
    with pytest.raises(DataError):
        load_model(tmp_path / "missing.bin")


def test_matrix_csv(tmp_path):
    path = save_matrix_csv(np.array([[1.0, 0.5], [0.25, 1.0]]), (0, 18), tmp_path / "cv.csv")
    assert path.read_text().splitlines() == ["train\\test,0,18", "0,1.0000,0.5000", "18,0.2500,1.0000"]
