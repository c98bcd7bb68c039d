"""Canonical discriminant analysis (PCA then LDA) with nearest-neighbour matching."""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from . import kernels
from .dataio import CASIA_ANGLES, DataError, parallel_map

LDA_RIDGE = 1e-6
MODEL_MAGIC = b"GSCDA\x00"
MODEL_VERSION = 1


@dataclass
class FeatureSet:
    """Row-stacked feature vectors with their labels and acquisition metadata."""

    X: np.ndarray
    labels: list
    conditions: list = field(default_factory=list)
    views: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.labels = [str(s) for s in self.labels]
        n = self.X.shape[0]
        if len(self.labels) != n:
            raise DataError("one label per feature vector required")
        self.conditions = list(self.conditions) or [None] * n
        self.views = list(self.views) or [None] * n

    def __len__(self):
        return self.X.shape[0]

    def subset(self, mask):
        idx = np.flatnonzero(np.asarray(mask))
        return FeatureSet(
            self.X[idx],
            [self.labels[i] for i in idx],
            [self.conditions[i] for i in idx],
            [self.views[i] for i in idx],
        )


def extract_features(templates, rows=None):
    """Flatten the chosen template rows (0-indexed, all if ``None``) row-major."""
    out = []
    for t in templates:
        values = t.values if hasattr(t, "values") else np.asarray(t, dtype=np.float64)
        out.append((values if rows is None else values[np.asarray(rows, dtype=int)]).ravel())
    return np.vstack(out)


# --- PCA and LDA ----------------------------------------------------------


def fit_pca(X, n_components):
    """Principal axes of ``X`` (rows are samples).

    Returns ``(mean, basis, eigenvalues)`` with orthonormal basis columns in
    decreasing variance order. When there are fewer samples than dimensions the
    eigenproblem is solved on the ``n x n`` Gram matrix.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    if n < 2:
        raise DataError("PCA needs at least two samples")
    if not 1 <= n_components <= min(d, n - 1):
        raise DataError(f"n_components={n_components} outside [1, {min(d, n - 1)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    if n < d:
        evals, evecs = np.linalg.eigh(Xc @ Xc.T)
        order = np.argsort(evals)[::-1][:n_components]
        evals = np.maximum(evals[order], 0.0)
        basis = Xc.T @ evecs[:, order]
        norms = np.linalg.norm(basis, axis=0)
        if np.any(norms <= 1e-12 * max(1.0, norms.max())):
            raise DataError("requested more components than the data rank")
        basis /= norms
        # one Gram-Schmidt pass against round-off in small components
        basis, r = np.linalg.qr(basis)
        basis *= np.sign(np.diag(r))
    else:
        evals, evecs = np.linalg.eigh(Xc.T @ Xc)
        order = np.argsort(evals)[::-1][:n_components]
        evals = np.maximum(evals[order], 0.0)
        basis = evecs[:, order]
    return mean, basis, evals / (n - 1)


def data_rank(X, rtol=1e-10):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] < 2:
        return 0
    s = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    return int((s > rtol * max(s.max(), 1e-300)).sum())


@dataclass
class LdaResult:
    basis: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool


def scatter_matrices(Z, labels):
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    labels = np.asarray(labels)
    mu = Z.mean(axis=0)
    d = Z.shape[1]
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    for c in dict.fromkeys(labels.tolist()):
        Zc = Z[labels == c]
        mc = Zc.mean(axis=0)
        D = Zc - mc
        Sw += D.T @ D
        Sb += len(Zc) * np.outer(mc - mu, mc - mu)
    return Sw, Sb


def fit_lda(Z, labels, n_components=None):
    """Discriminant axes solving ``S_b w = lambda S_w w``, top ``c - 1`` by default.

    ``S_w`` gets a ridge of ``1e-6 * trace(S_w) / dim`` so under-sampled classes
    stay solvable. ``degenerate`` flags vanishing between-class scatter.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    labels = [str(s) for s in labels]
    classes = list(dict.fromkeys(labels))
    if len(classes) < 2:
        raise DataError("LDA needs at least two classes")
    if len(labels) != Z.shape[0]:
        raise DataError("one label per sample required")
    Sw, Sb = scatter_matrices(Z, labels)
    dim = Z.shape[1]
    tr = np.trace(Sw)
    if tr <= 0 and np.trace(Sb) <= 0:
        raise DataError("all samples are identical")
    ridge = LDA_RIDGE * (tr / dim if tr > 0 else np.trace(Sb) / dim)
    r_max = min(len(classes) - 1, dim)
    r = r_max if n_components is None else int(n_components)
    if not 1 <= r <= r_max:
        raise DataError(f"LDA components must be in [1, {r_max}]")
    evals, evecs = scipy.linalg.eigh(Sb, Sw + ridge * np.eye(dim))
    order = np.argsort(evals)[::-1][:r]
    evals = evals[order]
    basis = evecs[:, order]
    # deterministic orientation
    signs = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(r)])
    basis = basis * np.where(signs == 0, 1.0, signs)
    degenerate = bool(evals.max() <= 1e-10 * max(1.0, np.abs(evals).max()) or np.trace(Sb) <= 1e-12 * max(tr, 1e-300))
    return LdaResult(basis, evals, degenerate)


# --- CDA model ------------------------------------------------------------


@dataclass
class CdaModel:
    mean: np.ndarray
    pca_basis: np.ndarray
    lda_basis: np.ndarray
    gallery: np.ndarray
    labels: list
    n_classes: int

    @property
    def input_dim(self):
        return self.mean.shape[0]

    def project(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise DataError(f"feature length {X.shape[1]} does not match model input {self.input_dim}")
        return ((X - self.mean) @ self.pca_basis) @ self.lda_basis


def fit_cda(features, labels=None, n_pca=None, n_lda=None):
    """Fit PCA (``2c`` components unless overridden) then LDA; the training set is the gallery.

    The PCA size is clipped to ``min(2c, n - 1, rank)`` for small training sets.
    """
    if isinstance(features, FeatureSet):
        X, labels = features.X, features.labels
    else:
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = [str(s) for s in labels]
    c = len(set(labels))
    if c < 2:
        raise DataError("CDA needs at least two classes")
    n = X.shape[0]
    k = 2 * c if n_pca is None else int(n_pca)
    k = max(1, min(k, n - 1, X.shape[1], data_rank(X)))
    mean, basis, _ = fit_pca(X, k)
    Z = (X - mean) @ basis
    lda = fit_lda(Z, labels, None if n_lda is None else min(int(n_lda), c - 1, k))
    model = CdaModel(mean, basis, lda.basis, Z @ lda.basis, labels, c)
    return model


def nearest_index(gallery, query, rtol=1e-12):
    """Index of the nearest gallery row and its Euclidean distance; ties go to the lowest index."""
    d2 = kernels.sq_distances(gallery, query)
    lo = d2.min()
    i = int(np.flatnonzero(d2 <= lo + rtol * max(lo, 1e-300))[0])
    return i, float(np.sqrt(d2[i]))


def classify_nn(model, query):
    if len(model.labels) == 0:
        raise DataError("empty gallery")
    q = model.project(query)[0]
    i, dist = nearest_index(model.gallery, q)
    return model.labels[i], dist


def predict(model, X, workers=None):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Q = model.project(X)
    return parallel_map(lambda q: model.labels[nearest_index(model.gallery, q)[0]], list(Q), workers)


def evaluate_ccr(model, test, labels=None):
    """Fraction of test vectors whose nearest gallery item has the right label."""
    if isinstance(test, FeatureSet):
        X, labels = test.X, test.labels
    else:
        X = np.asarray(test, dtype=np.float64)
    if X.size == 0 or len(labels) == 0:
        raise DataError("empty test set")
    pred = predict(model, X)
    return float(np.mean([p == str(t) for p, t in zip(pred, labels)]))


def cross_view_matrix(train_by_angle, test_by_angle, angles=CASIA_ANGLES, n_pca=None, n_lda=None, workers=None):
    """CCR of a model trained at ``angles[i]`` and tested at ``angles[j]``."""
    for name, m in (("training", train_by_angle), ("test", test_by_angle)):
        missing = [a for a in angles if a not in m or len(m[a]) == 0]
        if missing:
            raise DataError(f"{name} data missing view angles {missing}")
    models = parallel_map(lambda a: fit_cda(train_by_angle[a], n_pca=n_pca, n_lda=n_lda), angles, workers)
    out = np.zeros((len(angles), len(angles)))
    for i, model in enumerate(models):
        for j, b in enumerate(angles):
            out[i, j] = evaluate_ccr(model, test_by_angle[b])
    return out


def save_matrix_csv(matrix, angles, path, corner="train\\test"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([corner, *angles])
        for a, row in zip(angles, matrix):
            w.writerow([a, *(f"{v:.4f}" for v in row)])
    return path


# --- model file -----------------------------------------------------------
# layout: magic, u32 version, u32 dims d/k/r/n/c, then little-endian f64 blocks
# mean[d], pca[d*k], lda[k*r], gallery[n*r], then u32 length + UTF-8 JSON labels


def save_model(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d, k = model.pca_basis.shape
    r = model.lda_basis.shape[1]
    n = model.gallery.shape[0]
    labels = json.dumps(model.labels).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<6I", MODEL_VERSION, d, k, r, n, model.n_classes))
        for block in (model.mean, model.pca_basis, model.lda_basis, model.gallery):
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(labels)))
        fh.write(labels)
    return path


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file {path} does not exist")
    buf = io.BytesIO(path.read_bytes())
    if buf.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise DataError(f"{path} is not a CDA model file")
    version, d, k, r, n, c = struct.unpack("<6I", buf.read(24))
    if version != MODEL_VERSION:
        raise DataError(f"unsupported model version {version}")

    def block(count, shape):
        raw = buf.read(8 * count)
        if len(raw) != 8 * count:
            raise DataError(f"{path} is truncated")
        return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)

    mean = block(d, (d,))
    pca = block(d * k, (d, k))
    lda = block(k * r, (k, r))
    gallery = block(n * r, (n, r))
    (length,) = struct.unpack("<I", buf.read(4))
    labels = json.loads(buf.read(length).decode("utf-8"))
    return CdaModel(mean, pca, lda, gallery, labels, c)


def export_model_csv(model, out_dir):
    """Dump every model matrix to CSV for inspection."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("mean", "pca_basis", "lda_basis", "gallery"):
        np.savetxt(out_dir / f"{name}.csv", np.atleast_2d(getattr(model, name)), delimiter=",", fmt="%.17g")
    (out_dir / "labels.txt").write_text("\n".join(model.labels) + "\n")
    return out_dir
