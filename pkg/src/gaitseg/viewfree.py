"""Recognition without a known view: estimate the pose, then match within that view."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import CASIA_ANGLES, DataError
from .recognition import FeatureSet, classify_nn, fit_cda, nearest_index, save_matrix_csv


@dataclass
class PoseEstimator:
    """Nearest-neighbour view classifier over raw selected-part features.

    Samples are kept sorted by angle so equal distances resolve to the smaller angle.
    """

    X: np.ndarray
    angles: np.ndarray

    @classmethod
    def from_views(cls, features_by_angle, required=CASIA_ANGLES):
        missing = [a for a in required if a not in features_by_angle or len(features_by_angle[a]) == 0]
        if missing:
            raise DataError(f"pose gallery is missing view angles {missing}")
        blocks, angles = [], []
        for a in sorted(features_by_angle):
            fs = features_by_angle[a]
            X = fs.X if isinstance(fs, FeatureSet) else np.atleast_2d(np.asarray(fs, dtype=np.float64))
            blocks.append(X)
            angles.extend([int(a)] * X.shape[0])
        return cls(np.vstack(blocks), np.asarray(angles, dtype=int))

    def __len__(self):
        return self.X.shape[0]


def estimate_view(estimator, query):
    if len(estimator) == 0:
        raise DataError("empty pose estimator")
    query = np.asarray(query, dtype=np.float64).ravel()
    if query.shape[0] != estimator.X.shape[1]:
        raise DataError(f"query length {query.shape[0]} does not match estimator features {estimator.X.shape[1]}")
    i, _ = nearest_index(estimator.X, query)
    return int(estimator.angles[i])


def fit_view_models(train_by_angle, angles=CASIA_ANGLES, n_pca=None, n_lda=None):
    return {a: fit_cda(train_by_angle[a], n_pca=n_pca, n_lda=n_lda) for a in angles}


def recognize_view_free(estimator, per_view_models, query, view=None):
    """Predicted subject for ``query``; ``view`` overrides the pose estimate (oracle use)."""
    angle = estimate_view(estimator, query) if view is None else int(view)
    model = per_view_models.get(angle)
    if model is None:
        raise DataError(f"no recognition model for view {angle}")
    return classify_nn(model, query)[0], angle


def view_free_ccr(estimator, per_view_models, test, oracle_views=False):
    """CCR over a feature set; with ``oracle_views`` the true view replaces the estimate."""
    if len(test) == 0:
        raise DataError("empty test set")
    hits = 0
    for x, label, view in zip(test.X, test.labels, test.views):
        pred, _ = recognize_view_free(estimator, per_view_models, x, view=view if oracle_views else None)
        hits += pred == label
    return hits / len(test)


def pose_confusion(estimator, test, angles=CASIA_ANGLES):
    """Row-normalized percentages: real angle (rows) x predicted angle (columns)."""
    index = {a: i for i, a in enumerate(angles)}
    counts = np.zeros((len(angles), len(angles)))
    for x, view in zip(test.X, test.views):
        counts[index[int(view)], index[estimate_view(estimator, x)]] += 1
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, 100.0 * counts / totals, 0.0)


def save_confusion_csv(matrix, path, angles=CASIA_ANGLES):
    return save_matrix_csv(matrix, angles, path, corner="real\\predicted")
