"""NumPy implementations of the hot loops, used when the extension is absent."""

import numpy as np


def row_entropy(levels):
    levels = np.ascontiguousarray(levels, dtype=np.uint8)
    n, m = levels.shape
    if m == 0:
        return np.zeros(n)
    offsets = levels.astype(np.int64) + 256 * np.arange(n)[:, None]
    counts = np.bincount(offsets.ravel(), minlength=256 * n).reshape(n, 256)
    p = counts / m
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, p * np.log2(p), 0.0)
    return -terms.sum(axis=1) + 0.0


def lars_gammas(corr, direction, common, active, tol=1e-12):
    corr = np.asarray(corr, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    active = np.asarray(active, dtype=bool)
    qa = np.einsum("ij,ij->i", direction, direction) - common
    qb = -2.0 * (np.einsum("ij,ij->i", corr, direction) - common)
    qc = np.einsum("ij,ij->i", corr, corr) - common

    def admissible(r):
        return (r >= -tol) & (r <= 1.0 + tol)

    out = np.full(corr.shape[0], np.inf)
    linear = np.abs(qa) <= tol * common
    with np.errstate(divide="ignore", invalid="ignore"):
        r_lin = np.where(qb != 0.0, -qc / qb, np.inf)
        out = np.where(linear & admissible(r_lin), r_lin, out)
        sq = np.sqrt(np.maximum(qb * qb - 4.0 * qa * qc, 0.0))
        r1 = (-qb - sq) / (2.0 * qa)
        r2 = (-qb + sq) / (2.0 * qa)
    quad = np.full(corr.shape[0], np.inf)
    quad = np.where(admissible(r1), r1, quad)
    quad = np.where(admissible(r2) & (r2 < quad), r2, quad)
    out = np.where(linear, out, quad)
    out = np.where(np.isfinite(out), np.maximum(out, 0.0), out)
    out[active] = np.inf
    return out


def sq_distances(gallery, query):
    diff = np.asarray(gallery, dtype=np.float64) - np.asarray(query, dtype=np.float64)
    return np.einsum("ij,ij->i", diff, diff)
