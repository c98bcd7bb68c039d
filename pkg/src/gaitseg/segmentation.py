"""Body-part segmentation by group fused Lasso on motion matrices.

The piecewise-constant approximation ``V`` of a motion matrix ``E`` is
rewritten as a group Lasso in the row increments ``beta_i = v_{i+1} - v_i``
over a centred step design. Change points are found with group LARS, which
activates one increment row at a time along a piecewise-affine path.

Boundaries are 1-indexed: boundary ``i`` separates rows ``i`` and ``i + 1``.
Parts are inclusive 1-indexed row intervals.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .dataio import DataError, parallel_map
from .motion import MotionMatrix, assemble_motion_matrix

log = logging.getLogger(__name__)

DEFAULT_K_MAX = 3
DEFAULT_TOP_K = 2
CONSENSUS_TOLERANCE = 1


def _matrix(E):
    values = E.values if isinstance(E, MotionMatrix) else E
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise DataError("expected an N x P matrix")
    return values


def step_design(n):
    """``n x (n-1)`` matrix with ones strictly below the diagonal (``x_ij = 1`` iff ``i > j``)."""
    return np.tril(np.ones((n, n - 1)), -1)


def position_weights(n):
    """Per-boundary weights ``sqrt(n / (i (n - i)))`` that remove the edge bias of the first step."""
    i = np.arange(1, n, dtype=np.float64)
    return np.sqrt(n / (i * (n - i)))


def gfl_objective(E, V, lam, weights=None):
    """``||E - V||_F^2 + lam * sum_i ||v_{i+1} - v_i||_2 / w_i`` (``w_i = 1`` by default)."""
    E = _matrix(E)
    V = _matrix(V)
    if E.shape != V.shape:
        raise DataError(f"shape mismatch {E.shape} vs {V.shape}")
    if lam < 0:
        raise DataError("lambda must be nonnegative")
    jumps = np.linalg.norm(np.diff(V, axis=0), axis=1)
    if weights is not None:
        jumps = jumps / np.asarray(weights, dtype=np.float64)
    return float(((E - V) ** 2).sum() + lam * jumps.sum())


def reformulate(E):
    """Centred step design and centred target for the group Lasso form."""
    E = _matrix(E)
    n = E.shape[0]
    if n < 2:
        raise DataError("need at least two rows")
    X = step_design(n)
    return X - X.mean(axis=0), E - E.mean(axis=0)


def piecewise_constant(E, boundaries):
    """Segment-mean reconstruction of ``E`` for a boundary set."""
    E = _matrix(E)
    edges = [0, *sorted(int(b) for b in boundaries), E.shape[0]]
    V = np.empty_like(E)
    for lo, hi in zip(edges, edges[1:]):
        V[lo:hi] = E[lo:hi].mean(axis=0)
    return V


@dataclass
class ChangePointPath:
    """Nested boundary sets along the group-LARS path, with the entry penalties."""

    sets: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    degenerate: bool = False

    def __iter__(self):
        return iter(zip(self.sets, self.lambdas))

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, k):
        return self.sets[k], self.lambdas[k]

    @property
    def final(self):
        return self.sets[-1] if self.sets else ()


def _first_min(values, rtol=1e-12):
    lo = values.min()
    return int(np.flatnonzero(values <= lo + rtol * max(abs(lo), 1e-300))[0])


def detect_change_points(E, k_max=DEFAULT_K_MAX, weighted=True):
    """Run group LARS until ``k_max`` boundaries are active.

    Returns a :class:`ChangePointPath` whose ``k``-th set holds ``k + 1``
    boundaries, each paired with the penalty ``lambda`` at which the last one
    entered. ``lambda`` is scaled for the objective ``||.||_F^2 + lambda * sum
    ||beta_i||`` so ``lambda = 2 * ||correlation||`` at entry. The path stops
    early when the residual vanishes; a constant ``E`` yields an empty,
    ``degenerate`` path.
    """
    E = _matrix(E)
    n = E.shape[0]
    if not 1 <= k_max <= n - 1:
        raise DataError(f"k_max must be in [1, {n - 1}], got {k_max}")
    Xc, Ec = reformulate(E)
    if weighted:
        Xc = Xc * position_weights(n)
    gram = Xc.T @ Xc
    corr = Xc.T @ Ec
    norms = np.einsum("ij,ij->i", corr, corr)

    scale = np.linalg.norm(E)
    tiny = (1e-10 * scale) ** 2
    if scale == 0 or norms.max() <= tiny:
        return ChangePointPath(degenerate=True)

    first = int(np.flatnonzero(norms >= norms.max() * (1 - 1e-12))[0])
    active = [first]
    mask = np.zeros(n - 1, dtype=np.uint8)
    mask[first] = 1
    common = float(norms[first])
    path = ChangePointPath([(first + 1,)], [2.0 * np.sqrt(common)])

    while len(active) < k_max:
        w = np.linalg.solve(gram[np.ix_(active, active)], corr[active])
        direction = gram[:, active] @ w
        gammas = kernels.lars_gammas(corr, direction, common, mask)
        if not np.isfinite(gammas).any():
            break
        j = _first_min(gammas)
        gamma = float(gammas[j])
        corr = corr - gamma * direction
        common = float(np.mean(np.einsum("ij,ij->i", corr[active], corr[active])))
        if common <= tiny:
            break
        active.append(j)
        mask[j] = 1
        path.sets.append(tuple(sorted(b + 1 for b in active)))
        path.lambdas.append(2.0 * np.sqrt(common))
    return path


def path_rows(path):
    """Rows ``(k, lambda, boundaries...)`` for the path dump."""
    return [[k + 1, lam, *bounds] for k, (bounds, lam) in enumerate(path)]


def save_path_csv(paths, out):
    """Write one or several paths as ``k,lambda,boundaries...``; runs separated by ``run`` column when many."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(paths, ChangePointPath):
        paths = [paths]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        many = len(paths) > 1
        w.writerow((["run"] if many else []) + ["k", "lambda", "boundaries"])
        for r, p in enumerate(paths):
            for row in path_rows(p):
                row[1] = repr(float(row[1]))
                w.writerow(([r] if many else []) + row)
    return out


# --- partitions ----------------------------------------------------------


@dataclass
class BodyPartition:
    n_rows: int
    parts: list
    scores: np.ndarray
    selected: np.ndarray = None
    boundaries: tuple = ()
    runs: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.parts = [(int(a), int(b)) for a, b in self.parts]
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.selected is None:
            self.selected = np.zeros(len(self.parts), dtype=bool)
        self.selected = np.asarray(self.selected, dtype=bool)
        expected = 1
        for a, b in self.parts:
            if a != expected or b < a:
                raise DataError(f"parts do not partition rows 1..{self.n_rows}: {self.parts}")
            expected = b + 1
        if expected != self.n_rows + 1:
            raise DataError(f"parts do not partition rows 1..{self.n_rows}: {self.parts}")
        if len(self.scores) != len(self.parts) or len(self.selected) != len(self.parts):
            raise DataError("one score and one selection flag per part")
        if not self.boundaries:
            self.boundaries = tuple(b for _, b in self.parts[:-1])

    def selected_rows(self):
        """0-indexed GEI rows of the selected parts, ascending."""
        rows = [np.arange(a - 1, b) for (a, b), s in zip(self.parts, self.selected) if s]
        return np.concatenate(rows) if rows else np.zeros(0, dtype=int)

    def selected_range(self):
        rows = self.selected_rows()
        return (int(rows[0]) + 1, int(rows[-1]) + 1) if rows.size else None

    @classmethod
    def whole(cls, n_rows):
        return cls(n_rows, [(1, n_rows)], [0.0], [True])


def parts_from_boundaries(boundaries, n_rows):
    edges = [0, *sorted(boundaries), n_rows]
    return [(lo + 1, hi) for lo, hi in zip(edges, edges[1:])]


def score_parts(parts, motion_values):
    """Mean motion entry within each part over all columns."""
    motion_values = _matrix(motion_values)
    return np.array([motion_values[a - 1 : b].mean() for a, b in parts])


def consensus_boundaries(boundary_sets, tolerance=CONSENSUS_TOLERANCE):
    """Boundaries supported, within ``tolerance`` rows, by a strict majority of runs."""
    runs = [set(s) for s in boundary_sets]
    need = len(runs) // 2 + 1
    exact = {}
    for s in runs:
        for b in s:
            exact[b] = exact.get(b, 0) + 1

    def support(b):
        return sum(any(abs(b - x) <= tolerance for x in s) for s in runs)

    ranked = sorted(exact, key=lambda b: (-support(b), -exact[b], b))
    chosen = []
    for b in ranked:
        if support(b) < need:
            break
        if all(abs(b - c) > tolerance for c in chosen):
            chosen.append(b)
    return tuple(sorted(chosen))


def segment_motion(motion, L=5, bag_size=45, k_max=DEFAULT_K_MAX, seed=0, weighted=True, workers=None):
    """Segment rows by consensus over ``L`` without-replacement bags of motion columns.

    Each bag of columns gets its own group-LARS run; boundaries kept by a
    majority of runs (within one row) define the parts, which are then scored
    by mean motion over all columns.
    """
    E = _matrix(motion)
    if L < 1:
        raise DataError("L must be at least 1")
    if not 1 <= bag_size <= E.shape[1]:
        raise DataError(f"bag size {bag_size} exceeds the {E.shape[1]} available motion columns")
    rng = np.random.default_rng(seed)
    bags = [np.sort(rng.choice(E.shape[1], size=bag_size, replace=False)) for _ in range(L)]

    runs = parallel_map(lambda cols: detect_change_points(E[:, cols], k_max, weighted=weighted), bags, workers)
    if L == 1:
        bounds = tuple(runs[0].final)
    else:
        bounds = consensus_boundaries([r.final for r in runs])
    parts = parts_from_boundaries(bounds, E.shape[0])
    log.info("consensus boundaries %s from %d runs", bounds, L)
    return BodyPartition(E.shape[0], parts, score_parts(parts, E), boundaries=bounds, runs=runs)


def segment_with_bagging(geis, L=5, bag_size=45, k_max=DEFAULT_K_MAX, seed=0, weighted=True, workers=None):
    """:func:`segment_motion` on the motion matrix of ``geis``."""
    geis = list(geis)
    if not geis:
        raise DataError("no GEIs to segment")
    mm = assemble_motion_matrix(geis, workers=workers)
    return segment_motion(mm, L, bag_size, k_max, seed, weighted, workers)


def select_parts(partition, top_k=DEFAULT_TOP_K):
    """Select every part scoring at least the ``top_k``-th highest score."""
    if not partition.parts:
        raise DataError("empty partition")
    scores = partition.scores
    if not np.isfinite(scores).any():
        raise DataError("no part has a finite score")
    finite = np.where(np.isfinite(scores), scores, -np.inf)
    k = min(max(1, int(top_k)), len(scores))
    cut = np.sort(finite)[::-1][k - 1]
    return BodyPartition(
        partition.n_rows,
        partition.parts,
        scores,
        finite >= cut,
        boundaries=partition.boundaries,
        runs=partition.runs,
    )


def save_partition(partition, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for (a, b), s, sel in zip(partition.parts, partition.scores, partition.selected):
            fh.write(f"{a},{b},{float(s)!r},{int(bool(sel))}\n")
    return path


def load_partition(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"partition file {path} does not exist")
    parts, scores, selected = [], [], []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        a, b, s, sel = line.split(",")
        parts.append((int(a), int(b)))
        scores.append(float(s))
        selected.append(sel.strip().lower() in ("1", "true", "yes"))
    if not parts:
        raise DataError(f"partition file {path} is empty")
    return BodyPartition(parts[-1][1], parts, scores, selected)
