"""Exact m-nearest-neighbour search over training inputs (Euclidean metric).

A KD-tree locates candidates; distances and ordering are then recomputed
with one canonical numpy expression so results (including tie-breaking by
lower row index) are bit-identical to a brute-force scan.  For monotone
kernels the Euclidean ranking equals the kernel-metric ranking, which is
why a single Euclidean index serves every kernel family except periodic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInputError, ShapeError, SizeError

__all__ = ["Dataset", "NeighbourSet", "NeighbourIndex", "build_index", "query", "query_many", "brute_force_query"]

# Small n where a full scan beats tree overhead anyway.
_BRUTE_FORCE_CUTOFF = 64


@dataclass(frozen=True)
class Dataset:
    """Training inputs (n x d) and targets (n,); all entries finite."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] < 1:
            raise ShapeError(f"inputs must be an n x d matrix with d >= 1, got shape {inputs.shape}")
        if targets.ndim != 1 or targets.shape[0] != inputs.shape[0]:
            raise ShapeError(
                f"targets must be a length-{inputs.shape[0]} vector, got shape {targets.shape}"
            )
        if inputs.shape[0] < 1:
            raise EmptyInputError("dataset needs at least one point")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise ShapeError("dataset entries must all be finite")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class NeighbourSet:
    """Indices of the m nearest training rows to a query, nearest first."""

    query: np.ndarray
    indices: np.ndarray  # distinct training-row indices
    distances: np.ndarray  # nondecreasing Euclidean distances


def _canonical_distances(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    # The one distance expression used everywhere (tree results are re-ranked
    # through it, so tree/numpy ulp differences cannot change the answer).
    diff = points - x
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _select(dist: np.ndarray, candidate_rows: np.ndarray, m: int):
    order = np.lexsort((candidate_rows, dist))[:m]
    return candidate_rows[order], dist[order]


class NeighbourIndex:
    """Immutable exact spatial index over a dataset's input rows."""

    def __init__(self, data: Dataset):
        self.data = data
        self._tree = cKDTree(data.inputs) if data.n > _BRUTE_FORCE_CUTOFF else None

    @property
    def n(self) -> int:
        return self.data.n

    def _check_query(self, x_star, m: int) -> np.ndarray:
        x = np.asarray(x_star, dtype=float)
        if x.shape != (self.data.d,):
            raise ShapeError(f"query must have dimension {self.data.d}, got shape {x.shape}")
        if not 1 <= m <= self.n:
            raise SizeError(f"m must satisfy 1 <= m <= n = {self.n}, got {m}")
        return x

    def query(self, x_star, m: int) -> NeighbourSet:
        x = self._check_query(x_star, m)
        if self._tree is None:
            rows = np.arange(self.n)
        else:
            # Tree narrows the field; a ball slightly beyond the m-th
            # candidate distance then guarantees no equal-distance row on the
            # boundary is missed before canonical re-ranking.
            k = min(self.n, m + 1)
            _, cand = self._tree.query(x, k=k)
            cand = np.atleast_1d(cand)
            d_cand = _canonical_distances(self.data.inputs[cand], x)
            r = np.partition(d_cand, m - 1)[m - 1]
            rows = np.asarray(self._tree.query_ball_point(x, r * (1.0 + 1e-9) + 1e-300), dtype=int)
            if rows.size < m:  # degenerate radius (all candidates coincide with x)
                rows = cand
        dist = _canonical_distances(self.data.inputs[rows], x)
        idx, dd = _select(dist, rows, m)
        return NeighbourSet(query=x, indices=idx, distances=dd)

    def query_many(self, x_stars, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Batched query: returns (k x m) index and distance arrays."""
        X = np.asarray(x_stars, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.data.d:
            raise ShapeError(f"queries must be k x {self.data.d}, got shape {X.shape}")
        out_idx = np.empty((X.shape[0], m), dtype=int)
        out_dist = np.empty((X.shape[0], m), dtype=float)
        for i, x in enumerate(X):
            ns = self.query(x, m)
            out_idx[i] = ns.indices
            out_dist[i] = ns.distances
        return out_idx, out_dist


def build_index(data: Dataset) -> NeighbourIndex:
    """Build an immutable exact index over the dataset rows."""
    return NeighbourIndex(data)


def query(index: NeighbourIndex, x_star, m: int) -> NeighbourSet:
    """The m nearest rows by Euclidean distance, ties broken by row index."""
    return index.query(x_star, m)


def query_many(index: NeighbourIndex, x_stars, m: int):
    return index.query_many(x_stars, m)


def brute_force_query(data: Dataset, x_star, m: int) -> NeighbourSet:
    """Full-scan oracle with identical tie-breaking; used to verify the index."""
    x = np.asarray(x_star, dtype=float)
    if x.shape != (data.d,):
        raise ShapeError(f"query must have dimension {data.d}, got shape {x.shape}")
    if not 1 <= m <= data.n:
        raise SizeError(f"m must satisfy 1 <= m <= n = {data.n}, got {m}")
    dist = _canonical_distances(data.inputs, x)
    idx, dd = _select(dist, np.arange(data.n), m)
    return NeighbourSet(query=x, indices=idx, distances=dd)
