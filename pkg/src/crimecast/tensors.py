"""Data model: crime/feature tensors, region geometry, sparse difference operators.

Tensors are dense float64 arrays indexed 0-based internally; file formats and
error messages use 1-based ids. All types here are frozen after construction
(arrays are marked read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimensionError, SingularityError


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class CrimeTensor:
    """Observed crime counts, shape (N, T, K): region, time slot, crime type."""

    values: np.ndarray
    allow_negative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.values.ndim != 3:
            raise InvalidDimensionError(f"crime tensor must be 3-d, got {self.values.ndim}-d")
        if not np.isfinite(self.values).all():
            raise ValueError("crime tensor contains non-finite values")
        if not self.allow_negative and (self.values < 0).any():
            raise ValueError("crime counts must be non-negative (or set allow_negative)")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def K(self) -> int:
        return self.values.shape[2]

    def type_slice(self, k: int) -> np.ndarray:
        """The (N, T) matrix of one crime type."""
        return self.values[:, :, k]


@dataclass(frozen=True)
class FeatureTensor:
    """Feature vectors, shape (N, T, M), shared by all crime types.

    The vector at model slot t was built from raw data observed at slot
    t - lag; model slots t <= lag have no raw counterpart and are zero.
    """

    values: np.ndarray
    lag: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.values.ndim != 3:
            raise InvalidDimensionError(f"feature tensor must be 3-d, got {self.values.ndim}-d")
        if self.lag < 1:
            raise InvalidDimensionError(f"lag must be >= 1, got {self.lag}")
        if not np.isfinite(self.values).all():
            raise ValueError("feature tensor contains non-finite values")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def M(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class RegionGrid:
    """Region centroids in km. d_min is the distance clamp floor applied
    before any power-law weighting; defaults to half the smallest
    inter-centroid spacing."""

    centroids: np.ndarray
    d_min: float = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "centroids", _freeze(np.atleast_2d(self.centroids)))
        if self.centroids.ndim != 2 or self.centroids.shape[1] != 2:
            raise InvalidDimensionError("centroids must have shape (N, 2)")
        if self.d_min is None:
            d = self.pairwise_distances(clamped=False)
            n = self.N
            if n > 1:
                off = d[~np.eye(n, dtype=bool)]
                object.__setattr__(self, "d_min", float(off.min()) / 2.0)
            else:
                object.__setattr__(self, "d_min", 0.5)
        if self.d_min < 0:
            raise ValueError("d_min must be >= 0")

    @property
    def N(self) -> int:
        return self.centroids.shape[0]

    def pairwise_distances(self, clamped: bool = True) -> np.ndarray:
        """Euclidean (N, N) distance matrix; off-diagonal entries are
        clamped from below by d_min when requested."""
        diff = self.centroids[:, None, :] - self.centroids[None, :, :]
        d = np.sqrt((diff**2).sum(axis=2))
        if clamped and self.N > 1:
            off = ~np.eye(self.N, dtype=bool)
            d[off] = np.maximum(d[off], self.d_min)
        return d


@dataclass(frozen=True)
class DifferenceOperator:
    """Sparse difference operator: temporal T x (T-1) or spatial N x N^2.

    Stored as (row, col, value) triples, 0-based. The spatial operator also
    carries its active columns in compact form: ordered region pairs
    (pair_i, pair_j) with weights pair_w = d(i,j)^(-gamma); column index of
    pair p in the full N^2 layout is pair_i[p]*N + pair_j[p].
    """

    kind: str
    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    strength: float
    pair_i: np.ndarray = field(default=None)  # type: ignore[assignment]
    pair_j: np.ndarray = field(default=None)  # type: ignore[assignment]
    pair_w: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        for name in ("row_idx", "col_idx"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "values", _freeze(self.values))
        if self.kind == "spatial":
            for name, dt in (("pair_i", np.int64), ("pair_j", np.int64), ("pair_w", np.float64)):
                arr = np.ascontiguousarray(getattr(self, name), dtype=dt)
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    @property
    def n_pairs(self) -> int:
        return 0 if self.pair_i is None else len(self.pair_i)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows, self.cols))
        np.add.at(dense, (self.row_idx, self.col_idx), self.values)
        return dense

    def apply(self, W: np.ndarray) -> np.ndarray:
        """W @ operator, restricted to active columns for the spatial kind.

        Temporal: W is (..., T), result (..., T-1) with column t equal to
        strength * (W[..., t] - W[..., t+1]). Spatial: W is (..., N), result
        (..., n_pairs) with column p equal to pair_w[p] * (W[..., i] - W[..., j]).
        """
        if self.kind == "temporal":
            return self.strength * (W[..., :-1] - W[..., 1:])
        return self.pair_w * (W[..., self.pair_i] - W[..., self.pair_j])


def build_temporal_operator(T: int, beta: float) -> DifferenceOperator:
    """T x (T-1) operator whose column t carries +beta at row t and -beta at
    row t+1, so right-multiplying an (M, T) weight matrix yields beta-scaled
    consecutive-slot differences."""
    if T < 2:
        raise InvalidDimensionError(f"temporal operator needs T >= 2, got T={T}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    t = np.arange(T - 1)
    row_idx = np.concatenate([t, t + 1])
    col_idx = np.concatenate([t, t])
    values = np.concatenate([np.full(T - 1, beta), np.full(T - 1, -beta)])
    return DifferenceOperator("temporal", T, T - 1, row_idx, col_idx, values, float(beta))


def build_spatial_operator(grid: RegionGrid, gamma: float, enabled: bool = True) -> DifferenceOperator:
    """N x N^2 operator: the column for ordered pair (i, j), i != j, carries
    +d(i,j)^(-gamma) at row i and -d(i,j)^(-gamma) at row j; columns with
    i == j are zero. Distances are clamped to at least grid.d_min first.

    enabled=False zeroes every pair weight (the spatial-term-off ablation,
    equivalent to gamma -> +inf); the operator then has no active columns.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    N = grid.N
    if N == 1 or not enabled:
        empty_i = np.empty(0, dtype=np.int64)
        return DifferenceOperator(
            "spatial", N, N * N, empty_i, empty_i.copy(), np.empty(0),
            float(gamma), empty_i.copy(), empty_i.copy(), np.empty(0),
        )
    d = grid.pairwise_distances(clamped=True)
    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    mask = ii != jj
    pair_i = ii[mask].astype(np.int64)  # column order (i*N + j) ascending
    pair_j = jj[mask].astype(np.int64)
    dist = d[pair_i, pair_j]
    if (dist == 0).any():
        raise SingularityError(
            "two regions share a centroid and d_min is 0; cannot form distance weights"
        )
    pair_w = dist ** (-gamma)
    cols = pair_i * N + pair_j
    row_idx = np.concatenate([pair_i, pair_j])
    col_idx = np.concatenate([cols, cols])
    values = np.concatenate([pair_w, -pair_w])
    return DifferenceOperator(
        "spatial", N, N * N, row_idx, col_idx, values, float(gamma), pair_i, pair_j, pair_w
    )
