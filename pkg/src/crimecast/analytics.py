"""Preliminary-study computations: temporal and spatial difference curves
and the cross-type similarity matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError
from .tensors import CrimeTensor, RegionGrid


def temporal_diff_curve(crimes: CrimeTensor, k: int, dt_max: int):
    """Mean absolute change of one crime type's counts as a function of the
    slot gap: for each dt in 1..dt_max, the average over all regions and all
    valid t of |Y_n^t(k) - Y_n^(t+dt)(k)|. Returns (dt values, means)."""
    if not 0 <= k < crimes.K:
        raise InvalidDimensionError(f"crime type {k} outside 0..{crimes.K - 1}")
    if not 1 <= dt_max < crimes.T:
        raise InvalidDimensionError(f"dt_max must be in 1..{crimes.T - 1}, got {dt_max}")
    R = crimes.type_slice(k)
    dts = np.arange(1, dt_max + 1)
    means = np.array([np.abs(R[:, :-dt] - R[:, dt:]).mean() for dt in dts])
    return dts, means


def spatial_diff_curve(crimes: CrimeTensor, grid: RegionGrid, k: int, bin_width_km: float = 1.0):
    """Mean absolute count difference between region pairs, bucketed by
    centroid distance. Unordered pairs only; per-slot differences are
    averaged within fixed-width distance bins; empty bins are omitted.
    Returns (bin centers, means)."""
    if crimes.N < 2:
        raise InvalidDimensionError("spatial curve needs at least two regions")
    if not 0 <= k < crimes.K:
        raise InvalidDimensionError(f"crime type {k} outside 0..{crimes.K - 1}")
    if bin_width_km <= 0:
        raise InvalidDimensionError(f"bin width must be > 0, got {bin_width_km}")
    R = crimes.type_slice(k)
    d = grid.pairwise_distances(clamped=False)
    iu, ju = np.triu_indices(crimes.N, k=1)
    pair_dist = d[iu, ju]
    pair_mean_diff = np.abs(R[iu] - R[ju]).mean(axis=1)
    bins = np.floor(pair_dist / bin_width_km).astype(int)
    centers = []
    means = []
    for b in np.unique(bins):
        sel = bins == b
        centers.append((b + 0.5) * bin_width_km)
        means.append(pair_mean_diff[sel].mean())
    return np.array(centers), np.array(means)


def cross_type_similarity(crimes: CrimeTensor):
    """Normalized inner products between the (N, T) slices of each pair of
    crime types. Returns (matrix, undefined) where undefined marks entries
    involving an all-zero slice (set to 0 rather than NaN)."""
    K = crimes.K
    flat = crimes.values.reshape(-1, K).T  # (K, N*T)
    norms = np.linalg.norm(flat, axis=1)
    zero = norms == 0
    inner = flat @ flat.T
    denom = np.outer(norms, norms)
    sim = np.zeros((K, K))
    ok = denom > 0
    sim[ok] = inner[ok] / denom[ok]
    undefined = zero[:, None] | zero[None, :]
    return sim, undefined


@dataclass
class CorrelationReport:
    """Per-type temporal and spatial curves plus the K x K cross-type
    similarity matrix."""

    temporal_curves: list  # per type: (dt array, mean array)
    spatial_curves: list  # per type: (bin center array, mean array)
    cross_type: np.ndarray
    cross_type_undefined: np.ndarray

    def to_dict(self) -> dict:
        return {
            "temporal_curves": [
                {"delta_t": d.tolist(), "mean_abs_diff": m.tolist()}
                for d, m in self.temporal_curves
            ],
            "spatial_curves": [
                {"bin_center_km": c.tolist(), "mean_abs_diff": m.tolist()}
                for c, m in self.spatial_curves
            ],
            "cross_type": self.cross_type.tolist(),
            "cross_type_undefined": self.cross_type_undefined.tolist(),
        }


def build_report(crimes: CrimeTensor, grid: RegionGrid, dt_max: int | None = None,
                 bin_width_km: float = 1.0) -> CorrelationReport:
    if dt_max is None:
        dt_max = min(crimes.T - 1, 30)
    temporal = [temporal_diff_curve(crimes, k, dt_max) for k in range(crimes.K)]
    spatial = []
    if crimes.N >= 2:
        spatial = [spatial_diff_curve(crimes, grid, k, bin_width_km) for k in range(crimes.K)]
    sim, undef = cross_type_similarity(crimes)
    return CorrelationReport(temporal, spatial, sim, undef)
