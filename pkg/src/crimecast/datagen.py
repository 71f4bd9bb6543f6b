"""Seeded synthetic datasets with planted ground truth.

Regions sit on a square grid with 1 km spacing. Shared weights are
piecewise-constant in time and smoothed across space with an exponential
distance kernel; type-specific weights get the same structure plus a
controllable pairwise correlation across types. Targets are the planted
linear model plus Gaussian noise, so every solver and forecaster property
can be checked against exact ground truth.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataio import CRIME_HEADER, write_regions_csv
from .errors import ConfigError
from .forecaster import decay_coefficients
from .tensors import CrimeTensor, FeatureTensor, RegionGrid


@dataclass(frozen=True)
class SynthSpec:
    """Generator knobs. N = grid_side^2 regions on a unit-spacing grid.

    temporal_smoothness is the length of the constant segments of the planted
    weights; spatial_smoothness_scale is the km scale of the exp(-d/scale)
    smoothing kernel; task_correlation in [0, 1] is the pairwise correlation
    of the type-specific weights. sigma_true, when set, generates targets
    from a decay-weighted combination of the previous sigma_window slots'
    weights instead of the own-slot weights (for decay-recovery tests).
    Feature cells at model slots t <= lag are zero: their raw slot predates
    the data. poisson_counts resamples targets as Poisson counts with rate
    max(Y, 0).
    """

    grid_side: int = 2
    T: int = 20
    K: int = 2
    M: int = 3
    noise_sd: float = 0.0
    temporal_smoothness: int = 1
    spatial_smoothness_scale: float = 1.0
    task_correlation: float = 0.0
    sigma_true: float | None = None
    sigma_window: int = 3
    lag: int = 1
    poisson_counts: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.grid_side < 1 or self.T < 2 or self.K < 1 or self.M < 1:
            raise ConfigError("dimensions must be positive (and T >= 2)")
        if self.noise_sd < 0:
            raise ConfigError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if not 1 <= self.temporal_smoothness:
            raise ConfigError("temporal_smoothness must be >= 1")
        if self.spatial_smoothness_scale <= 0:
            raise ConfigError("spatial_smoothness_scale must be > 0")
        if not 0 <= self.task_correlation <= 1:
            raise ConfigError(f"task_correlation must be in [0, 1], got {self.task_correlation}")
        if self.sigma_true is not None and self.sigma_true < 1:
            raise ConfigError(f"sigma_true must be >= 1, got {self.sigma_true}")
        if self.sigma_window < 1:
            raise ConfigError("sigma_window must be >= 1")
        if not 1 <= self.lag < self.T:
            raise ConfigError(f"lag must be in 1..T-1, got {self.lag}")

    @property
    def N(self) -> int:
        return self.grid_side**2


@dataclass(frozen=True)
class GroundTruth:
    P_star: np.ndarray  # (N, T, M)
    Q_star: np.ndarray  # (N, T, K, M)
    sigma_true: float | None


@dataclass(frozen=True)
class SynthResult:
    crimes: CrimeTensor
    features: FeatureTensor
    grid: RegionGrid
    truth: GroundTruth
    raw_features: np.ndarray  # (N, T, M): observable data for slots 1..T
    spec: SynthSpec


def square_grid(side: int) -> RegionGrid:
    """side x side regions at integer km coordinates, row-major ids."""
    xs, ys = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float), indexing="ij")
    return RegionGrid(np.column_stack([xs.ravel(), ys.ravel()]))


def generate(spec: SynthSpec) -> SynthResult:
    """Draw one dataset; bit-identical for identical specs."""
    rng = np.random.default_rng(spec.seed)
    N, T, K, M = spec.N, spec.T, spec.K, spec.M
    grid = square_grid(spec.grid_side)
    n_segments = math.ceil(T / spec.temporal_smoothness)

    base_p = rng.standard_normal((n_segments, N, M))
    shared_q = rng.standard_normal((n_segments, N, M))
    indiv_q = rng.standard_normal((n_segments, N, K, M))
    raw = rng.standard_normal((N, T, M))
    noise = spec.noise_sd * rng.standard_normal((N, T, K))

    d = grid.pairwise_distances(clamped=False)
    kernel = np.exp(-d / spec.spatial_smoothness_scale)
    kernel /= kernel.sum(axis=1, keepdims=True)

    c = spec.task_correlation
    q_seg = math.sqrt(c) * shared_q[:, :, None, :] + math.sqrt(1.0 - c) * indiv_q
    p_seg = np.einsum("ij,sjm->sim", kernel, base_p)
    q_seg = np.einsum("ij,sjkm->sikm", kernel, q_seg)

    seg_of = np.arange(T) // spec.temporal_smoothness
    P_star = p_seg[seg_of].transpose(1, 0, 2)  # (N, T, M)
    Q_star = q_seg[seg_of].transpose(1, 0, 2, 3)  # (N, T, K, M)

    X = np.zeros((N, T, M))
    X[:, spec.lag:] = raw[:, :T - spec.lag]

    W = P_star[:, :, None, :] + Q_star
    Y = np.einsum("ntm,ntkm->ntk", X, W)
    if spec.sigma_true is not None:
        g = spec.sigma_window
        coeff = decay_coefficients(g, spec.sigma_true)
        for t in range(g, T):
            idx = t - 1 - np.arange(g)  # slots t-1 .. t-g, most recent first
            combined = np.einsum("w,nwkm->nkm", coeff, W[:, idx])
            Y[:, t] = np.einsum("nm,nkm->nk", X[:, t], combined)
    Y = Y + noise
    if spec.poisson_counts:
        Y = rng.poisson(np.maximum(Y, 0.0)).astype(float)

    crimes = CrimeTensor(Y, allow_negative=not spec.poisson_counts)
    features = FeatureTensor(X, lag=spec.lag)
    truth = GroundTruth(P_star, Q_star, spec.sigma_true)
    return SynthResult(crimes, features, grid, truth, raw, spec)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(result: SynthResult, out_dir) -> list[str]:
    """Write the dataset CSVs plus ground-truth files; returns file names.

    features.csv carries the raw observable slots 1..T (so the last rows can
    drive a true future prediction); loading with the same lag reproduces
    the feature tensor exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    crimes, features, raw = result.crimes, result.features, result.raw_features
    with open(out / "crimes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CRIME_HEADER)
        for n in range(crimes.N):
            for t in range(crimes.T):
                for k in range(crimes.K):
                    w.writerow([n + 1, t + 1, k + 1, _fmt(crimes.values[n, t, k])])
    with open(out / "features.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["region_id", "time_slot"] + [f"f{i + 1}" for i in range(features.M)])
        for n in range(raw.shape[0]):
            for s in range(raw.shape[1]):
                w.writerow([n + 1, s + 1] + [_fmt(v) for v in raw[n, s]])
    write_regions_csv(result.grid, out / "regions.csv")
    truth = result.truth
    with open(out / "ground_truth_shared.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["region_id", "time_slot"] + [f"w{i + 1}" for i in range(features.M)])
        for n in range(crimes.N):
            for t in range(crimes.T):
                w.writerow([n + 1, t + 1] + [_fmt(v) for v in truth.P_star[n, t]])
    with open(out / "ground_truth_specific.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["region_id", "time_slot", "crime_type"] + [f"w{i + 1}" for i in range(features.M)])
        for n in range(crimes.N):
            for t in range(crimes.T):
                for k in range(crimes.K):
                    w.writerow([n + 1, t + 1, k + 1] + [_fmt(v) for v in truth.Q_star[n, t, k]])
    meta = asdict(result.spec)
    with open(out / "dataset.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return ["crimes.csv", "features.csv", "regions.csv",
            "ground_truth_shared.csv", "ground_truth_specific.csv", "dataset.json"]
