"""Versioned model checkpoints with bit-exact round trips."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataio import load_arrays, save_arrays
from .errors import LoadError
from .forecaster import ForecastTable
from .solver import Hyperparams, ModelState
from .tensors import RegionGrid

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    state: ModelState
    hp: Hyperparams
    lag: int
    grid: RegionGrid
    forecast: ForecastTable | None
    meta: dict


def save_checkpoint(path, state: ModelState, hp: Hyperparams, lag: int, grid: RegionGrid,
                    forecast: ForecastTable | None = None, extra: dict | None = None) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "hyperparams": asdict(hp),
        "lag": lag,
        "d_min": grid.d_min,
        "forecast_window": None if forecast is None else forecast.window,
        "extra": extra or {},
    }
    arrays = {f: getattr(state, f) for f in ModelState.ARRAY_FIELDS}
    arrays["centroids"] = grid.centroids
    if forecast is not None:
        arrays["forecast_sigma"] = forecast.sigma
        arrays["forecast_fit_loss"] = forecast.fit_loss
    save_arrays(path, meta, arrays)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = load_arrays(path)
    if meta.get("format_version") != FORMAT_VERSION:
        raise LoadError(path, 1, f"unsupported checkpoint version {meta.get('format_version')}")
    state = ModelState(**{f: arrays[f] for f in ModelState.ARRAY_FIELDS})
    hp = Hyperparams(**meta["hyperparams"])
    grid = RegionGrid(arrays["centroids"], d_min=meta["d_min"])
    forecast = None
    if meta["forecast_window"] is not None:
        forecast = ForecastTable(arrays["forecast_sigma"], meta["forecast_window"],
                                 arrays["forecast_fit_loss"])
    return Checkpoint(state, hp, int(meta["lag"]), grid, forecast, meta)
