"""Rolling-origin evaluation protocol and the averaged per-series RMSE."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .forecaster import fit_forecast_table, naive_baselines, predict
from .solver import Hyperparams, TrainingData, fit
from .tensors import CrimeTensor, FeatureTensor, RegionGrid, build_spatial_operator, build_temporal_operator


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch run needs: solver knobs plus protocol knobs.

    train_window is the number of slots each rolling fit sees; horizon is
    how far ahead predictions land (and equals the feature lag);
    decay_window bounds the weight-combination window.
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    rho: float = 1.0
    eta: float = 1e-3
    theta: float = 0.0
    omega_ridge: float = 1e-6
    max_iters: int = 200
    tol: float = 1e-4
    use_spatial: bool = True
    train_window: int = 7
    horizon: int = 1
    decay_window: int = 7
    sigma_max: float = 10.0
    shared_sigma: bool = False
    clamp_predictions: bool = False
    seed: int = 0
    deterministic: bool = True
    fast: bool = False

    def __post_init__(self):
        if self.train_window < 2:
            raise ConfigError(f"train_window must be >= 2, got {self.train_window}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.decay_window < 1:
            raise ConfigError(f"decay_window must be >= 1, got {self.decay_window}")
        if self.sigma_max < 1:
            raise ConfigError(f"sigma_max must be >= 1, got {self.sigma_max}")
        self.hyperparams()  # bounds of the solver knobs

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            alpha=self.alpha, beta=self.beta, gamma=self.gamma, rho=self.rho,
            eta=self.eta, theta=self.theta, omega_ridge=self.omega_ridge,
            max_iters=self.max_iters, tol=self.tol, use_spatial=self.use_spatial,
        )

    def validate_against(self, T: int) -> None:
        if self.train_window + self.horizon > T:
            raise ConfigError(
                f"train_window + horizon = {self.train_window + self.horizon} exceeds T={T}"
            )


def rmse(predicted: np.ndarray, observed: np.ndarray) -> float:
    """Average over (region, type) of the per-series root mean squared error
    across origins. Arrays are (n_origins, N, K)."""
    predicted = np.asarray(predicted, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if predicted.shape != observed.shape:
        raise ConfigError(f"shape mismatch {predicted.shape} vs {observed.shape}")
    per_series = np.sqrt(((predicted - observed) ** 2).mean(axis=0))
    return float(per_series.mean())


@dataclass
class EvaluationReport:
    num_origins: int
    rmse_model: float
    rmse_last_value: float
    rmse_historical_mean: float
    rmse_model_per_type: list
    config: dict
    origins: list = field(default_factory=list)  # 1-based origin slots

    def to_dict(self) -> dict:
        return {
            "num_origins": self.num_origins,
            "rmse_model": self.rmse_model,
            "rmse_last_value": self.rmse_last_value,
            "rmse_historical_mean": self.rmse_historical_mean,
            "rmse_model_per_type": list(self.rmse_model_per_type),
            "config": self.config,
            "origins": list(self.origins),
        }


def evaluate(crimes: CrimeTensor, features: FeatureTensor, grid: RegionGrid,
             config: RunConfig) -> EvaluationReport:
    """Rolling-origin protocol: for each origin t0 in [train_window, T-horizon]
    (1-based), fit on the train_window slots ending at t0, learn the decay,
    predict slot t0 + horizon, and accumulate per-(region, type) squared
    errors. Also scores the historical-mean and last-value baselines on the
    same origins. Deterministic: the fit at origin index i uses seed
    config.seed + i.

    With config.fast, the model and decay table are fitted once on the first
    window and reused for every origin (a documented approximation).
    """
    N, T, K = crimes.N, crimes.T, crimes.K
    config.validate_against(T)
    if features.lag != config.horizon:
        raise ConfigError(
            f"features were built with lag {features.lag} but the horizon is "
            f"{config.horizon}; reload the dataset with lag = horizon"
        )
    hp = config.hyperparams()
    tw, hz = config.train_window, config.horizon
    window = min(config.decay_window, tw - 1)
    temporal_op = build_temporal_operator(tw, hp.beta)
    spatial_op = build_spatial_operator(grid, hp.gamma, enabled=hp.use_spatial)
    X, Y = features.values, crimes.values

    origins = np.arange(tw - 1, T - hz)  # 0-based
    n_orig = len(origins)
    preds = np.empty((n_orig, N, K))
    actual = np.empty((n_orig, N, K))
    cached = None
    for i, o in enumerate(origins):
        sl = slice(o - tw + 1, o + 1)
        if cached is None or not config.fast:
            data = TrainingData(X[:, sl], Y[:, sl], temporal_op, spatial_op)
            state, _ = fit(data, hp, seed=config.seed + i)
            table = fit_forecast_table(state, data, window=window,
                                       sigma_max=config.sigma_max,
                                       shared=config.shared_sigma)
            cached = (state, table)
        state, table = cached
        preds[i] = predict(state, table, X[:, o + hz], config.clamp_predictions)
        actual[i] = Y[:, o + hz]

    _, hist_mean, last_value = naive_baselines(Y, tw, hz)
    per_type = [rmse(preds[:, :, k:k + 1], actual[:, :, k:k + 1]) for k in range(K)]
    return EvaluationReport(
        num_origins=n_orig,
        rmse_model=rmse(preds, actual),
        rmse_last_value=rmse(last_value, actual),
        rmse_historical_mean=rmse(hist_mean, actual),
        rmse_model_per_type=per_type,
        config=asdict(config),
        origins=[int(o) + 1 for o in origins],
    )
