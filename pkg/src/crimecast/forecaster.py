"""Future-slot prediction from trained weight histories.

A future weight vector is a decay-weighted convex combination of the last
few trained slots: slot t - dt gets weight proportional to sigma^(-dt). The
decay sigma is learned per (region, crime type) by minimizing the one-step
squared prediction error over the training history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientHistoryError
from .solver import ModelState, TrainingData

DEFAULT_SIGMA_MAX = 10.0


@dataclass(frozen=True)
class ForecastTable:
    """Learned decay per (region, type), the window length, and the achieved
    squared-error of the decay fit."""

    sigma: np.ndarray  # (N, K), each in [1, sigma_max]
    window: int
    fit_loss: np.ndarray  # (N, K)

    def __post_init__(self):
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=np.float64))
        object.__setattr__(self, "fit_loss", np.asarray(self.fit_loss, dtype=np.float64))
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if (self.sigma < 1).any():
            raise ConfigError("decay values must be >= 1")


def decay_coefficients(window: int, sigma: float) -> np.ndarray:
    """Normalized weights sigma^(-dt) for dt = 1..window; a convex combination,
    most recent slot first."""
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if sigma < 1:
        raise ConfigError(f"sigma must be >= 1, got {sigma}")
    coeffs = sigma ** -np.arange(1.0, window + 1.0)
    return coeffs / coeffs.sum()


def combine_weights(history: np.ndarray, sigma: float) -> np.ndarray:
    """Decay-weighted combination of past weight vectors.

    history is (window, M), most recent slot (dt = 1) first.
    """
    history = np.atleast_2d(np.asarray(history, dtype=np.float64))
    if history.shape[0] == 0:
        raise InsufficientHistoryError("empty weight history")
    return decay_coefficients(history.shape[0], sigma) @ history


def _lagged_dot_table(weights: np.ndarray, features: np.ndarray, window: int):
    """For each target slot t in [window, T), the dot products
    x_t . W_{t-dt} for dt = 1..window. Returns (XW (n_targets, window),
    targets_index)."""
    T = weights.shape[0]
    targets = np.arange(window, T)
    hist_idx = targets[:, None] - 1 - np.arange(window)[None, :]
    # (n_targets, window, M) stacked histories, most recent first
    stacked = weights[hist_idx]
    XW = np.einsum("tm,twm->tw", features[targets], stacked)
    return XW, targets


def estimate_sigma(weights: np.ndarray, features: np.ndarray, targets: np.ndarray,
                   window: int, sigma_max: float = DEFAULT_SIGMA_MAX):
    """Fit the decay for one (region, type) series.

    weights is (T, M) trained weight history, features (T, M), targets (T,)
    observed values. Minimizes the squared one-step error over slots
    window+1..T via a coarse scan plus golden-section refinement (absolute
    tolerance 1e-3 on sigma). Flat or tied objectives return 1.

    Returns (sigma, loss_at_sigma).
    """
    weights = np.asarray(weights, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    T = weights.shape[0]
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if sigma_max < 1:
        raise ConfigError(f"sigma_max must be >= 1, got {sigma_max}")
    if T <= window:
        raise InsufficientHistoryError(
            f"need at least window+1={window + 1} slots to fit the decay, got T={T}"
        )
    XW, target_idx = _lagged_dot_table(weights, features, window)
    y = targets[target_idx]

    def sse(sigma: float) -> float:
        pred = XW @ decay_coefficients(window, sigma)
        return float(((pred - y) ** 2).sum())

    grid = np.linspace(1.0, sigma_max, 33)
    vals = [sse(s) for s in grid]
    best = int(np.argmin(vals))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = sse(c), sse(d)
    while (b - a) > 1e-3:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = sse(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = sse(d)
    sigma_hat = (a + b) / 2.0
    loss_hat = sse(sigma_hat)
    loss_one = sse(1.0)
    if loss_one <= loss_hat + 1e-12:
        return 1.0, loss_one
    return float(sigma_hat), loss_hat


def fit_forecast_table(state: ModelState, data: TrainingData, window: int | None = None,
                       sigma_max: float = DEFAULT_SIGMA_MAX, shared: bool = False) -> ForecastTable:
    """Estimate the decay for every (region, type) pair from a trained model.

    window defaults to min(7, T-1). shared=True fits one decay on the pooled
    squared error of all pairs (ablation mode).
    """
    N, T, K, _ = state.Q.shape
    if window is None:
        window = min(7, T - 1)
    if T <= window:
        raise InsufficientHistoryError(f"window {window} needs T >= {window + 1}, got T={T}")
    W = state.weights()
    sigma = np.ones((N, K))
    loss = np.zeros((N, K))
    if shared:
        grid = np.linspace(1.0, sigma_max, 33)

        def pooled(s: float) -> float:
            tot = 0.0
            coeff = decay_coefficients(window, s)
            for n in range(N):
                for k in range(K):
                    XW, idx = _lagged_dot_table(W[n, :, k], data.X[n], window)
                    tot += float(((XW @ coeff - data.Y[n, idx, k]) ** 2).sum())
            return tot

        vals = [pooled(s) for s in grid]
        s_shared = float(grid[int(np.argmin(vals))])
        if pooled(1.0) <= pooled(s_shared) + 1e-12:
            s_shared = 1.0
        sigma[:] = s_shared
        for n in range(N):
            for k in range(K):
                XW, idx = _lagged_dot_table(W[n, :, k], data.X[n], window)
                loss[n, k] = float(
                    ((XW @ decay_coefficients(window, s_shared) - data.Y[n, idx, k]) ** 2).sum()
                )
        return ForecastTable(sigma, window, loss)
    for n in range(N):
        for k in range(K):
            sigma[n, k], loss[n, k] = estimate_sigma(
                W[n, :, k], data.X[n], data.Y[n, :, k], window, sigma_max
            )
    return ForecastTable(sigma, window, loss)


def predict(model: ModelState, forecast: ForecastTable, x_future: np.ndarray,
            clamp_non_negative: bool = False) -> np.ndarray:
    """Predicted value per (region, type) for the next horizon slot.

    x_future is (N, M), the feature vectors of the target slot. Each
    prediction is x_future[n] . combine_weights of the last `window` trained
    slots of P + Q with that pair's decay.
    """
    N, T, K, M = model.Q.shape
    g = forecast.window
    if g > T:
        raise InsufficientHistoryError(f"window {g} exceeds trained slots T={T}")
    x_future = np.asarray(x_future, dtype=np.float64)
    if x_future.shape != (N, M):
        raise ConfigError(f"x_future must have shape ({N}, {M}), got {x_future.shape}")
    W = model.weights()[:, T - g:, :, :][:, ::-1]  # (N, g, K, M), most recent first
    out = np.empty((N, K))
    for n in range(N):
        for k in range(K):
            coeff = decay_coefficients(g, forecast.sigma[n, k])
            out[n, k] = x_future[n] @ (coeff @ W[n, :, k])
    if clamp_non_negative:
        out = np.maximum(out, 0.0)
    return out


def naive_baselines(Y: np.ndarray, window: int, horizon: int):
    """Rolling-origin baseline predictions over Y of shape (N, T, K).

    For each origin t0 (0-based, window-1 <= t0 <= T-horizon-1, matching the
    evaluation protocol): historical-mean predicts the mean of the previous
    `window` slots ending at t0; last-value predicts Y at t0. Returns
    (origins, historical_mean, last_value) with prediction arrays shaped
    (n_origins, N, K).
    """
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    N, T, K = Y.shape
    origins = np.arange(window - 1, T - horizon)
    hist = np.empty((len(origins), N, K))
    last = np.empty((len(origins), N, K))
    for i, o in enumerate(origins):
        hist[i] = Y[:, o - window + 1:o + 1].mean(axis=1)
        last[i] = Y[:, o]
    return origins, hist, last
