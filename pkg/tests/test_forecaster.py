import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_problem, random_state
from crimecast.datagen import SynthSpec, generate
from crimecast.errors import ConfigError, InsufficientHistoryError
from crimecast.forecaster import (
    ForecastTable,
    combine_weights,
    decay_coefficients,
    estimate_sigma,
    fit_forecast_table,
    naive_baselines,
    predict,
)


class TestCombineWeights:
    def test_equal_weighting_at_sigma_one(self):
        hist = np.array([[2.0, 0.0], [0.0, 2.0]])  # W(t-1), W(t-2)
        assert np.allclose(combine_weights(hist, 1.0), [1.0, 1.0])

    def test_two_slot_decay_scheme(self):
        # (sigma^-1 * 4 + sigma^-2 * 1) / (sigma^-1 + sigma^-2) with sigma=2:
        # (0.5*4 + 0.25*1) / 0.75 = 3
        hist = np.array([[4.0], [1.0]])
        assert np.allclose(combine_weights(hist, 2.0), [3.0])

    def test_large_sigma_keeps_most_recent(self):
        hist = np.array([[5.0, -1.0], [100.0, 100.0], [7.0, 7.0]])
        out = combine_weights(hist, 1e6)
        assert np.abs(out - hist[0]).max() < 1e-3

    def test_empty_history_rejected(self):
        with pytest.raises(InsufficientHistoryError):
            combine_weights(np.empty((0, 3)), 2.0)

    @given(st.floats(1.0, 100.0), st.integers(1, 12))
    def test_coefficients_form_convex_combination(self, sigma, window):
        c = decay_coefficients(window, sigma)
        assert (c > 0).all()
        assert c.sum() == pytest.approx(1.0)

    @given(st.integers(2, 10))
    def test_most_recent_coefficient_monotone_in_sigma(self, window):
        sigmas = np.linspace(1.0, 20.0, 25)
        firsts = [decay_coefficients(window, s)[0] for s in sigmas]
        assert all(b >= a - 1e-12 for a, b in zip(firsts, firsts[1:]))

    def test_sigma_below_one_rejected(self):
        with pytest.raises(ConfigError):
            combine_weights(np.ones((2, 2)), 0.5)


def planted_sigma_series(sigma_true, window, T=30, M=3, seed=0):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(T, M))
    X = rng.normal(size=(T, M))
    y = np.empty(T)
    coeff = decay_coefficients(window, sigma_true)
    for t in range(T):
        if t < window:
            y[t] = X[t] @ W[t]
        else:
            hist = W[t - 1 - np.arange(window)]
            y[t] = X[t] @ (coeff @ hist)
    return W, X, y


class TestEstimateSigma:
    def test_constant_history_returns_one(self):
        T, M = 12, 2
        W = np.tile([1.5, -0.5], (T, 1))
        X = np.random.default_rng(1).normal(size=(T, M))
        y = X @ np.array([1.5, -0.5])
        sigma, _ = estimate_sigma(W, X, y, window=4)
        assert sigma == 1.0

    def test_window_one_returns_one(self):
        rng = np.random.default_rng(2)
        W, X = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
        y = rng.normal(size=10)
        sigma, _ = estimate_sigma(W, X, y, window=1)
        assert sigma == 1.0

    def test_recovers_planted_decay(self):
        W, X, y = planted_sigma_series(2.0, window=3, seed=3)
        sigma, loss = estimate_sigma(W, X, y, window=3)
        assert 1.9 <= sigma <= 2.1
        assert loss < 1e-6

    def test_insufficient_history(self):
        rng = np.random.default_rng(4)
        with pytest.raises(InsufficientHistoryError):
            estimate_sigma(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)),
                           rng.normal(size=3), window=3)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_grid_search(self, seed):
        rng = np.random.default_rng(100 + seed)
        T, M, window = 18, 2, 4
        W = rng.normal(size=(T, M))
        X = rng.normal(size=(T, M))
        y = rng.normal(size=T)
        sigma, loss = estimate_sigma(W, X, y, window=window, sigma_max=10.0)

        def sse(s):
            c = decay_coefficients(window, s)
            tot = 0.0
            for t in range(window, T):
                tot += float((X[t] @ (c @ W[t - 1 - np.arange(window)]) - y[t]) ** 2)
            return tot

        grid_best = min(sse(s) for s in np.linspace(1.0, 10.0, 1000))
        assert loss <= grid_best + 1e-6


class TestPredict:
    def _trained(self, seed=0):
        data, hp = make_problem(seed=seed)
        state = random_state(data, hp, seed=seed)
        return data, state

    def test_zero_features_zero_predictions(self):
        data, state = self._trained()
        table = ForecastTable(np.full((2, 2), 2.0), window=2, fit_loss=np.zeros((2, 2)))
        assert not predict(state, table, np.zeros((2, 3))).any()

    def test_window_one_uses_last_slot_weights(self):
        data, state = self._trained(1)
        table = ForecastTable(np.full((2, 2), 3.0), window=1, fit_loss=np.zeros((2, 2)))
        x = np.random.default_rng(5).normal(size=(2, 3))
        out = predict(state, table, x)
        for n in range(2):
            for k in range(2):
                expect = x[n] @ (state.P[n, -1] + state.Q[n, -1, k])
                assert out[n, k] == pytest.approx(expect)

    def test_two_slot_decay_value(self):
        data, state = self._trained(2)
        T = state.P.shape[1]
        state.Q[...] = 0.0
        state.P[0, T - 1, :] = [4.0, 0.0, 0.0]
        state.P[0, T - 2, :] = [1.0, 0.0, 0.0]
        table = ForecastTable(np.full((2, 2), 2.0), window=2, fit_loss=np.zeros((2, 2)))
        x = np.zeros((2, 3))
        x[0, 0] = 1.0
        assert predict(state, table, x)[0, 0] == pytest.approx(3.0)

    def test_linear_in_features(self):
        data, state = self._trained(3)
        table = ForecastTable(np.full((2, 2), 1.7), window=2, fit_loss=np.zeros((2, 2)))
        rng = np.random.default_rng(6)
        xa, xb = rng.normal(size=(2, 2, 3))
        lhs = predict(state, table, 2.0 * xa + 0.5 * xb)
        rhs = 2.0 * predict(state, table, xa) + 0.5 * predict(state, table, xb)
        assert np.allclose(lhs, rhs)

    def test_clamp_flag(self):
        data, state = self._trained(4)
        table = ForecastTable(np.ones((2, 2)), window=2, fit_loss=np.zeros((2, 2)))
        x = np.random.default_rng(7).normal(size=(2, 3))
        raw = predict(state, table, x)
        clamped = predict(state, table, x, clamp_non_negative=True)
        assert (clamped >= 0).all()
        assert np.allclose(clamped, np.maximum(raw, 0.0))

    def test_window_beyond_history_rejected(self):
        data, state = self._trained(5)
        table = ForecastTable(np.ones((2, 2)), window=9, fit_loss=np.zeros((2, 2)))
        with pytest.raises(InsufficientHistoryError):
            predict(state, table, np.zeros((2, 3)))


class TestFitForecastTable:
    def test_sigma_recovery_through_table(self):
        res = generate(SynthSpec(grid_side=2, T=24, K=2, M=3, noise_sd=0.0,
                                 temporal_smoothness=1, sigma_true=2.0, sigma_window=3,
                                 seed=9))
        from crimecast.solver import Hyperparams, ModelState, TrainingData
        hp = Hyperparams()
        data = TrainingData.build(res.crimes, res.features, res.grid, hp)
        truth = res.truth
        N, T, K, M = truth.Q_star.shape
        state = ModelState(
            P=truth.P_star.copy(), Q=truth.Q_star.copy(),
            omega=np.broadcast_to(np.eye(K), (N, T, K, K)).copy(),
            C=np.zeros((N, M, T - 1)), D=np.zeros((N, K, M, T - 1)),
            E=np.zeros((T, M, data.spatial.n_pairs)),
            F=np.zeros((T, K, M, data.spatial.n_pairs)),
            S=np.zeros((N, M, T - 1)), U=np.zeros((N, K, M, T - 1)),
            V=np.zeros((T, M, data.spatial.n_pairs)),
            Z=np.zeros((T, K, M, data.spatial.n_pairs)),
            omega_degenerate=np.zeros((N, T), dtype=bool),
        )
        table = fit_forecast_table(state, data, window=3)
        assert table.sigma.shape == (N, K)
        # slots t <= lag have zero features and contribute nothing; decay recovered
        assert np.all(table.sigma >= 1.9) and np.all(table.sigma <= 2.1)

    def test_shared_mode_single_value(self):
        res = generate(SynthSpec(grid_side=2, T=12, K=2, M=2, noise_sd=0.3, seed=10))
        from crimecast.solver import TrainingData, Hyperparams, fit
        hp = Hyperparams(alpha=0.2, beta=0.2, gamma=0.5, rho=2.0, eta=5e-3, max_iters=10)
        data = TrainingData.build(res.crimes, res.features, res.grid, hp)
        state, _ = fit(data, hp, seed=0)
        table = fit_forecast_table(state, data, window=3, shared=True)
        assert len(np.unique(table.sigma)) == 1


class TestNaiveBaselines:
    def test_constant_series_predicted_exactly(self):
        Y = np.full((2, 10, 3), 4.2)
        _, hist, last = naive_baselines(Y, window=3, horizon=1)
        assert np.allclose(hist, 4.2) and np.allclose(last, 4.2)

    def test_last_value_on_ramp_off_by_horizon(self):
        Y = np.arange(1.0, 11.0)[None, :, None] * np.ones((1, 1, 1))
        origins, _, last = naive_baselines(Y, window=2, horizon=1)
        actual = np.stack([Y[:, o + 1] for o in origins])
        assert np.allclose(actual - last, 1.0)

    def test_historical_mean_arithmetic(self):
        Y = np.zeros((1, 3, 1))
        Y[0, :, 0] = [1.0, 3.0, 9.0]
        origins, hist, _ = naive_baselines(Y, window=2, horizon=1)
        assert origins.tolist() == [1]
        assert hist[0, 0, 0] == pytest.approx(2.0)  # mean of (1, 3)

    def test_origin_count_matches_protocol(self):
        Y = np.zeros((2, 365, 2))
        origins, _, _ = naive_baselines(Y, window=7, horizon=1)
        assert len(origins) == 358
