import numpy as np
import pytest

from crimecast.solver import Hyperparams, TrainingData, init_state, update_omega
from crimecast.tensors import RegionGrid, build_spatial_operator, build_temporal_operator


@pytest.fixture
def tiny_problem():
    """N=2, T=3, K=2, M=3 instance with every penalty active."""
    return make_problem()


def make_problem(N=2, T=3, K=2, M=3, seed=0,
                 alpha=0.7, beta=0.8, gamma=0.6, rho=1.3, eta=1e-3, theta=0.2):
    rng = np.random.default_rng(seed)
    hp = Hyperparams(alpha=alpha, beta=beta, gamma=gamma, rho=rho, eta=eta, theta=theta)
    side = int(np.ceil(np.sqrt(N)))
    pts = np.array([[i // side * 1.5, (i % side) * 1.1 + 0.2 * (i // side)] for i in range(N)])
    grid = RegionGrid(pts)
    X = rng.normal(size=(N, T, M))
    Y = rng.normal(size=(N, T, K))
    data = TrainingData(X, Y, build_temporal_operator(T, hp.beta),
                        build_spatial_operator(grid, hp.gamma))
    return data, hp


def random_state(data, hp, seed, scale=1.0):
    """A fully randomized but internally valid ModelState."""
    rng = np.random.default_rng(seed)
    state = init_state(data, hp, seed=seed)
    for f in ("P", "Q", "C", "D", "E", "F"):
        arr = getattr(state, f)
        arr[...] = rng.uniform(-scale, scale, arr.shape)
    for f in ("S", "U", "V", "Z"):
        arr = getattr(state, f)
        arr[...] = rng.uniform(-scale / 2, scale / 2, arr.shape)
    N, T, K, M = state.Q.shape
    for n in range(N):
        for t in range(T):
            omega, _ = update_omega(rng.normal(size=(M, K)))
            state.omega[n, t] = omega
    return state
