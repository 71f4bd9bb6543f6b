"""ADMM trainer for the multi-task spatio-temporal regression model.

The model decomposes each per-(region, slot, type) weight vector into a
shared part P plus a type-specific part Q, couples the Q columns through a
learned trace-normalized task covariance, and fuses weights across
consecutive slots and nearby regions with L1 difference penalties. Training
alternates per-block gradient steps on P and Q, a closed-form covariance
update, elementwise soft-threshold updates of the auxiliary difference
matrices, and dual ascent.

Auxiliary and dual matrices for the spatial constraint are stored over the
operator's active columns only (region pairs i != j); the remaining N^2
columns are identically zero and never materialized.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DivergenceError, NumericError
from .tensors import (
    CrimeTensor,
    DifferenceOperator,
    FeatureTensor,
    RegionGrid,
    build_spatial_operator,
    build_temporal_operator,
)

OMEGA_DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs.

    alpha weights the cross-type covariance term, beta the temporal fusion
    strength (embedded in the temporal operator), gamma the spatial distance
    exponent, rho the ADMM penalty, eta the gradient step size, theta an
    optional ridge on P and Q, omega_ridge the diagonal added to the task
    covariance before inversion. rho may be 0 for objective evaluation only;
    fitting requires rho > 0.
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

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "rho", "theta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.omega_ridge <= 0:
            raise ConfigError(f"omega_ridge must be > 0, got {self.omega_ridge}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")


@dataclass(frozen=True)
class TrainingData:
    """Feature/target arrays plus the two difference operators.

    X is (N, T, M), Y is (N, T, K). The spatial pair index (CSR over
    regions) is derived once for the sweep kernel.
    """

    X: np.ndarray
    Y: np.ndarray
    temporal: DifferenceOperator
    spatial: DifferenceOperator
    reg_ptr: np.ndarray = field(init=False, repr=False)
    reg_pos: np.ndarray = field(init=False, repr=False)
    reg_sign: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "X", np.ascontiguousarray(self.X, dtype=np.float64))
        object.__setattr__(self, "Y", np.ascontiguousarray(self.Y, dtype=np.float64))
        if self.X.shape[:2] != self.Y.shape[:2]:
            raise ConfigError(f"X {self.X.shape} and Y {self.Y.shape} disagree on (N, T)")
        if self.temporal.rows != self.T:
            raise ConfigError("temporal operator size does not match T")
        if self.spatial.rows != self.N:
            raise ConfigError("spatial operator size does not match N")
        ptr = np.zeros(self.N + 1, dtype=np.int64)
        pos_parts = []
        sign_parts = []
        for n in range(self.N):
            at_i = np.where(self.spatial.pair_i == n)[0]
            at_j = np.where(self.spatial.pair_j == n)[0]
            pos_parts.append(at_i)
            pos_parts.append(at_j)
            sign_parts.append(np.ones(len(at_i)))
            sign_parts.append(-np.ones(len(at_j)))
            ptr[n + 1] = ptr[n] + len(at_i) + len(at_j)
        object.__setattr__(self, "reg_ptr", ptr)
        object.__setattr__(self, "reg_pos", np.concatenate(pos_parts).astype(np.int64)
                           if pos_parts else np.empty(0, dtype=np.int64))
        object.__setattr__(self, "reg_sign", np.concatenate(sign_parts)
                           if sign_parts else np.empty(0))

    @classmethod
    def build(cls, crimes: CrimeTensor, features: FeatureTensor, grid: RegionGrid,
              hp: Hyperparams) -> "TrainingData":
        if crimes.values.shape[:2] != features.values.shape[:2]:
            raise ConfigError("crime and feature tensors disagree on (N, T)")
        if grid.N != crimes.N:
            raise ConfigError("region grid does not match tensor region count")
        temporal = build_temporal_operator(crimes.T, hp.beta)
        spatial = build_spatial_operator(grid, hp.gamma, enabled=hp.use_spatial)
        return cls(features.values, crimes.values, temporal, spatial)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]

    @property
    def M(self) -> int:
        return self.X.shape[2]

    @property
    def K(self) -> int:
        return self.Y.shape[2]


@dataclass
class ModelState:
    """All ADMM variables.

    P: (N,T,M) shared weights; Q: (N,T,K,M) type-specific weights;
    omega: (N,T,K,K) task covariances; C/S: (N,M,T-1) temporal auxiliary and
    dual for P; D/U: (N,K,M,T-1) for Q; E/V: (T,M,n_pairs) spatial auxiliary
    and dual for P over active operator columns; F/Z: (T,K,M,n_pairs) for Q.
    """

    P: np.ndarray
    Q: np.ndarray
    omega: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    S: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    omega_degenerate: np.ndarray

    ARRAY_FIELDS = ("P", "Q", "omega", "C", "D", "E", "F", "S", "U", "V", "Z",
                    "omega_degenerate")

    def copy(self) -> "ModelState":
        return ModelState(**{f: getattr(self, f).copy() for f in self.ARRAY_FIELDS})

    def weights(self) -> np.ndarray:
        """Combined per-type weights W = P + Q, shape (N, T, K, M)."""
        return self.P[:, :, None, :] + self.Q


@dataclass
class StepReport:
    """Diagnostics of one ADMM iteration. Residual and dual-change norms are
    per-block Frobenius norms summed over blocks. lrho_fixed_dual is the
    objective after the primal and proximal updates but before dual ascent;
    it can only increase past its pre-sweep value when eta overshoots."""

    lrho: float
    lrho_fixed_dual: float
    resid_C: float
    resid_D: float
    resid_E: float
    resid_F: float
    dual_delta_S: float
    dual_delta_U: float
    dual_delta_V: float
    dual_delta_Z: float
    eta: float

    @property
    def max_primal_residual(self) -> float:
        return max(self.resid_C, self.resid_D, self.resid_E, self.resid_F)


@dataclass
class FitReport:
    lrho_initial: float
    lrho_history: list
    resid_history: list  # (resid_C, resid_D, resid_E, resid_F) per iteration
    stopping_reason: str
    iterations: int
    eta_final: float
    eta_halvings: int

    @property
    def final_max_primal_residual(self) -> float:
        return max(self.resid_history[-1]) if self.resid_history else float("inf")

    def to_dict(self) -> dict:
        return {
            "lrho_initial": self.lrho_initial,
            "lrho_history": list(self.lrho_history),
            "resid_history": [list(r) for r in self.resid_history],
            "stopping_reason": self.stopping_reason,
            "iterations": self.iterations,
            "eta_final": self.eta_final,
            "eta_halvings": self.eta_halvings,
        }


def soft_threshold(x, kappa: float):
    """Shrink magnitudes by kappa and zero everything inside [-kappa, kappa].

    Elementwise on arrays; scalar in, scalar out.
    """
    if kappa <= 0:
        raise ValueError(f"threshold must be > 0, got {kappa}")
    arr = np.asarray(x, dtype=np.float64)
    out = np.sign(arr) * np.maximum(np.abs(arr) - kappa, 0.0)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def update_omega(Q_nt: np.ndarray, degeneracy_tol: float = OMEGA_DEGENERACY_TOL):
    """Trace-K normalized symmetric square root of Q^T Q for one (M, K) block.

    Returns (omega, degenerate). Negative eigenvalues of Q^T Q are clamped to
    0 before the square root; if the root's trace falls below degeneracy_tol
    the identity (the all-types-unrelated prior) is returned with the flag set.
    """
    Q_nt = np.asarray(Q_nt, dtype=np.float64)
    if not np.isfinite(Q_nt).all():
        raise NumericError("non-finite entries in Q block passed to covariance update")
    K = Q_nt.shape[1]
    gram = Q_nt.T @ Q_nt
    w, vecs = np.linalg.eigh(gram)
    root = (vecs * np.sqrt(np.maximum(w, 0.0))) @ vecs.T
    tr = float(np.trace(root))
    if tr < degeneracy_tol:
        return np.eye(K), True
    return K * root / tr, False


def _update_all_omegas(Q: np.ndarray):
    """Batched update_omega over every (n, t) block of Q (N,T,K,M)."""
    gram = np.einsum("ntkm,ntlm->ntkl", Q, Q)
    w, vecs = np.linalg.eigh(gram)
    root = np.einsum("ntkl,ntl,ntml->ntkm", vecs, np.sqrt(np.maximum(w, 0.0)), vecs)
    tr = np.trace(root, axis1=2, axis2=3)
    degenerate = tr < OMEGA_DEGENERACY_TOL
    K = Q.shape[2]
    safe_tr = np.where(degenerate, 1.0, tr)
    omega = K * root / safe_tr[:, :, None, None]
    omega[degenerate] = np.eye(K)
    return omega, degenerate


def _omega_inverse(omega: np.ndarray, ridge: float) -> np.ndarray:
    K = omega.shape[-1]
    try:
        return np.linalg.inv(omega + ridge * np.eye(K))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"task covariance singular even after +{ridge}*I ridge") from exc


def _penalty_blocks(state: ModelState, data: TrainingData):
    """The four consensus gaps (with duals added): PA-C+S, QA-D+U, PB-E+V, QB-F+Z."""
    PA = data.temporal.apply(state.P.transpose(0, 2, 1))
    QA = data.temporal.apply(state.Q.transpose(0, 2, 3, 1))
    PB = data.spatial.apply(state.P.transpose(1, 2, 0))
    QB = data.spatial.apply(state.Q.transpose(1, 2, 3, 0))
    return (PA - state.C + state.S, QA - state.D + state.U,
            PB - state.E + state.V, QB - state.F + state.Z)


def _residuals(state: ModelState, data: TrainingData) -> np.ndarray:
    """Prediction residuals X(P + Q) - Y, shape (N, T, K)."""
    xp = np.einsum("ntm,ntm->nt", data.X, state.P)
    xq = np.einsum("ntm,ntkm->ntk", data.X, state.Q)
    return xp[:, :, None] + xq - data.Y


def _locate_nonfinite(arr: np.ndarray, label: str):
    bad = np.argwhere(~np.isfinite(arr))
    if len(bad):
        idx = tuple(int(i) + 1 for i in bad[0])
        raise NumericError(f"non-finite {label} at block {idx} (1-based)")


def objective(state: ModelState, data: TrainingData, hp: Hyperparams) -> float:
    """Augmented objective L_rho: squared loss, cross-type trace term, L1 on
    the auxiliaries, (rho/2) consensus penalties, optional ridge."""
    R = _residuals(state, data)
    loss = float((R**2).sum())
    omega_inv = _omega_inverse(state.omega, hp.omega_ridge)
    gram = np.einsum("ntkm,ntlm->ntkl", state.Q, state.Q)
    traces = np.einsum("ntkl,ntlk->nt", gram, omega_inv)
    trace_term = hp.alpha * float(traces.sum())
    l1 = sum(float(np.abs(a).sum()) for a in (state.C, state.D, state.E, state.F))
    gaps = _penalty_blocks(state, data)
    penalty = 0.5 * hp.rho * sum(float((g**2).sum()) for g in gaps)
    ridge = hp.theta * (float((state.P**2).sum()) + float((state.Q**2).sum())) if hp.theta else 0.0
    total = loss + trace_term + l1 + penalty + ridge
    if not np.isfinite(total):
        _locate_nonfinite(R, "squared-loss residual")
        _locate_nonfinite(traces, "cross-type trace term")
        for g, lbl in zip(gaps, ("temporal-P", "temporal-Q", "spatial-P", "spatial-Q")):
            _locate_nonfinite(g, f"{lbl} penalty block")
        raise NumericError("non-finite objective")
    return total


def unaugmented_objective(state: ModelState, data: TrainingData, hp: Hyperparams) -> float:
    """The underlying objective: evaluates L_rho at exact consensus
    (C=PA, D=QA, E=PB, F=QB) with zero duals, where every penalty vanishes
    and the L1 terms act on the true weight differences."""
    consensus = state.copy()
    consensus.C = data.temporal.apply(state.P.transpose(0, 2, 1))
    consensus.D = data.temporal.apply(state.Q.transpose(0, 2, 3, 1))
    consensus.E = data.spatial.apply(state.P.transpose(1, 2, 0))
    consensus.F = data.spatial.apply(state.Q.transpose(1, 2, 3, 0))
    for f in ("S", "U", "V", "Z"):
        setattr(consensus, f, np.zeros_like(getattr(state, f)))
    return objective(consensus, data, hp)


def grad_P(state: ModelState, data: TrainingData, hp: Hyperparams, n: int, t: int) -> np.ndarray:
    """Reference gradient of L_rho w.r.t. the shared block P_n^t (0-based
    n, t). The sweep kernel is the optimized twin of this function."""
    N, T, M = state.P.shape
    if not (0 <= n < N and 0 <= t < T):
        raise IndexError(f"block ({n},{t}) outside (N={N}, T={T}) (0-based)")
    x = data.X[n, t]
    r = x @ (state.P[n, t] + state.Q[n, t]).T - data.Y[n, t]
    g = 2.0 * r.sum() * x
    beta = data.temporal.strength
    H = data.temporal.apply(state.P[n].T) - state.C[n] + state.S[n]
    if t < T - 1:
        g = g + hp.rho * beta * H[:, t]
    if t > 0:
        g = g - hp.rho * beta * H[:, t - 1]
    if data.spatial.n_pairs:
        G = data.spatial.apply(state.P[:, t].T) - state.E[t] + state.V[t]
        w = data.spatial.pair_w
        as_i = data.spatial.pair_i == n
        as_j = data.spatial.pair_j == n
        g = g + hp.rho * (G[:, as_i] @ w[as_i] - G[:, as_j] @ w[as_j])
    if hp.theta:
        g = g + 2.0 * hp.theta * state.P[n, t]
    return g


def grad_Q(state: ModelState, data: TrainingData, hp: Hyperparams, n: int, t: int, k: int) -> np.ndarray:
    """Reference gradient of L_rho w.r.t. the type block Q_n^t(k) (0-based).

    The cross-type term is 2*alpha*(Q_nt (Omega+ridge I)^-1) column k, the
    derivative of alpha*tr(Q Omega^-1 Q^T) for symmetric Omega.
    """
    N, T, K, M = state.Q.shape
    if not (0 <= n < N and 0 <= t < T and 0 <= k < K):
        raise IndexError(f"block ({n},{t},{k}) outside (N={N}, T={T}, K={K}) (0-based)")
    x = data.X[n, t]
    r = float(x @ (state.P[n, t] + state.Q[n, t, k]) - data.Y[n, t, k])
    g = 2.0 * r * x
    omega_inv = _omega_inverse(state.omega[n, t], hp.omega_ridge)
    g = g + 2.0 * hp.alpha * (state.Q[n, t].T @ omega_inv)[:, k]
    beta = data.temporal.strength
    H = data.temporal.apply(state.Q[n, :, k].T) - state.D[n, k] + state.U[n, k]
    if t < T - 1:
        g = g + hp.rho * beta * H[:, t]
    if t > 0:
        g = g - hp.rho * beta * H[:, t - 1]
    if data.spatial.n_pairs:
        G = data.spatial.apply(state.Q[:, t, k].T) - state.F[t, k] + state.Z[t, k]
        w = data.spatial.pair_w
        as_i = data.spatial.pair_i == n
        as_j = data.spatial.pair_j == n
        g = g + hp.rho * (G[:, as_i] @ w[as_i] - G[:, as_j] @ w[as_j])
    if hp.theta:
        g = g + 2.0 * hp.theta * state.Q[n, t, k]
    return g


def init_state(data: TrainingData, hp: Hyperparams, seed: int) -> ModelState:
    """Seeded uniform(-0.01, 0.01) draws for all weight/auxiliary/dual arrays
    (drawn in the order P, Q, C, D, E, F, S, U, V, Z) and identity task
    covariances."""
    rng = np.random.default_rng(seed)
    N, T, M, K = data.N, data.T, data.M, data.K
    npair = data.spatial.n_pairs

    def draw(*shape):
        return rng.uniform(-0.01, 0.01, size=shape)

    P = draw(N, T, M)
    Q = draw(N, T, K, M)
    C = draw(N, M, T - 1)
    D = draw(N, K, M, T - 1)
    E = draw(T, M, npair)
    F = draw(T, K, M, npair)
    S = draw(N, M, T - 1)
    U = draw(N, K, M, T - 1)
    V = draw(T, M, npair)
    Z = draw(T, K, M, npair)
    omega = np.broadcast_to(np.eye(K), (N, T, K, K)).copy()
    return ModelState(P, Q, omega, C, D, E, F, S, U, V, Z,
                      omega_degenerate=np.zeros((N, T), dtype=bool))


def admm_step(state: ModelState, data: TrainingData, hp: Hyperparams):
    """One full ADMM iteration; returns (new_state, StepReport).

    Order: sequential P/Q gradient sweep (fresh values), covariance updates,
    then the temporal and spatial auxiliary/dual updates. The covariance of
    block (n,t) is read only by that block's own Q step, so updating all
    covariances after the sweep is identical to the interleaved order.
    """
    if hp.rho <= 0:
        raise ConfigError("admm_step requires rho > 0 (proximal threshold is 1/rho)")
    new = state.copy()
    omega_inv = _omega_inverse(state.omega, hp.omega_ridge)
    sp = data.spatial
    _kernels.gradient_sweep(
        new.P, new.Q, data.X, data.Y, omega_inv,
        new.C, new.S, new.D, new.U, new.E, new.V, new.F, new.Z,
        sp.pair_i, sp.pair_j, sp.pair_w, data.reg_ptr, data.reg_pos, data.reg_sign,
        data.temporal.strength, hp.alpha, hp.rho, hp.theta, hp.eta,
    )
    new.omega, new.omega_degenerate = _update_all_omegas(new.Q)

    kappa = 1.0 / hp.rho
    PA = data.temporal.apply(new.P.transpose(0, 2, 1))
    QA = data.temporal.apply(new.Q.transpose(0, 2, 3, 1))
    PB = data.spatial.apply(new.P.transpose(1, 2, 0))
    QB = data.spatial.apply(new.Q.transpose(1, 2, 3, 0))
    new.C = soft_threshold(PA + new.S, kappa)
    new.D = soft_threshold(QA + new.U, kappa)
    new.E = soft_threshold(PB + new.V, kappa)
    new.F = soft_threshold(QB + new.Z, kappa)
    lrho_fixed_dual = objective(new, data, hp)
    new.S = new.S + PA - new.C
    new.U = new.U + QA - new.D
    new.V = new.V + PB - new.E
    new.Z = new.Z + QB - new.F

    def block_norm_sum(diff, block_axes):
        sq = (diff**2).sum(axis=block_axes)
        return float(np.sqrt(sq).sum())

    report = StepReport(
        lrho=objective(new, data, hp),
        lrho_fixed_dual=lrho_fixed_dual,
        resid_C=block_norm_sum(PA - new.C, (1, 2)),
        resid_D=block_norm_sum(QA - new.D, (2, 3)),
        resid_E=block_norm_sum(PB - new.E, (1, 2)),
        resid_F=block_norm_sum(QB - new.F, (2, 3)),
        dual_delta_S=block_norm_sum(new.S - state.S, (1, 2)),
        dual_delta_U=block_norm_sum(new.U - state.U, (2, 3)),
        dual_delta_V=block_norm_sum(new.V - state.V, (1, 2)),
        dual_delta_Z=block_norm_sum(new.Z - state.Z, (2, 3)),
        eta=hp.eta,
    )
    return new, report


DIVERGENCE_FACTOR = 1e3
MAX_ETA_HALVINGS = 10


def fit(data: TrainingData, hp: Hyperparams, seed: int = 0, on_iteration=None):
    """Run ADMM to convergence; returns (ModelState, FitReport).

    Stops when the largest primal residual and the relative objective change
    both fall below hp.tol, or after hp.max_iters iterations. eta is halved
    (at most 10 times) whenever an iteration's primal and proximal updates
    fail to decrease the objective at fixed duals (dual ascent itself is
    expected to raise it); the run aborts if the objective exceeds 1000x its
    initial value. Deterministic for fixed (data, hp, seed).
    """
    if data.T < 2:
        raise ConfigError(f"fit requires T >= 2, got T={data.T}")
    if hp.rho <= 0:
        raise ConfigError("fit requires rho > 0")
    if data.temporal.strength != hp.beta:
        raise ConfigError(
            f"temporal operator was built with beta={data.temporal.strength}, "
            f"hyperparams say beta={hp.beta}; rebuild TrainingData"
        )
    state = init_state(data, hp, seed)
    lrho_prev = objective(state, data, hp)
    lrho_initial = lrho_prev
    guard = DIVERGENCE_FACTOR * max(lrho_initial, 1e-12)
    cur = hp
    halvings = 0
    lrho_history: list[float] = []
    resid_history: list[tuple] = []
    reason = "max_iters"
    iterations = 0
    for it in range(hp.max_iters):
        state, report = admm_step(state, data, cur)
        iterations = it + 1
        lrho_history.append(report.lrho)
        resid_history.append((report.resid_C, report.resid_D, report.resid_E, report.resid_F))
        if on_iteration is not None:
            on_iteration(it, state, report)
        if report.lrho > guard:
            raise DivergenceError(
                f"objective grew to {report.lrho:.3e}, over {DIVERGENCE_FACTOR:g}x its "
                f"initial value {lrho_initial:.3e}; try a smaller eta (current {cur.eta:g})"
            )
        # lrho_prev is the entering state's objective (same duals the sweep and
        # prox updates saw), so an increase here means eta overshot
        if report.lrho_fixed_dual > lrho_prev and halvings < MAX_ETA_HALVINGS:
            halvings += 1
            cur = dataclasses.replace(cur, eta=cur.eta / 2.0)
        rel_change = abs(report.lrho - lrho_prev) / max(abs(lrho_prev), 1e-12)
        if report.max_primal_residual < hp.tol and rel_change < hp.tol:
            reason = "converged"
            lrho_prev = report.lrho
            break
        lrho_prev = report.lrho
    fit_report = FitReport(
        lrho_initial=lrho_initial,
        lrho_history=lrho_history,
        resid_history=resid_history,
        stopping_reason=reason,
        iterations=iterations,
        eta_final=cur.eta,
        eta_halvings=halvings,
    )
    return state, fit_report


def training_rmse(state: ModelState, data: TrainingData) -> float:
    """Root mean squared residual of X(P+Q) against Y over all cells."""
    R = _residuals(state, data)
    return float(np.sqrt((R**2).mean()))
