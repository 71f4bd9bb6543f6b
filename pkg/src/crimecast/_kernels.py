"""Hot inner loops of the ADMM sweep.

The per-block gradient sweep is strictly sequential (each block update must
see fresh values from earlier blocks), so it cannot be vectorized without
changing semantics. It is compiled with numba by default; setting
CRIMECAST_NO_NUMBA=1 in the environment before import selects a pure-numpy
interpretation of the same source. Both paths execute identical operation
sequences.
"""

from __future__ import annotations

import os

import numpy as np

USING_NUMBA = os.environ.get("CRIMECAST_NO_NUMBA", "").strip().lower() not in {"1", "true", "yes"}

if USING_NUMBA:
    from numba import njit
else:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def backend() -> str:
    return "numba" if USING_NUMBA else "numpy"


@njit(cache=True)
def gradient_sweep(P, Q, X, Y, omega_inv, C, S, D, U, E, V, F, Z,
                   pair_i, pair_j, pair_w, reg_ptr, reg_pos, reg_sign,
                   beta, alpha, rho, theta, eta):
    """One Gauss-Seidel pass over all blocks, n asc, t asc, k asc.

    Updates P (N,T,M) and Q (N,T,K,M) in place: one gradient step on the
    shared block, then one per type-specific block. All reads use current
    (fresh) values. omega_inv holds (Omega + ridge*I)^-1 per (n, t).
    """
    N, T, M = P.shape
    K = Q.shape[2]
    gp = np.empty(M)
    gq = np.empty(M)
    for n in range(N):
        lo = reg_ptr[n]
        hi = reg_ptr[n + 1]
        for t in range(T):
            x = X[n, t]
            for m in range(M):
                gp[m] = 0.0
            for k in range(K):
                r = -Y[n, t, k]
                for m in range(M):
                    r += x[m] * (P[n, t, m] + Q[n, t, k, m])
                twice_r = 2.0 * r
                for m in range(M):
                    gp[m] += twice_r * x[m]
            # temporal penalty touches columns t and t-1 of (P_n A - C_n + S_n)
            if t < T - 1:
                for m in range(M):
                    h = beta * (P[n, t, m] - P[n, t + 1, m]) - C[n, m, t] + S[n, m, t]
                    gp[m] += rho * beta * h
            if t > 0:
                for m in range(M):
                    h = beta * (P[n, t - 1, m] - P[n, t, m]) - C[n, m, t - 1] + S[n, m, t - 1]
                    gp[m] -= rho * beta * h
            # spatial penalty touches the active pair columns region n sits in
            for a in range(lo, hi):
                p = reg_pos[a]
                w = pair_w[p]
                i = pair_i[p]
                j = pair_j[p]
                coef = rho * reg_sign[a] * w
                for m in range(M):
                    gcol = w * (P[i, t, m] - P[j, t, m]) - E[t, m, p] + V[t, m, p]
                    gp[m] += coef * gcol
            if theta != 0.0:
                for m in range(M):
                    gp[m] += 2.0 * theta * P[n, t, m]
            for m in range(M):
                P[n, t, m] -= eta * gp[m]

            for k in range(K):
                r = -Y[n, t, k]
                for m in range(M):
                    r += x[m] * (P[n, t, m] + Q[n, t, k, m])
                twice_r = 2.0 * r
                for m in range(M):
                    gq[m] = twice_r * x[m]
                # cross-type coupling: 2*alpha * (Q_nt Omega^-1) column k
                for m in range(M):
                    acc = 0.0
                    for k2 in range(K):
                        acc += Q[n, t, k2, m] * omega_inv[n, t, k2, k]
                    gq[m] += 2.0 * alpha * acc
                if t < T - 1:
                    for m in range(M):
                        h = beta * (Q[n, t, k, m] - Q[n, t + 1, k, m]) - D[n, k, m, t] + U[n, k, m, t]
                        gq[m] += rho * beta * h
                if t > 0:
                    for m in range(M):
                        h = beta * (Q[n, t - 1, k, m] - Q[n, t, k, m]) - D[n, k, m, t - 1] + U[n, k, m, t - 1]
                        gq[m] -= rho * beta * h
                for a in range(lo, hi):
                    p = reg_pos[a]
                    w = pair_w[p]
                    i = pair_i[p]
                    j = pair_j[p]
                    coef = rho * reg_sign[a] * w
                    for m in range(M):
                        gcol = w * (Q[i, t, k, m] - Q[j, t, k, m]) - F[t, k, m, p] + Z[t, k, m, p]
                        gq[m] += coef * gcol
                if theta != 0.0:
                    for m in range(M):
                        gq[m] += 2.0 * theta * Q[n, t, k, m]
                for m in range(M):
                    Q[n, t, k, m] -= eta * gq[m]
