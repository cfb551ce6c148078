"""Inner loops of the duration-HMM decoder.

Compiled with numba when available (the streaming budget wants them at
a millisecond or two); the numpy fallbacks compute identical values.
Callers pass duration tables padded to a common depth with -inf.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def viterbi_core(cum, logdur, pred):
    """(delta, choice) tables for the cyclic duration HMM.

    cum: (T+1, S) prefix sums of log emissions; logdur: (D, S) with row
    d-1 holding duration d; pred[j]: the state preceding j in the cycle.
    """
    T = cum.shape[0] - 1
    S = cum.shape[1]
    D = logdur.shape[0]
    delta = np.full((T + 1, S), -np.inf)
    amat = np.full((T + 1, S), -np.inf)
    choice = np.zeros((T + 1, S), np.int64)
    for j in range(S):
        delta[0, j] = 0.0
        amat[0, j] = -cum[0, j]
    for t in range(1, T + 1):
        dlim = min(t, D)
        for j in range(S):
            best = -np.inf
            best_d = 1
            for d in range(1, dlim + 1):
                v = amat[t - d, j] + logdur[d - 1, j]
                if v > best:
                    best = v
                    best_d = d
            delta[t, j] = cum[t, j] + best
            choice[t, j] = best_d
        for j in range(S):
            amat[t, j] = delta[t, pred[j]] - cum[t, j]
    return delta, choice


@njit(cache=True)
def forward_core(cum_p, logdur_p, pred, log_ninv):
    """fwd[s, j] = log P(obs[:s], boundary at s, next state j)."""
    T = cum_p.shape[0] - 1
    S = cum_p.shape[1]
    D = logdur_p.shape[0]
    fwd = np.full((T + 1, S), -np.inf)
    afwd = np.full((T + 1, S), -np.inf)
    for j in range(S):
        fwd[0, j] = log_ninv
    for j in range(S):
        afwd[0, j] = fwd[0, pred[j]] - cum_p[0, j]
    for t in range(1, T + 1):
        dlim = min(t, D)
        for j in range(S):
            m = -np.inf
            for d in range(1, dlim + 1):
                v = afwd[t - d, j] + logdur_p[d - 1, j]
                if v > m:
                    m = v
            if m == -np.inf:
                fwd[t, j] = -np.inf
            else:
                acc = 0.0
                for d in range(1, dlim + 1):
                    v = afwd[t - d, j] + logdur_p[d - 1, j]
                    if v > -np.inf:
                        acc += np.exp(v - m)
                fwd[t, j] = cum_p[t, j] + m + np.log(acc)
        for j in range(S):
            afwd[t, j] = fwd[t, pred[j]] - cum_p[t, j]
    return fwd


@njit(cache=True)
def backward_core(cum, logdur, nxt):
    """bwd[s, j] = log P(obs[s:] | segment of state j starts at s)."""
    T = cum.shape[0] - 1
    S = cum.shape[1]
    D = logdur.shape[0]
    bwd = np.full((T + 1, S), -np.inf)
    bwd_n = np.full((T + 1, S), -np.inf)
    for j in range(S):
        bwd[T, j] = 0.0
    for j in range(S):
        bwd_n[T, j] = bwd[T, nxt[j]] + cum[T, j]
    for s in range(T - 1, -1, -1):
        dlim = min(D, T - s)
        for j in range(S):
            m = -np.inf
            for d in range(1, dlim + 1):
                v = logdur[d - 1, j] + bwd_n[s + d, j]
                if v > m:
                    m = v
            if m == -np.inf:
                bwd[s, j] = -np.inf
            else:
                acc = 0.0
                for d in range(1, dlim + 1):
                    v = logdur[d - 1, j] + bwd_n[s + d, j]
                    if v > -np.inf:
                        acc += np.exp(v - m)
                bwd[s, j] = m + np.log(acc) - cum[s, j]
        for j in range(S):
            bwd_n[s, j] = bwd[s, nxt[j]] + cum[s, j]
    return bwd, bwd_n


def warmup() -> None:
    """Trigger JIT compilation on a toy problem (no-op without numba)."""
    cum = np.zeros((4, 4))
    logdur = np.full((2, 4), np.log(0.5))
    pred = np.array([3, 0, 1, 2], dtype=np.int64)
    nxt = np.array([1, 2, 3, 0], dtype=np.int64)
    viterbi_core(cum, logdur, pred)
    forward_core(cum, logdur, pred, float(np.log(0.25)))
    backward_core(cum, logdur, nxt)
