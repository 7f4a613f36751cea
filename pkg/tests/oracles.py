"""Independent reference implementations used only to check the library.

Everything here is deliberately naive: exhaustive enumeration, per-candidate
rescoring, central finite differences, power iteration.  None of it shares
code with the library paths it verifies.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def enumerate_log_likelihood(A, B, pi, obs) -> float:
    """log P(O|lambda) by brute-force sum over every hidden path."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    pi = np.asarray(pi, dtype=float)
    n = pi.size
    total = 0.0
    for path in itertools.product(range(n), repeat=len(obs)):
        p = pi[path[0]] * B[path[0], obs[0]]
        for t in range(1, len(obs)):
            p *= A[path[t - 1], path[t]] * B[path[t], obs[t]]
        total += p
    return math.log(total)


def enumerate_gamma(A, B, pi, obs) -> np.ndarray:
    """Posterior state occupancies by exhaustive path enumeration."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    pi = np.asarray(pi, dtype=float)
    n = pi.size
    T = len(obs)
    weights = np.zeros((T, n))
    total = 0.0
    for path in itertools.product(range(n), repeat=T):
        p = pi[path[0]] * B[path[0], obs[0]]
        for t in range(1, T):
            p *= A[path[t - 1], path[t]] * B[path[t], obs[t]]
        total += p
        for t, state in enumerate(path):
            weights[t, state] += p
    return weights / total


def brute_force_predict(score_fn, prefix, n_obs: int) -> int:
    """Append every candidate, rescore the whole thing, take the argmax.

    `score_fn(symbols) -> log-likelihood`; ties break to the lowest index
    because max() scans in order with strict improvement.
    """
    best, best_score = 0, -math.inf
    for k in range(n_obs):
        extended = np.concatenate([prefix, [k]])
        try:
            s = score_fn(extended)
        except Exception:
            s = -math.inf
        if s > best_score:
            best, best_score = k, s
    return best


def central_difference(f, x0: float, eps: float = 1e-5) -> float:
    return (f(x0 + eps) - f(x0 - eps)) / (2.0 * eps)


def stationary_distribution(A, iters: int = 10_000) -> np.ndarray:
    """Stationary row vector of a row-stochastic matrix by power iteration."""
    A = np.asarray(A, dtype=float)
    v = np.full(A.shape[0], 1.0 / A.shape[0])
    for _ in range(iters):
        nxt = v @ A
        if np.abs(nxt - v).max() < 1e-14:
            v = nxt
            break
        v = nxt
    return v / v.sum()


def count_frequency(groups_of_sequences, n_obs: int) -> np.ndarray:
    """Naive symbol-frequency recount over a set of sequences."""
    counts = np.zeros(n_obs)
    for seq in groups_of_sequences:
        for s in seq:
            counts[int(s)] += 1
    return counts / counts.sum()


def pairwise_euclidean(vectors) -> np.ndarray:
    """Double-loop sum-of-squares distance matrix."""
    g = len(vectors)
    out = np.zeros((g, g))
    for i in range(g):
        for j in range(g):
            acc = 0.0
            for a, b in zip(vectors[i], vectors[j]):
                acc += (a - b) ** 2
            out[i, j] = math.sqrt(acc)
    return out
