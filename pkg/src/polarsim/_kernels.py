"""Numba kernels for the hot loops.

Every code path that moves an opinion goes through ``update_row`` so that
``apply_interaction``, ``simulate`` and scripted runs are bit-consistent.
"""

import math

import numpy as np
from numba import njit

LINEAR = 0
PIECEWISE = 1
TABLE = 2

# ||w|| below this is reported as a degenerate update
DEGENERATE_NORM = 1e-12


@njit(cache=True)
def coupling(a, kind, alpha, beta, xs, ys):
    if kind == LINEAR:
        return alpha * a
    if kind == PIECEWISE:
        if a >= 0.0:
            return alpha * a
        return beta * a
    return np.interp(a, xs, ys)


@njit(cache=True)
def update_row(U, i, j, kind, alpha, beta, xs, ys):
    """Agent ``j`` influences agent ``i`` in place. Returns False if degenerate."""
    if i == j:
        return True
    d = U.shape[1]
    a = 0.0
    for c in range(d):
        a += U[i, c] * U[j, c]
    if a > 1.0:
        a = 1.0
    elif a < -1.0:
        a = -1.0
    f = coupling(a, kind, alpha, beta, xs, ys)
    s = 0.0
    for c in range(d):
        w = U[i, c] + f * U[j, c]
        s += w * w
    norm = math.sqrt(s)
    if norm < DEGENERATE_NORM:
        return False
    for c in range(d):
        U[i, c] = (U[i, c] + f * U[j, c]) / norm
    return True


@njit(cache=True)
def run_pairs(U, pairs, kind, alpha, beta, xs, ys):
    """Apply ``pairs[k] = (influenced, influencer)`` in order.

    Returns the index of the first degenerate step, or -1.
    """
    for k in range(pairs.shape[0]):
        if not update_row(U, pairs[k, 0], pairs[k, 1], kind, alpha, beta, xs, ys):
            return k
    return -1


@njit(cache=True)
def partition_stats(U, labels):
    """(delta0, delta1, ok) of ``U`` measured against a fixed block labelling.

    ``ok`` is False when the labelling is no longer the cluster partition
    (some within pair has |A| <= 1/2 or some cross pair has |A| >= 1/2).
    """
    n, d = U.shape
    delta0 = 0.0
    gap_max = 0.0
    ok = True
    for i in range(n):
        for j in range(i + 1, n):
            a = 0.0
            for c in range(d):
                a += U[i, c] * U[j, c]
            if labels[i] == labels[j]:
                sgn = 1.0 if a >= 0.0 else -1.0
                g = 0.0
                for c in range(d):
                    diff = U[i, c] - sgn * U[j, c]
                    g += diff * diff
                g *= 0.5
                if g > gap_max:
                    gap_max = g
                if abs(a) <= 0.5:
                    ok = False
            else:
                if abs(a) > delta0:
                    delta0 = abs(a)
                if abs(a) >= 0.5:
                    ok = False
    return min(delta0, 1.0), math.sqrt(gap_max), ok


@njit(cache=True)
def run_block_checked(U, pairs, kind, alpha, beta, xs, ys, labels, eps0, eps1):
    """Run ``pairs`` while checking (eps0, eps1)-inactivity w.r.t. ``labels``.

    Returns the first step index after which the state left the labelled
    (eps0, eps1)-inactive set, or -1 if it stayed inside throughout.
    Only the moved row is rescanned after each step.
    """
    n, d = U.shape
    for k in range(pairs.shape[0]):
        i = pairs[k, 0]
        if not update_row(U, i, pairs[k, 1], kind, alpha, beta, xs, ys):
            return k
        if i == pairs[k, 1]:
            continue
        for j in range(n):
            if j == i:
                continue
            a = 0.0
            for c in range(d):
                a += U[i, c] * U[j, c]
            if labels[i] == labels[j]:
                sgn = 1.0 if a >= 0.0 else -1.0
                g = 0.0
                for c in range(d):
                    diff = U[i, c] - sgn * U[j, c]
                    g += diff * diff
                if math.sqrt(0.5 * g) >= eps1:
                    return k
            elif abs(a) >= eps0:
                return k
    return -1


@njit(cache=True)
def run_replicas(U0, pairs, kind, alpha, beta, xs, ys, labels):
    """Run ``pairs.shape[0]`` independent continuations of ``U0``.

    ``pairs`` has shape (M, T, 2). Returns per-replica delta0, delta1 at the
    end of the block and a flag telling whether the labelling survived.
    """
    M = pairs.shape[0]
    d0 = np.empty(M)
    d1 = np.empty(M)
    ok = np.empty(M, dtype=np.bool_)
    U = np.empty_like(U0)
    for m in range(M):
        U[:, :] = U0
        status = run_pairs(U, pairs[m], kind, alpha, beta, xs, ys)
        a, b, good = partition_stats(U, labels)
        d0[m] = a
        d1[m] = b
        ok[m] = good and status < 0
    return d0, d1, ok
