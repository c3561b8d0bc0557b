"""One-step inequalities checked on concrete states.

Each function compares a state with its successor after a single
interaction (i influenced by l) and returns True when the inequality
holds. ``tol`` absorbs rounding only.
"""

from __future__ import annotations

import math

import numpy as np

from . import constants as K
from .analysis import ClusterPartition, potentials, sign_triple_consistent, try_clusters
from .geometry import Configuration, UpdateRule, apply_interaction, correlation


def step_linear(config: Configuration, i: int, l: int, alpha: float) -> Configuration:
    return apply_interaction(config, (i, l), UpdateRule.linear(alpha))


def q0_window(before, after, P: ClusterPartition, alpha: float, tol: float = 1e-12) -> bool:
    """delta0/(2(1+alpha)) <= delta0' <= (1+alpha) delta0."""
    d0 = potentials(before, P).delta0
    d1 = potentials(after, P).delta0
    return d0 / (2 * (1 + alpha)) - tol <= d1 <= (1 + alpha) * d0 + tol


def c_step_ratio(before, after, P: ClusterPartition, alpha: float, tol: float = 1e-12) -> bool:
    d0 = potentials(before, P).delta0
    d1 = potentials(after, P).delta0
    cs = K.c_step(alpha)
    return d0 / cs - tol <= d1 <= cs * d0 + tol


def bounded_step(before, after, P: ClusterPartition, eps1: float) -> bool:
    """Same clusters, and signs kept wherever |A| > 1 - eps1^2 before."""
    if try_clusters(after) != P:
        return False
    A, B = correlation(before).entries, correlation(after).entries
    near = np.abs(A) > 1 - eps1 ** 2
    return bool(np.all(np.sign(A[near]) == np.sign(B[near])))


def q1_floor(before, after, P: ClusterPartition, alpha: float, rtol: float = 1e-9) -> bool:
    """Q1' >= min(Q0, Q1) - K_alpha, i.e. delta1' <= e^K max(delta0, delta1)."""
    p, q = potentials(before, P), potentials(after, P)
    bound = math.exp(K.k_alpha(alpha)) * max(p.delta0, p.delta1)
    return q.delta1 <= bound * (1 + rtol)


def q1_two_sided(before, after, P: ClusterPartition, alpha: float, rtol: float = 1e-9
                 ) -> bool | None:
    """delta1'/delta1 in [1/K', K'] when delta1 >= C delta0 > 0; None if
    the hypothesis fails."""
    p, q = potentials(before, P), potentials(after, P)
    if not (p.delta0 > 0 and p.delta1 >= K.ratio_threshold(alpha) * p.delta0):
        return None
    kp = K.k_prime_alpha(alpha)
    r = q.delta1 / p.delta1
    return 1 / kp * (1 - rtol) <= r <= kp * (1 + rtol)


def new_aij(config: Configuration, i: int, l: int, alpha: float, tol: float = 1e-12) -> bool:
    """Lower bounds on A'_ij when |A_il| >= 1/2 (vacuous otherwise)."""
    A = correlation(config).entries
    if abs(A[i, l]) < 0.5 or i == l:
        return True
    B = correlation(step_linear(config, i, l, alpha)).entries
    k = alpha / (2 * (1 + alpha))
    for j in range(config.n):
        if j == i or A[i, l] * A[j, l] < 0:
            continue
        if A[i, j] < 0 and B[i, j] < A[i, j] + k * abs(A[j, l]) - tol:
            return False
        if A[i, j] >= 0 and B[i, j] < k * abs(A[j, l]) - tol:
            return False
    return True


def aij_consistent_cases(config: Configuration, P: ClusterPartition, a: int, b: int,
                         i: int, l: int, alpha: float, tol: float = 1e-12) -> list:
    """Violated cases (1, 2, 3) for a move of i in S_a (or S_b, by symmetry)."""
    A = correlation(config).entries
    B = correlation(step_linear(config, i, l, alpha)).entries
    d0 = potentials(config, P).delta0
    own, other = (P[a], P[b]) if i in P[a] else (P[b], P[a])
    bad = []
    for j in other:
        if l not in own and l not in other:
            if abs(B[i, j] - A[i, j]) > (3 * alpha + alpha ** 2) * d0 ** 2 + tol:
                bad.append(1)
        elif l in other:
            if np.sign(B[i, j]) != np.sign(A[i, j]) or abs(B[i, j]) < abs(A[i, j]) * (1 - 1e-12):
                bad.append(2)
        elif l != i:
            floor = min(abs(A[i, j]), abs(A[j, l]))
            if np.sign(B[i, j]) != np.sign(A[i, j]) or abs(B[i, j]) < floor * (1 - 1e-12):
                bad.append(3)
    return bad


# random cases for the triangle-type inequalities

def near_vector(u: np.ndarray, gap: float, rng) -> np.ndarray:
    """A unit vector v with 1 - |<u, v>| = gap and a random sign."""
    w = rng.standard_normal(u.size)
    w -= w.dot(u) * u
    w /= np.linalg.norm(w)
    c = 1.0 - gap
    return rng.choice([-1.0, 1.0]) * (c * u + math.sqrt(1 - c * c) * w)


def consistent_signs_case(rng) -> bool:
    """Two vectors each within eps1 of a third: their correlation is within
    (2 eps1)^2 of unit and the sign triple is consistent."""
    d = int(rng.integers(2, 6))
    e1 = 10 ** rng.uniform(-4, math.log10(0.49))
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    uj = near_vector(u, rng.uniform(0, 1) * e1 ** 2, rng)
    ul = near_vector(u, rng.uniform(0, 1) * e1 ** 2, rng)
    A = correlation(Configuration(np.array([u, uj, ul]))).entries
    return abs(A[1, 2]) >= 1 - (2 * e1) ** 2 - 1e-12 and sign_triple_consistent(A, 0, 1, 2)


def orthogonal_transitive_case(rng) -> bool:
    """Nearly orthogonal pair, each partner perturbed within eps: the
    perturbed pair stays within 64 eps of orthogonal."""
    d = int(rng.integers(2, 6))
    eps = 10 ** rng.uniform(-6, math.log10(1 / 256))
    ui = rng.standard_normal(d)
    ui /= np.linalg.norm(ui)
    w = rng.standard_normal(d)
    w -= w.dot(ui) * ui
    w /= np.linalg.norm(w)
    a = rng.uniform(-eps, eps)
    uj = a * ui + math.sqrt(1 - a * a) * w
    ui2 = near_vector(ui, rng.uniform(0, 1) * eps ** 2, rng)
    uj2 = near_vector(uj, rng.uniform(0, 1) * eps ** 2, rng)
    return abs(ui2.dot(uj2)) <= 64 * eps
