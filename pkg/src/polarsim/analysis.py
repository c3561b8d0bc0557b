"""Cluster structure, inactivity, separability, consistency and the
potentials delta0, delta1, Q0, Q1, delta' of a configuration.

All functions accept a ``CorrelationMatrix``, a ``Configuration`` or a raw
square array. Passing a configuration (or its ``correlation``) gives the
accurate near-unit gaps; a raw array falls back to 1 - |A|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .geometry import CorrelationMatrix, as_correlation


class NotClusterable(ValueError):
    """No partition satisfies the cluster definition for this matrix."""


class ZeroSign(ValueError):
    """A correlation needed for a sign identity is zero."""


class NoCrossPair(ValueError):
    """There is no nonzero correlation between distinct clusters."""


def epsilon_base(d: int, alpha: float) -> float:
    if d < 2 or not alpha > 0:
        raise ValueError("need d >= 2 and alpha > 0")
    return min(1.0 / 256.0, 1.0 / (2.0 * d * (d + 1)), 1.0 / (4.0 * (2.0 + alpha) ** 2))


@dataclass(frozen=True)
class ClusterPartition:
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        object.__setattr__(self, "blocks", tuple(sorted(blocks, key=lambda b: b[0])))

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, a):
        return self.blocks[a]

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def labels(self) -> np.ndarray:
        lab = np.empty(self.n, dtype=np.int64)
        for a, block in enumerate(self.blocks):
            lab[list(block)] = a
        return lab

    def block_of(self, i: int) -> int:
        for a, block in enumerate(self.blocks):
            if i in block:
                return a
        raise IndexError(i)

    def as_lists(self) -> list:
        return [list(b) for b in self.blocks]


def clusters(A) -> ClusterPartition:
    """The unique partition into clusters (pairwise |A| > 1/2 inside,
    |A| < 1/2 across), or ``NotClusterable``.

    A valid partition must coincide with the connected components of the
    graph {|A_ij| > 1/2}; |A_ij| = 1/2 exactly violates both conditions.
    """
    A = np.abs(as_correlation(A).entries)
    n = A.shape[0]
    adj = A > 0.5
    ncomp, lab = connected_components(adj, directed=False)
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(n, dtype=bool)
    if np.any(same & off & ~adj):
        i, j = np.argwhere(same & off & ~adj)[0]
        raise NotClusterable(f"agents {i} and {j} are connected but |A| = {A[i, j]:.6g} <= 1/2")
    if np.any(~same & (A >= 0.5)):
        i, j = np.argwhere(~same & (A >= 0.5))[0]
        raise NotClusterable(f"cross pair ({i}, {j}) has |A| = 1/2")
    return ClusterPartition(tuple(tuple(np.flatnonzero(lab == c)) for c in range(ncomp)))


def try_clusters(A) -> ClusterPartition | None:
    try:
        return clusters(A)
    except NotClusterable:
        return None


@dataclass(frozen=True)
class InactivityReport:
    eps0: float
    eps1: float
    inactive: bool
    witness: tuple | None = None


def _pair_ok(C: CorrelationMatrix, eps0: float, eps1: float) -> np.ndarray:
    # near-unit test written as sqrt(1 - |A|) < eps1 so that it agrees
    # exactly with the delta1 computed in ``potentials``
    return (np.abs(C.entries) < eps0) | (np.sqrt(C.gaps) < eps1)


def is_inactive(A, eps0: float, eps1: float) -> InactivityReport:
    if not (eps0 > 0 and eps1 > 0):
        raise ValueError("eps0 and eps1 must be positive")
    C = as_correlation(A)
    bad = ~_pair_ok(C, eps0, eps1)
    bad = np.triu(bad, k=1)
    if not bad.any():
        return InactivityReport(eps0, eps1, True, None)
    i, j = np.argwhere(bad)[0]
    return InactivityReport(eps0, eps1, False, (int(i), int(j)))


def is_separable(A, tol_orth: float = 0.0) -> tuple[bool, tuple | None]:
    """True with (S, T) if agents split into two groups that are mutually
    orthogonal up to ``tol_orth``; S is the group containing agent 0."""
    if tol_orth < 0:
        raise ValueError("tol_orth must be >= 0")
    E = np.abs(as_correlation(A).entries) > tol_orth
    ncomp, lab = connected_components(E, directed=False)
    if ncomp == 1:
        return False, None
    S = tuple(int(i) for i in np.flatnonzero(lab == lab[0]))
    T = tuple(int(i) for i in np.flatnonzero(lab != lab[0]))
    return True, (S, T)


@dataclass(frozen=True)
class Potentials:
    delta0: float
    delta1: float
    Q0: float
    Q1: float
    delta_prime: float

    def as_dict(self) -> dict:
        return {"delta0": self.delta0, "delta1": self.delta1, "Q0": self.Q0,
                "Q1": self.Q1, "delta_prime": self.delta_prime}


def neg_log(x: float) -> float:
    """-ln x with -ln 0 = inf."""
    return math.inf if x <= 0.0 else -math.log(x)


def _masks(P: ClusterPartition, n: int):
    lab = P.labels()
    if lab.size != n:
        raise ValueError("partition does not cover all agents")
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(n, dtype=bool)
    return same & off, ~same


def potentials(A, P: ClusterPartition) -> Potentials:
    C = as_correlation(A)
    within, cross = _masks(P, C.n)
    absA = np.abs(C.entries)
    delta0 = float(absA[cross].max()) if cross.any() else 0.0
    delta1 = float(math.sqrt(C.gaps[within].max())) if within.any() else 0.0
    delta_prime = float(np.sum(C.entries ** 2))
    return Potentials(delta0, delta1, neg_log(delta0), neg_log(delta1), delta_prime)


def delta_prime(A) -> float:
    return float(np.sum(as_correlation(A).entries ** 2))


def delta_ab(A, P: ClusterPartition, a: int, b: int) -> float:
    if a == b:
        raise ValueError("delta_ab needs two distinct blocks")
    E = np.abs(as_correlation(A).entries)
    return float(E[np.ix_(P[a], P[b])].min())


def _sign(x: float, zero_tol: float) -> int:
    if abs(x) <= zero_tol:
        return 0
    return 1 if x > 0 else -1


def sign_triple_consistent(A, i: int, j: int, l: int, zero_tol: float = 0.0) -> bool:
    """sign(A_ij) == sign(A_il) * sign(A_jl); raises ``ZeroSign`` on a zero entry."""
    if len({i, j, l}) != 3:
        raise ValueError("indices must be distinct")
    E = as_correlation(A).entries
    s = [_sign(E[i, j], zero_tol), _sign(E[i, l], zero_tol), _sign(E[j, l], zero_tol)]
    if 0 in s:
        raise ZeroSign(f"zero correlation among ({i}, {j}, {l})")
    return s[0] == s[1] * s[2]


@dataclass(frozen=True)
class ConsistencyReport:
    a: int
    b: int
    m: float
    consistent: bool
    violation: tuple | None = None
    reason: str | None = None


def is_consistent(A, P: ClusterPartition, a: int, b: int, m: float = 0.0) -> ConsistencyReport:
    """(a, b, m)-consistency: for all i, i' in S_a and j, j' in S_b,
    sign A_i'j' = sign A_ii' sign A_ij sign A_jj' != 0 and
    |A_i'j'| >= m * delta0. Reports the lexicographically first
    violating (i, i', j, j')."""
    if a == b:
        raise ValueError("consistency needs two distinct blocks")
    if m < 0:
        raise ValueError("m must be >= 0")
    C = as_correlation(A)
    E = C.entries
    Sa, Sb = np.array(P[a]), np.array(P[b])
    sg = np.sign(E)
    lhs = sg[np.ix_(Sa, Sb)]                       # [i', j']
    prod = (sg[np.ix_(Sa, Sa)][:, :, None, None]   # [i, i']
            * sg[np.ix_(Sa, Sb)][:, None, :, None]  # [i, j]
            * sg[np.ix_(Sb, Sb)][None, None, :, :])  # [j, j']
    sign_bad = (lhs[None, :, None, :] != prod) | (lhs[None, :, None, :] == 0)
    d0 = potentials(C, P).delta0
    mag_bad_pair = np.abs(E[np.ix_(Sa, Sb)]) < m * d0   # [i', j']
    mag_bad = np.broadcast_to(mag_bad_pair[None, :, None, :], sign_bad.shape)
    bad = sign_bad | mag_bad
    if not bad.any():
        return ConsistencyReport(a, b, m, True)
    k = np.argwhere(bad)[0]
    quad = (int(Sa[k[0]]), int(Sa[k[1]]), int(Sb[k[2]]), int(Sb[k[3]]))
    reason = "sign" if sign_bad[tuple(k)] else "magnitude"
    return ConsistencyReport(a, b, m, False, quad, reason)


def realizing_pair(A, P: ClusterPartition) -> tuple[int, int, int, int]:
    """(a, b, i, j) with i < j in distinct blocks a, b and |A_ij| = delta0;
    ties go to the lexicographically smallest (i, j)."""
    if len(P) < 2:
        raise NoCrossPair("single block")
    E = np.abs(as_correlation(A).entries)
    _, cross = _masks(P, E.shape[0])
    masked = np.where(np.triu(cross, k=1), E, -1.0)
    best = masked.max()
    if best <= 0.0:
        raise NoCrossPair("all cross correlations are zero")
    i, j = np.argwhere(masked == best)[0]
    return P.block_of(int(i)), P.block_of(int(j)), int(i), int(j)


def realizing_pair_between(A, P: ClusterPartition, a: int, b: int) -> tuple[int, int]:
    """(i0, j0) in S_a x S_b maximising |A|, lexicographic ties."""
    E = np.abs(as_correlation(A).entries)
    sub = E[np.ix_(P[a], P[b])]
    if sub.max() <= 0.0:
        raise NoCrossPair(f"blocks {a} and {b} are orthogonal")
    p, q = np.argwhere(sub == sub.max())[0]
    return P[a][p], P[b][q]


# -- reports -----------------------------------------------------------------

def _json_float(x: float):
    return "inf" if x == math.inf else x


@dataclass(frozen=True)
class AnalysisReport:
    inactive: bool
    clusters: list | None
    delta0: float | None
    delta1: float | None
    Q0: float | None
    Q1: float | None
    delta_prime: float
    separable: bool

    def to_json(self) -> dict:
        return {"inactive": self.inactive, "clusters": self.clusters,
                "delta0": self.delta0, "delta1": self.delta1,
                "Q0": None if self.Q0 is None else _json_float(self.Q0),
                "Q1": None if self.Q1 is None else _json_float(self.Q1),
                "delta_prime": self.delta_prime, "separable": self.separable}

    @classmethod
    def from_json(cls, data: dict) -> "AnalysisReport":
        def num(x):
            return math.inf if x == "inf" else x
        return cls(data["inactive"], data["clusters"], data["delta0"], data["delta1"],
                   None if data["Q0"] is None else num(data["Q0"]),
                   None if data["Q1"] is None else num(data["Q1"]),
                   data["delta_prime"], data["separable"])


def analyze(A, eps0: float, eps1: float, tol_orth: float = 1e-9) -> AnalysisReport:
    C = as_correlation(A)
    P = try_clusters(C)
    sep, _ = is_separable(C, tol_orth)
    inactive = is_inactive(C, eps0, eps1).inactive
    if P is None:
        return AnalysisReport(inactive, None, None, None, None, None, delta_prime(C), sep)
    pot = potentials(C, P)
    return AnalysisReport(inactive, P.as_lists(), pot.delta0, pot.delta1, pot.Q0, pot.Q1,
                          pot.delta_prime, sep)


# -- epochs ------------------------------------------------------------------

def _record_inactive(rec, e0: float, e1: float) -> bool:
    if rec.delta0 is None or rec.delta1 is None:
        return False
    return rec.delta0 < e0 and rec.delta1 < e1


def epochs(trace: Sequence, eps: float, eps1: float) -> list[tuple]:
    """Split a sampled trace into inactive epochs.

    An epoch starts at the first record that is (eps, eps)-inactive and ends
    at the first later-or-equal record that is not (eps, eps1)-inactive.
    A one-cluster epoch ends where it starts and is final. Returns
    ``(t_start, t_end, num_clusters)`` triples; ``t_end`` is None for an
    epoch still open at the end of the trace. Records need ``t``,
    ``delta0``, ``delta1`` and ``num_clusters`` attributes.
    """
    out = []
    k = 0
    N = len(trace)
    while k < N:
        while k < N and not _record_inactive(trace[k], eps, eps):
            k += 1
        if k == N:
            break
        start = trace[k]
        nc = start.num_clusters
        if nc == 1:
            out.append((start.t, start.t, 1))
            break
        e = k
        while e < N and _record_inactive(trace[e], eps, eps1):
            e += 1
        if e == N:
            out.append((start.t, None, nc))
            break
        out.append((start.t, trace[e].t, nc))
        k = e + 1
    return out


def split_sizes(A) -> tuple[int, int]:
    """Group sizes under sign identification relative to agent 0."""
    E = as_correlation(A).entries
    plus = int(np.sum(E[0] >= 0))
    return plus, E.shape[0] - plus


def block_labels_from(blocks: Iterable[Iterable[int]], n: int) -> np.ndarray:
    return ClusterPartition(tuple(tuple(b) for b in blocks)).labels()
