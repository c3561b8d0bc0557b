"""Explicit interaction schedules: reaching inactivity, reaching
consistency, amplifying cross-cluster correlation, tightening a cluster and
merging two clusters.

Schedules are lists of (influenced, influencer) pairs. Builders that need
to look at intermediate states simulate the linear rule as they go, so the
schedule is valid for exactly the configuration it was built from.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import constants as K
from .analysis import (ClusterPartition, NoCrossPair, clusters, delta_ab, epsilon_base,
                       is_consistent, is_inactive, realizing_pair_between)
from .dynamics import run_scripted
from .geometry import (BadFile, Configuration, UpdateRule, correlation,
                       self_reinforced)

PROVENANCES = ("path_to_inactive", "reach_consistency", "increase_delta", "tighten",
               "collapse", "random")


class NonConvergent(ValueError):
    """The self-reinforcement iteration cannot reach the target."""


class PreconditionViolated(ValueError):
    """The input does not satisfy the construction's hypothesis."""


@dataclass(frozen=True)
class Schedule:
    steps: tuple
    provenance: str
    annotations: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "steps", tuple((int(i), int(j)) for i, j in self.steps))

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __add__(self, other: "Schedule") -> "Schedule":
        return Schedule(self.steps + other.steps, self.provenance, dict(self.annotations))

    def to_json(self) -> dict:
        return {"provenance": self.provenance, "steps": [list(s) for s in self.steps],
                "annotations": self.annotations}

    @classmethod
    def from_json(cls, data: dict) -> "Schedule":
        try:
            steps = [(int(i), int(j)) for i, j in data["steps"]]
            return cls(tuple(steps), data["provenance"], dict(data.get("annotations", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise BadFile(f"malformed schedule: {exc}") from exc

    def validate(self, n: int) -> None:
        for i, j in self.steps:
            if not (0 <= i < n and 0 <= j < n):
                raise BadFile(f"schedule step {(i, j)} out of range for n={n}")


def save_schedule(path, schedule: Schedule) -> None:
    Path(path).write_text(json.dumps(schedule.to_json()) + "\n")


def load_schedule(path) -> Schedule:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise BadFile(f"cannot read schedule {path}: {exc}") from exc
    return Schedule.from_json(data)


def k0_needed(x0: float, target: float, alpha: float, cap: int = 10 ** 6) -> int:
    """Fewest self-reinforcement steps taking |x0| to at least ``target``."""
    x = abs(x0)
    if not target < 1.0:
        raise ValueError("target must be < 1")
    if x == 0.0:
        raise NonConvergent("0 is a fixed point of self-reinforcement")
    k = 0
    while x < target:
        x = self_reinforced(x, alpha)
        k += 1
        if k > cap:
            raise NonConvergent(f"no convergence within {cap} steps")
    return k


def _linear(alpha: float) -> UpdateRule:
    return UpdateRule.linear(alpha)


# -- path to inactivity ---------------------------------------------------------

def path_to_inactive(config: Configuration, eps: float, alpha: float,
                     agents: Sequence[int] | None = None) -> Schedule:
    """Anchor construction.

    Repeatedly take the smallest unassigned agent w as anchor, gather
    S = {i : |A_wi| >= eps/64} among unassigned agents and let w influence
    every other member K0 times, where K0 takes eps/64 to 1 - (eps/64)^2.
    Only non-anchors move and each moves only inside its own group, so the
    whole schedule can be read off the initial correlations.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    A = np.abs(correlation(config).entries)
    x = eps / 64.0
    k0 = k0_needed(x, 1.0 - x * x, alpha)
    remaining = sorted(range(config.n) if agents is None else (int(a) for a in agents))
    steps, anchors, groups = [], [], []
    while remaining:
        w = remaining[0]
        S = [i for i in remaining if i == w or A[w, i] >= x]
        for i in S:
            if i != w:
                steps.extend([(i, w)] * k0)
        anchors.append(w)
        groups.append(S)
        remaining = [i for i in remaining if i not in S]
    return Schedule(tuple(steps), "path_to_inactive",
                    {"anchors": anchors, "groups": groups, "K0": k0, "eps": eps})


# -- consistency ---------------------------------------------------------------

def reach_consistency(config: Configuration, P: ClusterPartition, a: int, b: int,
                      alpha: float, mode: str = "adaptive") -> Schedule:
    """Make blocks a and b (a, b, c_cons)-consistent.

    i0, j0 is the pair realizing max |A| between the blocks. Phase one:
    i0 influences every other member of S_a, K0 rounds. Phase two: j0
    influences every other member of S_b, K1 rounds. ``adaptive`` stops as
    soon as the check passes (and returns an empty schedule if it already
    does); ``worst-case`` runs all K0 + K1 rounds. Signs are handled
    relative to i0 and j0, with no sign normalization needed.
    """
    if mode not in ("adaptive", "worst-case"):
        raise ValueError("mode must be 'adaptive' or 'worst-case'")
    n = config.n
    i0, j0 = realizing_pair_between(config, P, a, b)
    m = K.c_cons(n, alpha)
    k0, k1 = K.k0_consistency(alpha), K.k1_consistency(alpha)
    rule = _linear(alpha)
    Sa = [i for i in P[a] if i != i0]
    Sb = [j for j in P[b] if j != j0]
    ra, rb = [(i, i0) for i in Sa], [(j, j0) for j in Sb]
    note = {"i0": i0, "j0": j0, "K0": k0, "K1": k1, "c_cons": m,
            "log_c_cons": K.log_c_cons(n, alpha), "mode": mode}
    if mode == "worst-case":
        return Schedule(tuple(ra * k0 + rb * k1), "reach_consistency", note)
    steps: list = []
    cur = config
    if is_consistent(cur, P, a, b, m).consistent:
        return Schedule((), "reach_consistency", note)
    rounds = itertools.chain(itertools.repeat(ra, k0 if ra else 0),
                             itertools.repeat(rb, k1 if rb else 0))
    for r in rounds:
        cur, _ = run_scripted(cur, r, rule)
        steps.extend(r)
        if is_consistent(cur, P, a, b, m).consistent:
            break
    return Schedule(tuple(steps), "reach_consistency", note)


def increase_delta_schedule(P: ClusterPartition, a: int, b: int, n: int | None = None
                            ) -> Schedule:
    """Every member of S_a influences every member of S_b and vice versa,
    cycled to length n^2 so every step stays between the two blocks."""
    if a == b:
        raise ValueError("need two distinct blocks")
    n = P.n if n is None else n
    cover = [(j, i) for i in P[a] for j in P[b]] + [(i, j) for i in P[a] for j in P[b]]
    steps = [cover[k % len(cover)] for k in range(n * n)]
    return Schedule(tuple(steps), "increase_delta", {"a": a, "b": b, "cover": len(cover)})


# -- tightening ----------------------------------------------------------------

def tighten_cluster_schedule(config: Configuration, P: ClusterPartition, a: int) -> Schedule:
    """Round robin over within-block pairs, lower index as influencer."""
    block = P[a]
    if len(block) < 2:
        raise PreconditionViolated("block needs at least two agents")
    A = np.abs(correlation(config).entries)
    sub = A[np.ix_(block, block)]
    if np.any(sub <= math.sqrt(0.5)):
        raise PreconditionViolated("some within-block |A| <= sqrt(2)/2")
    steps = [(q, p) for k, p in enumerate(block) for q in block[k + 1:]]
    return Schedule(tuple(steps), "tighten", {"block": a})


def max_within_gap(config: Configuration, block: Sequence[int]) -> float:
    g = correlation(config).gaps
    return float(g[np.ix_(block, block)].max())


def contraction_factor(config: Configuration, P: ClusterPartition, a: int,
                       schedule: Schedule, alpha: float) -> float:
    """max within-block (1 - |A|) after the schedule over the same before.
    Returns 0.0 when the block is already exact."""
    before = max_within_gap(config, P[a])
    after_cfg, _ = run_scripted(config, schedule, _linear(alpha))
    after = max_within_gap(after_cfg, P[a])
    if before == 0.0:
        return 0.0
    return after / before


# -- collapsing two clusters -----------------------------------------------------

def collapse_clusters(config: Configuration, eps: float, a: int, b: int, i0: int, j0: int,
                      alpha: float, P: ClusterPartition | None = None) -> Schedule:
    """Merge clusters a and b, then restore (eps, eps)-inactivity.

    1. i0 influences once each i in S_a with |A_{i j0}| < alpha eps / 4.
    2. With eps' = min(alpha eps / (4(1+alpha)), eps/64), j0 influences
       every agent of S = {i : |A_{i j0}| >= eps'} until it is within
       1 - (eps/64)^2 of j0.
    3. The anchor construction on the agents outside S.
    """
    eb = epsilon_base(config.dim, alpha)
    if not is_inactive(config, eb, eb).inactive:
        raise PreconditionViolated("configuration is not (eps_base, eps_base)-inactive")
    P = clusters(config) if P is None else P
    if len(P) < 2 or a == b:
        raise PreconditionViolated("need two distinct clusters")
    if i0 not in P[a] or j0 not in P[b]:
        raise PreconditionViolated("i0 must lie in S_a and j0 in S_b")
    A = correlation(config).entries
    if abs(A[i0, j0]) < eps:
        raise PreconditionViolated(f"|A_(i0 j0)| = {abs(A[i0, j0]):.3g} < eps")
    rule = _linear(alpha)
    first = [(i, i0) for i in P[a] if i != i0 and abs(A[i, j0]) < alpha * eps / 4.0]
    cur, _ = run_scripted(config, first, rule)
    A1 = correlation(cur).entries
    eps_p = min(alpha * eps / (4.0 * (1.0 + alpha)), eps / 64.0)
    S = [i for i in range(config.n) if i == j0 or abs(A1[i, j0]) >= eps_p]
    x = eps / 64.0
    k0 = k0_needed(eps_p, 1.0 - x * x, alpha)
    second = [s for i in S if i != j0 for s in [(i, j0)] * k0]
    cur, _ = run_scripted(cur, second, rule)
    rest = [i for i in range(config.n) if i not in S]
    third = path_to_inactive(cur, eps, alpha, agents=rest)
    return Schedule(tuple(first + second) + third.steps, "collapse",
                    {"eps_prime": eps_p, "merged": S, "K0": k0,
                     "anchors": third.annotations["anchors"]})


def amplification_factor(config: Configuration, P: ClusterPartition, a: int, b: int,
                         alpha: float) -> tuple[float, Configuration]:
    """delta_ab after the amplification schedule over delta_ab before."""
    before = delta_ab(config, P, a, b)
    if before == 0.0:
        raise NoCrossPair("delta_ab is zero")
    after_cfg, _ = run_scripted(config, increase_delta_schedule(P, a, b, config.n),
                                _linear(alpha))
    return delta_ab(after_cfg, P, a, b) / before, after_cfg
