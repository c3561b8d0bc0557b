"""The random process: pair sampling, stepping, stopping rules and traces.

Randomness comes from numpy's PCG64. A run is driven by one
``SeedSequence(seed)``; ensembles spawn one child sequence per trajectory,
so trajectory k is reproducible on its own.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .analysis import (ClusterPartition, epsilon_base, is_inactive, is_separable,
                       potentials, try_clusters)
from .geometry import (BadFile, Configuration, DegenerateUpdate, Interaction, UpdateRule,
                       apply_interaction, correlation, load_config, polarization_distance)

RNG_NAME = "numpy.PCG64"
PAIR_BLOCK = 4096
TRACE_HEADER = ["t", "delta0", "delta1", "Q0", "Q1", "delta_prime", "num_clusters",
                "inactive", "i", "j"]


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn_seeds(seed: int, count: int) -> list:
    return np.random.SeedSequence(int(seed)).spawn(count)


# -- pair distributions ------------------------------------------------------

@dataclass(frozen=True)
class PairDistribution:
    """Uniform on [n] x [n] when ``matrix`` is None, else the explicit D."""

    n: int
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix is None:
            return
        D = np.array(self.matrix, dtype=float)
        if D.shape != (self.n, self.n):
            raise ValueError(f"pair distribution must be {self.n}x{self.n}")
        if np.any(D < 0) or not math.isclose(D.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("pair distribution must be nonnegative and sum to 1")
        D = D / D.sum()
        D.setflags(write=False)
        object.__setattr__(self, "matrix", D)

    @property
    def full_support(self) -> bool:
        return self.matrix is None or bool(np.all(self.matrix > 0))

    def describe(self):
        return "uniform" if self.matrix is None else self.matrix.tolist()

    @classmethod
    def from_file(cls, path, n: int) -> "PairDistribution":
        try:
            D = np.array(json.loads(Path(path).read_text()), dtype=float)
        except (OSError, ValueError) as exc:
            raise BadFile(f"cannot read pair distribution {path}: {exc}") from exc
        try:
            return cls(n, D)
        except ValueError as exc:
            raise BadFile(str(exc)) from exc


class PairSampler:
    """Streams ordered pairs (influenced, influencer).

    Pairs are drawn in fixed blocks so the sequence does not depend on how
    the consumer chunks its requests.
    """

    def __init__(self, dist: PairDistribution, seed):
        self.dist = dist
        self.rng = make_rng(seed)
        self._buf = np.empty((0, 2), dtype=np.int64)
        self._pos = 0
        if dist.matrix is not None:
            self._cdf = np.cumsum(dist.matrix.ravel())
            self._cdf[-1] = 1.0

    def _refill(self):
        n = self.dist.n
        if self.dist.matrix is None:
            buf = self.rng.integers(0, n, size=(PAIR_BLOCK, 2), dtype=np.int64)
        else:
            flat = np.searchsorted(self._cdf, self.rng.random(PAIR_BLOCK), side="right")
            flat = np.minimum(flat, n * n - 1)
            buf = np.stack(np.divmod(flat, n), axis=1).astype(np.int64)
        self._buf = buf
        self._pos = 0

    def take(self, k: int) -> np.ndarray:
        out = np.empty((k, 2), dtype=np.int64)
        filled = 0
        while filled < k:
            if self._pos == len(self._buf):
                self._refill()
            m = min(k - filled, len(self._buf) - self._pos)
            out[filled:filled + m] = self._buf[self._pos:self._pos + m]
            self._pos += m
            filled += m
        return out


# -- initial conditions -------------------------------------------------------

def sample_initial(n: int, d: int, kind: str = "uniform", seed=0, path=None,
                   center=None, spread: float = 0.3) -> Configuration:
    """Draw i.i.d. opinions.

    ``uniform``: normalized standard Gaussians. ``antipodal``: a random
    sign times (center + spread * gaussian), normalized; the law is
    symmetric under u -> -u. ``file``: load from ``path``.
    """
    if kind == "file":
        if path is None:
            raise BadFile("file initialisation needs a path")
        return load_config(path)[0]
    if n < 2 or d < 2:
        raise ValueError("need n >= 2 and d >= 2")
    rng = make_rng(seed)
    if kind == "uniform":
        G = rng.standard_normal((n, d))
    elif kind == "antipodal":
        c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
        if c.shape != (d,):
            raise ValueError("center must have length d")
        c = c / np.linalg.norm(c) if np.linalg.norm(c) > 0 else c
        G = c + spread * rng.standard_normal((n, d))
        G *= rng.choice([-1.0, 1.0], size=(n, 1))
    else:
        raise ValueError(f"unknown init kind {kind!r}")
    return Configuration.from_vectors(G)


def sample_inactive(n: int, d: int, k: int, eps0: float, eps1: float, rng,
                    axis_aligned: bool = False, min_cross: float = 0.0,
                    cross_scale: float | None = None, spread_blocks=None,
                    max_tries: int = 1000) -> tuple[Configuration, ClusterPartition]:
    """A random (eps0, eps1)-inactive configuration with k clusters.

    Cluster centers form an orthonormal frame (a random one, or the first k
    coordinate axes). Each member adds small components along the other
    centers (cross correlations) and along the complement of the frame
    (within-cluster spread), then gets a random sign. Scales are drawn
    log-uniformly and every draw is verified; failures are redrawn.
    The axis-aligned frame keeps cross correlations far below machine
    epsilon representable. ``min_cross`` forces at least one cross entry
    of that magnitude or larger. ``cross_scale`` fixes the cross scale
    instead of drawing it, and ``spread_blocks`` limits within-cluster
    spread to the listed clusters (the others stay rigid, which is what
    keeps cross entries tiny in the axis-aligned frame).
    """
    if not 1 <= k <= min(n, d):
        raise ValueError("need 1 <= k <= min(n, d)")
    for _ in range(max_tries):
        if axis_aligned:
            frame = np.eye(d)
        else:
            frame, _r = np.linalg.qr(rng.standard_normal((d, d)))
            frame = frame.T
        centers, comp = frame[:k], frame[k:]
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
        rng.shuffle(labels)
        lo = max(-3.0, math.log10(min_cross / (0.45 * eps0))) if min_cross > 0 else -3.0
        cross = (0.45 * eps0 * 10.0 ** rng.uniform(min(lo, 0.0), 0.0)
                 if cross_scale is None else cross_scale)
        within = 0.45 * eps1 * 10.0 ** rng.uniform(-2.0, 0.0)
        U = centers[labels].copy()
        X = cross * rng.uniform(-1.0, 1.0, size=(n, k))
        X[np.arange(n), labels] = 0.0
        U += X @ centers
        if len(comp):
            W = within * rng.uniform(-1.0, 1.0, size=(n, len(comp))) / math.sqrt(len(comp))
            if spread_blocks is not None:
                W[~np.isin(labels, list(spread_blocks))] = 0.0
            U += W @ comp
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        U *= rng.choice([-1.0, 1.0], size=(n, 1))
        config = Configuration(U)
        P = ClusterPartition(tuple(tuple(np.flatnonzero(labels == a)) for a in range(k)))
        if try_clusters(config) != P or not is_inactive(config, eps0, eps1).inactive:
            continue
        if min_cross > 0 and k > 1 and potentials(config, P).delta0 < min_cross:
            continue
        return config, P
    raise RuntimeError("could not sample an inactive configuration")


# -- stepping -----------------------------------------------------------------

def step(config: Configuration, sampler: PairSampler, rule: UpdateRule
         ) -> tuple[Configuration, Interaction]:
    i, j = (int(v) for v in sampler.take(1)[0])
    x = Interaction(i, j)
    return apply_interaction(config, x, rule), x


@dataclass(frozen=True)
class StopCriteria:
    polarization_tol: float | None = None
    activity: tuple | None = None          # (eps, eps1, T)
    max_steps: int = 10 ** 6

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.polarization_tol is not None and not self.polarization_tol > 0:
            raise ValueError("polarization tolerance must be positive")
        if self.activity is not None:
            eps, eps1, T = self.activity
            if not (eps > 0 and eps1 > 0 and int(T) >= 1):
                raise ValueError("activity needs eps, eps1 > 0 and T >= 1")
            object.__setattr__(self, "activity", (float(eps), float(eps1), int(T)))

    def as_dict(self) -> dict:
        return {"polarization_tol": self.polarization_tol,
                "activity": None if self.activity is None else list(self.activity),
                "max_steps": self.max_steps}


@dataclass(frozen=True)
class ProcessParams:
    n: int
    d: int
    rule: UpdateRule = field(default_factory=UpdateRule)
    pair_dist: PairDistribution | None = None
    seed: int = 0
    sample_every: int = 1000
    stop: StopCriteria = field(default_factory=StopCriteria)

    def __post_init__(self):
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if self.pair_dist is None:
            object.__setattr__(self, "pair_dist", PairDistribution(self.n))
        elif self.pair_dist.n != self.n:
            raise ValueError("pair distribution size does not match n")

    @property
    def max_steps(self) -> int:
        return self.stop.max_steps

    def metadata(self) -> dict:
        return {"seed": self.seed, "n": self.n, "d": self.d, "alpha": self.rule.alpha,
                "rule": self.rule.describe(), "pair_dist": self.pair_dist.describe(),
                "full_support": self.pair_dist.full_support, "T_rec": self.sample_every,
                "stop": self.stop.as_dict(), "rng": RNG_NAME}


@dataclass(frozen=True)
class TraceRecord:
    t: int
    delta0: float | None
    delta1: float | None
    Q0: float | None
    Q1: float | None
    delta_prime: float
    num_clusters: int | None
    inactive: bool
    interaction: Interaction | None = None
    separable: bool | None = None


def make_record(config: Configuration, t: int, eps0: float, eps1: float,
                interaction: Interaction | None = None, tol_orth: float | None = 1e-9
                ) -> TraceRecord:
    C = correlation(config)
    P = try_clusters(C)
    inactive = is_inactive(C, eps0, eps1).inactive
    sep = None if tol_orth is None else is_separable(C, tol_orth)[0]
    dp = float(np.sum(C.entries ** 2))
    if P is None:
        return TraceRecord(t, None, None, None, None, dp, None, inactive, interaction, sep)
    p = potentials(C, P)
    return TraceRecord(t, p.delta0, p.delta1, p.Q0, p.Q1, dp, len(P), inactive,
                       interaction, sep)


@dataclass
class SimulationResult:
    final: Configuration
    trace: list
    reason: str
    steps: int


def _run_chunk(U: np.ndarray, pairs: np.ndarray, rule: UpdateRule, t0: int):
    bad = _kernels.run_pairs(U, pairs, *rule.kernel_args())
    if bad >= 0:
        i, j = pairs[bad]
        raise DegenerateUpdate(f"degenerate update at step {t0 + bad + 1}, interaction {(i, j)}")


def simulate(params: ProcessParams, config0: Configuration, record: bool = True,
             sampler: PairSampler | None = None) -> SimulationResult:
    """Run until polarized, active (checked at multiples of T) or out of budget.

    Records are taken at t = 0, every ``sample_every`` steps, and at the
    final step. The ``inactive`` field is evaluated at the activity
    thresholds if given, else at (eps_base, eps_base).
    """
    if config0.n != params.n or config0.dim != params.d:
        raise ValueError("initial configuration does not match (n, d)")
    stop = params.stop
    rule = params.rule
    if sampler is None:
        sampler = PairSampler(params.pair_dist, params.seed)
    if stop.activity is not None:
        eps0, eps1, T = stop.activity
    else:
        eps0 = eps1 = epsilon_base(params.d, rule.alpha)
        T = None
    U = np.array(config0.opinions)
    trace: list = []
    last: Interaction | None = None

    def snapshot(t):
        return make_record(Configuration(U), t, eps0, eps1, last)

    def polarized():
        return (stop.polarization_tol is not None
                and polarization_distance(Configuration(U)) <= stop.polarization_tol)

    def active():
        return T is not None and not is_inactive(Configuration(U), stop.activity[0],
                                                 stop.activity[1]).inactive

    t = 0
    if record:
        trace.append(snapshot(0))
    reason = None
    if polarized():
        reason = "polarized"
    elif active():
        reason = "active"
    while reason is None and t < stop.max_steps:
        nxt = min(stop.max_steps, (t // params.sample_every + 1) * params.sample_every)
        if T is not None:
            nxt = min(nxt, (t // T + 1) * T)
        pairs = sampler.take(nxt - t)
        _run_chunk(U, pairs, rule, t)
        last = Interaction(int(pairs[-1, 0]), int(pairs[-1, 1]))
        t = nxt
        on_record = t % params.sample_every == 0
        if record and on_record:
            trace.append(snapshot(t))
        if (on_record or t == stop.max_steps) and polarized():
            reason = "polarized"
        elif T is not None and t % T == 0 and active():
            reason = "active"
    if reason is None:
        reason = "budget"
    if record and trace[-1].t != t:
        trace.append(snapshot(t))
    return SimulationResult(Configuration(U), trace, reason, t)


def run_scripted(config: Configuration, schedule: Sequence, rule: UpdateRule,
                 track_potentials: bool = False) -> tuple[Configuration, list]:
    """Apply a schedule in order; optionally return Potentials after each step
    (None where no cluster partition exists)."""
    pairs = [x.as_pair() if isinstance(x, Interaction) else (int(x[0]), int(x[1]))
             for x in schedule]
    n = config.n
    for i, j in pairs:
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"interaction {(i, j)} out of range for n={n}")
    if not track_potentials:
        U = np.array(config.opinions)
        if pairs:
            _run_chunk(U, np.array(pairs, dtype=np.int64), rule, 0)
        return Configuration(U), []
    pots = []
    cur = config
    for x in pairs:
        cur = apply_interaction(cur, x, rule)
        P = try_clusters(cur)
        pots.append(None if P is None else potentials(cur, P))
    return cur, pots


# -- ensembles ----------------------------------------------------------------

def _ensemble_worker(args):
    params, config0, seed_seq, record = args
    res = simulate(params, config0, record=record, sampler=PairSampler(params.pair_dist, seed_seq))
    return res


def run_ensemble(params: ProcessParams, inits: Sequence[Configuration], jobs: int = 1,
                 record: bool = False) -> list:
    """One trajectory per initial configuration; trajectory k uses child
    stream k of ``SeedSequence(params.seed)``. Output order matches input."""
    seeds = spawn_seeds(params.seed, len(inits))
    tasks = [(params, c, s, record) for c, s in zip(inits, seeds)]
    if jobs <= 1:
        return [_ensemble_worker(a) for a in tasks]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_ensemble_worker, tasks))


# -- trace persistence --------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return "inf" if x == math.inf else repr(x)
    return str(x)


def trace_to_csv(trace: Sequence[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in trace:
        ij = r.interaction.as_pair() if r.interaction is not None else (None, None)
        w.writerow([_fmt(v) for v in (r.t, r.delta0, r.delta1, r.Q0, r.Q1, r.delta_prime,
                                      r.num_clusters, r.inactive, ij[0], ij[1])])
    return buf.getvalue()


def trace_from_csv(text: str) -> list:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != TRACE_HEADER:
        raise BadFile("trace CSV header mismatch")

    def num(s, cast=float):
        if s == "":
            return None
        return math.inf if s == "inf" else cast(s)

    out = []
    try:
        for row in rows[1:]:
            t, d0, d1, q0, q1, dp, nc, ina, i, j = row
            x = None if i == "" else Interaction(int(i), int(j))
            out.append(TraceRecord(int(t), num(d0), num(d1), num(q0), num(q1), float(dp),
                                   num(nc, int), ina == "1", x))
    except ValueError as exc:
        raise BadFile(f"malformed trace row: {exc}") from exc
    return out


def write_trace(path, trace: Sequence[TraceRecord], meta: dict) -> None:
    path = Path(path)
    path.write_text(trace_to_csv(trace))
    path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_trace(path) -> tuple[list, dict]:
    path = Path(path)
    try:
        text = path.read_text()
        meta = json.loads(path.with_suffix(".meta.json").read_text())
    except (OSError, ValueError) as exc:
        raise BadFile(f"cannot read trace {path}: {exc}") from exc
    return trace_from_csv(text), meta


def record_dict(r: TraceRecord) -> dict:
    d = asdict(r)
    d["interaction"] = None if r.interaction is None else list(r.interaction.as_pair())
    return d
