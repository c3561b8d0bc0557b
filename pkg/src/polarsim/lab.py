"""Monte Carlo checks of the probabilistic statements.

* a two-chain race between a drifting-down P0 and a conditionally
  drifting-up P1,
* the Azuma-type tail bound exp(-c2^2 t / (32 c1^2)),
* block-level properties of (Q0, Q1) sampled every T steps of the real
  process, with frozen-state resampling for the conditional means,
* the exact one-step drift of delta' = sum A_ij^2.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import _kernels
from . import constants as K
from .analysis import epsilon_base, neg_log
from .dynamics import PairDistribution, PairSampler, make_rng, sample_inactive
from .geometry import Configuration, UpdateRule, apply_interaction, correlation


class KernelViolation(RuntimeError):
    """A chain step broke the bound its kernel declares."""


def wilson(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    ci = binomtest(successes, trials).proportion_ci(confidence, method="wilson")
    return (float(ci.low), float(ci.high))


def wilson_halfwidth(successes: int, trials: int) -> float:
    lo, hi = wilson(successes, trials)
    return 0.5 * (hi - lo)


# -- two chains ------------------------------------------------------------------

KERNELS = ("default", "p1-up", "p0-deterministic")


@dataclass(frozen=True)
class TwoChainParams:
    C: float = 2.0
    C_min: float = 0.0
    C_tilde: float = 4.0
    P0_start: float | None = None      # default C_start + 10 C
    P1_start: float | None = None      # default P0_start
    kernel: str = "default"
    eta: float = 0.0
    T_max: int = 10 ** 6
    trials: int = 10 ** 4
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.C >= 1:
            raise ValueError("C must be >= 1")
        if self.eta < 0 or self.eta > self.C - 2.0 / self.C + self.C:
            raise ValueError("eta out of range")
        if min(self.p0_start, self.p1_start) <= self.C_start:
            raise ValueError("need min(P0(0), P1(0)) > C_start")

    @property
    def C_start(self) -> float:
        return self.C_min + self.C_tilde

    @property
    def p0_start(self) -> float:
        return self.C_start + 10.0 * self.C if self.P0_start is None else self.P0_start

    @property
    def p1_start(self) -> float:
        return self.p0_start if self.P1_start is None else self.P1_start


@dataclass(frozen=True)
class TrialOutcome:
    t0: int
    escaped_via: str | None      # "P0_crossed", "P1_crossed" or None when capped
    capped: bool


def _check_steps(p0, p1, n0, n1, C, active, tol=1e-9):
    if np.any(np.abs(n0 - p0)[active] > C + tol):
        raise KernelViolation("|P0(t+1) - P0(t)| > C")
    floor = np.minimum(p0, p1) - C
    if np.any((n1 < floor - tol)[active]):
        raise KernelViolation("P1(t+1) < min(P0(t), P1(t)) - C")
    regime = active & (p1 <= p0 - C)
    if np.any(np.abs(n1 - p1)[regime] > C + tol):
        raise KernelViolation("|P1(t+1) - P1(t)| > C in the P1 <= P0 - C regime")


def _two_chain_step(p0, p1, params: TwoChainParams, rng):
    C = params.C
    m = p0.size
    if params.kernel == "p0-deterministic":
        n0 = p0 - 1.0 / C
        n1 = p1 + C
        return n0, n1
    up = C - 2.0 / C - params.eta
    n0 = p0 + np.where(rng.random(m) < 0.5, -C, up)
    if params.kernel == "p1-up":
        return n0, p1 + C
    regime = p1 <= p0 - C
    drift = p1 + np.where(rng.random(m) < 0.5, C, -C + 2.0 / C)
    drop = rng.random(m) < 0.5
    adversary = np.where(drop, np.minimum(p0, p1) - C, p1)
    return n0, np.where(regime, drift, adversary)


def run_two_chain(params: TwoChainParams) -> list:
    """Vectorized over trials; every step of every live trial is checked
    against the kernel's declared bounds."""
    rng = make_rng(params.seed)
    m = params.trials
    p0 = np.full(m, params.p0_start)
    p1 = np.full(m, params.p1_start)
    live = np.ones(m, dtype=bool)
    t0 = np.full(m, -1, dtype=np.int64)
    via_p1 = np.zeros(m, dtype=bool)
    t = 0
    while live.any() and t < params.T_max:
        n0, n1 = _two_chain_step(p0, p1, params, rng)
        _check_steps(p0, p1, n0, n1, params.C, live)
        p0 = np.where(live, n0, p0)
        p1 = np.where(live, n1, p1)
        t += 1
        hit1 = live & (p1 <= params.C_min)
        hit0 = live & (p0 <= params.C_start)
        done = hit0 | hit1
        t0[done] = t
        via_p1[hit1] = True
        live &= ~done
    out = []
    for k in range(m):
        if t0[k] < 0:
            out.append(TrialOutcome(t, None, True))
        else:
            out.append(TrialOutcome(int(t0[k]), "P1_crossed" if via_p1[k] else "P0_crossed",
                                    False))
    return out


@dataclass
class LabReport:
    estimate: float
    wilson_interval: tuple
    bound: float
    trials: int
    seed: int
    kernel_id: str
    violations: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        d["wilson_interval"] = list(self.wilson_interval)
        return d


def two_chain_report(params: TwoChainParams) -> LabReport:
    outs = run_two_chain(params)
    esc = sum(o.escaped_via == "P1_crossed" for o in outs)
    capped = sum(o.capped for o in outs)
    n = len(outs)
    return LabReport(esc / n, wilson(esc, n), 0.3, n, params.seed, params.kernel, [],
                     {"capped": capped, "capped_fraction": capped / n,
                      "C": params.C, "C_min": params.C_min, "C_tilde": params.C_tilde,
                      "wilson_halfwidth": wilson_halfwidth(esc, n),
                      "median_t0": float(np.median([o.t0 for o in outs]))})


def calibrate_c_tilde(C: float, trials: int = 4000, seed: int = 0, target: float = 0.2,
                      multiples=(1, 2, 3, 4, 5, 6, 8, 10, 12, 16)) -> tuple[float, list]:
    """Smallest multiple k of C whose upper Wilson limit is below ``target``."""
    rows = []
    for k in multiples:
        rep = two_chain_report(TwoChainParams(C=C, C_tilde=k * C, trials=trials, seed=seed))
        rows.append((k, rep.estimate, rep.wilson_interval[1]))
        if rep.wilson_interval[1] < target:
            return float(k), rows
    raise RuntimeError("no multiple met the target")


# -- Azuma ----------------------------------------------------------------------

@dataclass(frozen=True)
class AzumaParams:
    c1: float = 1.0
    c2: float = 0.2
    t: int = 500
    trials: int = 10 ** 5
    seed: int = 0
    kernel: str = "two-point"

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0 and self.c2 <= self.c1):
            raise ValueError("need 0 < c2 <= c1")
        if self.t < 0:
            raise ValueError("horizon must be >= 0")
        if self.kernel not in ("two-point", "deterministic"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


def azuma_bound(c1: float, c2: float, t: int) -> float:
    return math.exp(-c2 * c2 * t / (32.0 * c1 * c1))


def azuma_paths(params: AzumaParams, horizons) -> dict:
    """Empirical Pr[X(t) >= X(0) - c2 t / 2] at each horizon, from one set
    of paths. Steps are -c1 or c1 - 2 c2 with probability 1/2 each."""
    horizons = sorted(set(int(h) for h in horizons))
    rng = make_rng(params.seed)
    X = np.zeros(params.trials)
    out = {}
    t = 0
    for h in horizons:
        if params.kernel == "deterministic":
            X = X - params.c2 * (h - t)
        else:
            while t < h:
                k = min(h - t, 64)
                steps = np.where(rng.random((k, params.trials)) < 0.5, -params.c1,
                                 params.c1 - 2.0 * params.c2)
                X = X + steps.sum(axis=0)
                t += k
        t = h
        out[h] = float(np.mean(X >= -params.c2 * h / 2.0 - 1e-12 * max(h, 1)))
    return out


def azuma_tail(params: AzumaParams) -> tuple[float, float]:
    emp = azuma_paths(params, [params.t])[params.t]
    return emp, azuma_bound(params.c1, params.c2, params.t)


def azuma_report(params: AzumaParams, horizons=(50, 100, 200, 500)) -> LabReport:
    emp = azuma_paths(params, horizons)
    violations = [{"t": h, "empirical": e, "bound": azuma_bound(params.c1, params.c2, h)}
                  for h, e in emp.items() if e > azuma_bound(params.c1, params.c2, h)]
    h = max(emp)
    hits = round(emp[h] * params.trials)
    return LabReport(emp[h], wilson(hits, params.trials), azuma_bound(params.c1, params.c2, h),
                     params.trials, params.seed, params.kernel, violations,
                     {"tails": {str(k): v for k, v in emp.items()},
                      "bounds": {str(k): azuma_bound(params.c1, params.c2, k) for k in emp}})


# -- block properties -------------------------------------------------------------

@dataclass(frozen=True)
class BlockCheckParams:
    n: int = 6
    d: int = 3
    alpha: float = 1.0
    eps: float = 1e-5
    eps1: float = 3e-3
    T: int = 20
    C: float | None = None           # default: the block constant for (alpha, T)
    blocks: int = 1000
    replicas: int = 2000
    probe_every: int = 1
    deep_fraction: float = 0.25
    deep_log10_cross: tuple = (-200.0, -20.0)
    min_delta1: float = 1e-9          # below this, within gaps sit at rounding level
    seed: int = 0

    @property
    def block_C(self) -> float:
        return K.block_constant(self.alpha, self.T) if self.C is None else self.C


@dataclass
class BlockReport:
    blocks: int
    probed: int
    deterministic_violations: list
    p0_drift_ok: int
    p0_drift_probed: int
    p1_drift_ok: int
    p1_drift_probed: int
    trajectories: int
    C: float
    p0_mean_negative: int = 0
    p1_mean_positive: int = 0

    @property
    def drift_ok_fraction(self) -> float:
        tot = self.p0_drift_probed + self.p1_drift_probed
        return 1.0 if tot == 0 else (self.p0_drift_ok + self.p1_drift_ok) / tot

    def to_json(self) -> dict:
        d = asdict(self)
        d["drift_ok_fraction"] = self.drift_ok_fraction
        return d


def _p(U, labels):
    d0, d1, ok = _kernels.partition_stats(U, labels)
    return neg_log(d0), neg_log(d1), d0, d1, ok


def _start_state(params: BlockCheckParams, rng):
    deep = rng.random() < params.deep_fraction
    k = 2
    if deep:
        lo, hi = params.deep_log10_cross
        scale = 10.0 ** rng.uniform(lo, hi)
        return sample_inactive(params.n, params.d, k, params.eps, params.eps, rng,
                               axis_aligned=True, cross_scale=scale, spread_blocks=[0])
    return sample_inactive(params.n, params.d, k, params.eps, params.eps, rng)


def verify_block_properties(params: BlockCheckParams) -> BlockReport:
    """Walk T-step blocks of the process from sampled inactive states.

    At each block start that is (eps, eps)-inactive with P0 < inf the block
    must stay (eps_base, eps_base)-inactive and the deterministic bounds are
    checked on the realized block. Every ``probe_every``-th such state is
    frozen and ``replicas`` independent blocks are resampled; the sample
    mean of the change of P0 (and of P1 in the regime P1 <= P0 - C) must
    have the right sign within four standard errors.
    """
    rule = UpdateRule.linear(params.alpha)
    kargs = rule.kernel_args()
    eb = epsilon_base(params.d, params.alpha)
    C = params.block_C
    rng = make_rng(params.seed)
    viol: list = []
    blocks = probed = traj = 0
    p0_ok = p0_n = p1_ok = p1_n = p0_neg = p1_pos = 0
    dist = PairDistribution(params.n)
    while blocks < params.blocks:
        config, P = _start_state(params, rng)
        labels = P.labels()
        U = np.array(config.opinions)
        sampler = PairSampler(dist, rng.integers(2 ** 63))
        traj += 1
        while blocks < params.blocks:
            P0, P1, d0, d1, ok = _p(U, labels)
            if not (ok and d0 < params.eps and d1 < params.eps and P0 < math.inf):
                break
            if 0.0 < d1 < params.min_delta1:
                break
            if blocks % params.probe_every == 0:
                probed += 1
                pairs = rng.integers(0, params.n, size=(params.replicas, params.T, 2))
                r0, r1, rok = _kernels.run_replicas(U, pairs, *kargs, labels)
                q0 = -np.log(r0)
                q1 = np.where(r1 > 0, -np.log(np.where(r1 > 0, r1, 1.0)), np.inf)
                se = q0.std(ddof=1) / math.sqrt(params.replicas)
                p0_n += 1
                p0_neg += bool(q0.mean() < P0)
                if q0.mean() - P0 <= -1.0 / C + 4.0 * se:
                    p0_ok += 1
                if P1 <= P0 - C and np.all(np.isfinite(q1)):
                    se1 = q1.std(ddof=1) / math.sqrt(params.replicas)
                    p1_n += 1
                    p1_pos += bool(q1.mean() > P1)
                    if q1.mean() - P1 >= 1.0 / C - 4.0 * se1:
                        p1_ok += 1
            before = U.copy()
            pairs = sampler.take(params.T)
            left = _kernels.run_block_checked(U, pairs, *kargs, labels, eb, eb)
            blocks += 1
            N0, N1, *_ = _p(U, labels)
            snap = {"state": before.tolist(), "P0": P0, "P1": P1, "next_P0": N0,
                    "next_P1": N1}
            if left >= 0:
                viol.append({"check": "eps_base inactivity", "step": int(left), **snap})
                break
            if abs(N0 - P0) > C:
                viol.append({"check": "P0 bounded", **snap})
            if N1 < min(P0, P1) - C:
                viol.append({"check": "P1 lower bound", **snap})
            if P1 <= P0 - C and abs(N1 - P1) > C:
                viol.append({"check": "P1 bounded", **snap})
    return BlockReport(blocks, probed, viol, p0_ok, p0_n, p1_ok, p1_n, traj, C, p0_neg, p1_pos)


# -- delta' drift -----------------------------------------------------------------

def delta_prime_after_all(A: np.ndarray, alpha: float) -> np.ndarray:
    """delta' after each of the n^2 interactions (i influenced by l),
    from the closed-form row update; entry [i, l]."""
    A = np.clip(np.asarray(A, dtype=float), -1.0, 1.0)
    n = A.shape[0]
    c = 2.0 * alpha + alpha * alpha
    a_il = A                                                    # [i, l]
    rows = (A[:, None, :] + alpha * a_il[:, :, None] * A[None, :, :]) \
        / np.sqrt(1.0 + c * a_il ** 2)[:, :, None]              # [i, l, j]
    idx = np.arange(n)
    rows[idx, :, idx] = 1.0
    rows = np.clip(rows, -1.0, 1.0)
    old_row = np.sum(A ** 2, axis=1)                            # includes A_ii = 1
    new_row = np.sum(rows ** 2, axis=2)
    total = np.sum(A ** 2)
    out = total + 2.0 * (new_row - old_row[:, None])            # row i and column i
    out[idx, idx] = total                                       # self-interaction no-op
    return out


def delta_prime_drift_exact(config, alpha: float) -> float:
    """E[delta'(t+1) | U^t] - delta'(t) under uniform pairs, exactly."""
    A = correlation(config).entries if isinstance(config, Configuration) else np.asarray(config)
    return float(np.mean(delta_prime_after_all(A, alpha)) - np.sum(A ** 2))


def delta_prime_drift_mc(config: Configuration, alpha: float, samples: int, seed: int = 0
                         ) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of the same drift,
    using the geometric update for each sampled pair."""
    n = config.n
    rule = UpdateRule.linear(alpha)
    base = float(np.sum(correlation(config).entries ** 2))
    values = np.empty((n, n))
    for i in range(n):
        for l in range(n):
            values[i, l] = np.sum(correlation(apply_interaction(config, (i, l), rule)).entries ** 2)
    rng = make_rng(seed)
    counts = rng.multinomial(samples, np.full(n * n, 1.0 / (n * n))).reshape(n, n)
    mean = float(np.sum(counts * values) / samples) - base
    var = float(np.sum(counts * (values - base - mean) ** 2) / (samples - 1))
    return mean, math.sqrt(var / samples)


@dataclass
class DriftScan:
    configs: int
    min_drift: float
    findings: list

    def to_json(self) -> dict:
        return asdict(self)


def dprime_scan(configs: int, n_range=(2, 8), d_range=(2, 5), alpha: float = 1.0,
                seed: int = 0, tol: float = 1e-12) -> DriftScan:
    """Exact drift over random uniform configurations; each drift below
    -tol is kept as a finding with its configuration."""
    rng = make_rng(seed)
    findings = []
    worst = math.inf
    for k in range(configs):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        d = int(rng.integers(d_range[0], d_range[1] + 1))
        G = rng.standard_normal((n, d))
        cfg = Configuration.from_vectors(G)
        drift = delta_prime_drift_exact(cfg, alpha)
        worst = min(worst, drift)
        if drift < -tol:
            findings.append({"index": k, "n": n, "d": d, "alpha": alpha, "drift": drift,
                             "opinions": cfg.opinions.tolist()})
    return DriftScan(configs, worst, findings)
