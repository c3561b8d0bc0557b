"""Explicit constants used by the checks, plus the calibrated profile table.

Closed-form constants are functions of (n, d, alpha). Quantities that only
exist as "some small enough / large enough value" (eps, eps1, T, C_tilde)
are calibrated by ``scripts/calibrate_constants.py`` and shipped in
``constants.json``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

from .analysis import epsilon_base

TABLE_VERSION = 1


def c_step(alpha: float) -> float:
    """Per-step bound on the ratio delta0(t+1)/delta0(t) and its inverse."""
    return 2.0 * (1.0 + alpha)


def k_alpha(alpha: float) -> float:
    """One-step floor: Q1(t+1) >= min(Q0(t), Q1(t)) - k_alpha."""
    return 0.5 * math.log(1.0 + 2.0 * alpha + 0.5 * alpha * alpha)


def k_prime_alpha(alpha: float) -> float:
    """Two-sided factor for delta1(t+1)/delta1(t) once delta1 >= C delta0."""
    a = alpha
    return max(math.sqrt(2.0), 2.0 * math.sqrt(1.0 + a),
               math.sqrt(8.0 * (1.0 + a) * (2.0 * a + a * a)),
               math.sqrt(1.0 + 2.0 * a + 0.5 * a * a))


def ratio_threshold(alpha: float) -> float:
    """The C in the condition delta1 >= C delta0 for ``k_prime_alpha``."""
    return max(1.0, math.sqrt(2.0 * alpha))


def per_step_log_bound(alpha: float) -> float:
    """Largest one-step change of Q0 or Q1 allowed by the bounds above."""
    return max(math.log(c_step(alpha)), k_alpha(alpha), math.log(k_prime_alpha(alpha)))


def block_constant(alpha: float, T: int) -> float:
    """C for T-step blocks; twice the telescoped per-step bound."""
    return 2.0 * per_step_log_bound(alpha) * T


def k0_consistency(alpha: float) -> int:
    return math.ceil(2.0 * (1.0 + alpha) / alpha) + 1


def k1_consistency(alpha: float) -> int:
    k0 = k0_consistency(alpha)
    return math.ceil(4.0 * (1.0 + alpha) ** 2 * c_step(alpha) ** k0 / alpha ** 2) + 1


def log_c_cons(n: int, alpha: float) -> float:
    """ln c_cons; c_cons itself underflows for most parameters."""
    K = n * (k0_consistency(alpha) + k1_consistency(alpha))
    return math.log(alpha ** 2 / (4.0 * (1.0 + alpha) ** 2)) - K * math.log(c_step(alpha))


def c_cons(n: int, alpha: float) -> float:
    return math.exp(log_c_cons(n, alpha))


def c_adv(alpha: float, eps_prime: float) -> float:
    """Guaranteed relative growth of delta_ab over one amplification round."""
    return (1.0 + alpha) / math.sqrt(1.0 + (2.0 * alpha + alpha ** 2) * eps_prime ** 2) - 1.0


@dataclass(frozen=True)
class ConstantsTable:
    n: int
    d: int
    alpha: float
    eps_base: float
    eps: float
    eps1: float
    T: int
    C: float
    C_step: float
    K_alpha: float
    K_prime_alpha: float
    ratio_threshold: float
    K0: int
    K1: int
    c_cons: float
    log_c_cons: float
    c_adv: float
    T0: int
    C_tilde_over_C: float
    version: int = TABLE_VERSION

    def as_dict(self) -> dict:
        return asdict(self)


DERIVATIONS = {
    "eps_base": "min(1/256, 1/(2d(d+1)), 1/(4(2+alpha)^2))",
    "C_step": "2(1+alpha)",
    "K_alpha": "ln sqrt(1 + 2 alpha + alpha^2/2)",
    "K_prime_alpha": "max(sqrt2, 2 sqrt(1+alpha), sqrt(8(1+alpha)(2alpha+alpha^2)), sqrt(1+2alpha+alpha^2/2))",
    "ratio_threshold": "max(1, sqrt(2 alpha))",
    "C": "2 T max(ln C_step, K_alpha, ln K_prime_alpha)",
    "K0": "ceil(2(1+alpha)/alpha) + 1",
    "K1": "ceil(4(1+alpha)^2 C_step^K0 / alpha^2) + 1",
    "c_cons": "alpha^2 / (4(1+alpha)^2 C_step^(n(K0+K1)))",
    "c_adv": "(1+alpha)/sqrt(1+(2alpha+alpha^2) eps_base^2) - 1",
    "T0": "n(n-1)/2",
    "eps, eps1, T": "calibrated: smallest T with negative mean block drift of P0; eps1 < eps_base, eps << eps1",
    "C_tilde_over_C": "calibrated: smallest multiple of C with P1-escape rate below 0.3 with margin",
}


def build_table(n: int, d: int, alpha: float, eps: float, eps1: float, T: int,
                C_tilde_over_C: float) -> ConstantsTable:
    eb = epsilon_base(d, alpha)
    if not 0 < eps < eps1 < eb:
        raise ValueError("need 0 < eps < eps1 < eps_base")
    return ConstantsTable(
        n=n, d=d, alpha=alpha, eps_base=eb, eps=eps, eps1=eps1, T=T,
        C=block_constant(alpha, T), C_step=c_step(alpha), K_alpha=k_alpha(alpha),
        K_prime_alpha=k_prime_alpha(alpha), ratio_threshold=ratio_threshold(alpha),
        K0=k0_consistency(alpha), K1=k1_consistency(alpha), c_cons=c_cons(n, alpha),
        log_c_cons=log_c_cons(n, alpha), c_adv=c_adv(alpha, eb), T0=n * (n - 1) // 2,
        C_tilde_over_C=C_tilde_over_C)


def _raw() -> dict:
    text = resources.files("polarsim").joinpath("constants.json").read_text()
    return json.loads(text)


def load_table(profile: str = "default") -> ConstantsTable:
    data = _raw()
    if data.get("version") != TABLE_VERSION:
        raise ValueError(f"constants table version {data.get('version')} != {TABLE_VERSION}")
    p = data["profiles"][profile]
    return build_table(p["n"], p["d"], p["alpha"], p["eps"], p["eps1"], p["T"],
                       p["C_tilde_over_C"])


def two_chain_defaults() -> dict:
    return dict(_raw()["two_chain"])
