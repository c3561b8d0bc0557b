"""Opinions on the unit sphere, the biased-assimilation update and the
closed-form correlation recurrence.

Agents are indexed from 0. An interaction ``(i, j)`` means agent ``j``
influences agent ``i``; only opinion ``i`` moves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels

UNIT_TOL = 1e-12
FILE_UNIT_TOL = 1e-9


class DegenerateUpdate(ArithmeticError):
    """The update vector w vanished, so u_i' = w/|w| is undefined."""


class BadFile(ValueError):
    """A configuration/schedule/trace file could not be parsed or validated."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Configuration:
    """n unit opinions in dimension d, held as a read-only (n, d) array."""

    opinions: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.opinions, dtype=float)
        if U.ndim != 2:
            raise ValueError("opinions must be an (n, d) array")
        n, d = U.shape
        if n < 2 or d < 2:
            raise ValueError(f"need n >= 2 and d >= 2, got n={n}, d={d}")
        if not np.all(np.isfinite(U)):
            raise ValueError("opinions must be finite")
        err = np.max(np.abs(np.linalg.norm(U, axis=1) - 1.0))
        if err > UNIT_TOL:
            raise ValueError(f"opinions must have unit norm (max error {err:.3g})")
        object.__setattr__(self, "opinions", _frozen(U))

    @classmethod
    def from_vectors(cls, vectors, renormalize: bool = True) -> "Configuration":
        U = np.array(vectors, dtype=float)
        if renormalize:
            norms = np.linalg.norm(U, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise ValueError("zero vector cannot be normalized")
            U = U / norms
        return cls(U)

    @property
    def n(self) -> int:
        return self.opinions.shape[0]

    @property
    def dim(self) -> int:
        return self.opinions.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.opinions, other.opinions)

    def __hash__(self):
        return hash(self.opinions.tobytes())


@dataclass(frozen=True)
class CorrelationMatrix:
    """Gram matrix of a configuration.

    ``gaps[i, j]`` holds 1 - |A_ij|. When built from a configuration it is
    computed as min(|u_i - u_j|^2, |u_i + u_j|^2) / 2, which keeps full
    relative precision for nearly (anti)parallel opinions where 1 - |A_ij|
    itself would be rounding noise.
    """

    entries: np.ndarray
    gaps: np.ndarray

    @classmethod
    def from_entries(cls, A) -> "CorrelationMatrix":
        A = np.clip(np.array(A, dtype=float), -1.0, 1.0)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("correlation matrix must be square")
        return cls(_frozen(A), _frozen(1.0 - np.abs(A)))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, idx):
        return self.entries[idx]


def as_correlation(A) -> CorrelationMatrix:
    if isinstance(A, CorrelationMatrix):
        return A
    if isinstance(A, Configuration):
        return correlation(A)
    return CorrelationMatrix.from_entries(A)


def correlation(config: Configuration) -> CorrelationMatrix:
    U = config.opinions
    A = np.clip(U @ U.T, -1.0, 1.0)
    diff = U[:, None, :] - U[None, :, :]
    summ = U[:, None, :] + U[None, :, :]
    gaps = 0.5 * np.minimum(np.einsum("ijk,ijk->ij", diff, diff),
                            np.einsum("ijk,ijk->ij", summ, summ))
    return CorrelationMatrix(_frozen(A), _frozen(gaps))


@dataclass(frozen=True)
class Interaction:
    influenced: int
    influencer: int

    def as_pair(self) -> tuple[int, int]:
        return (self.influenced, self.influencer)


@dataclass(frozen=True)
class UpdateRule:
    """The coupling f in w = u_i + f(A_ij) u_j.

    ``linear`` is f(x) = alpha x. ``piecewise`` uses beta on negative
    correlations. ``table`` linearly interpolates caller-supplied samples of
    f on [-1, 1]; building an odd extension is the caller's job.
    """

    kind: str = "linear"
    alpha: float = 1.0
    beta: float | None = None
    xs: tuple = field(default=())
    ys: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("linear", "piecewise", "table"):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.kind == "piecewise" and not (self.beta is not None and self.beta > 0):
            raise ValueError("piecewise rule needs beta > 0")
        if self.kind == "table":
            xs = np.asarray(self.xs, dtype=float)
            if xs.size < 2 or xs.size != len(self.ys) or np.any(np.diff(xs) <= 0):
                raise ValueError("table rule needs increasing xs matching ys")
            if xs[0] > -1.0 or xs[-1] < 1.0:
                raise ValueError("table must cover [-1, 1]")

    @classmethod
    def linear(cls, alpha: float) -> "UpdateRule":
        return cls("linear", float(alpha))

    @classmethod
    def piecewise(cls, alpha: float, beta: float) -> "UpdateRule":
        return cls("piecewise", float(alpha), float(beta))

    @classmethod
    def tabulate(cls, f: Callable[[float], float], points: int = 401,
                 alpha: float = 1.0) -> "UpdateRule":
        xs = np.linspace(-1.0, 1.0, points)
        ys = np.array([f(x) for x in xs], dtype=float)
        return cls("table", float(alpha), None, tuple(xs), tuple(ys))

    @classmethod
    def parse(cls, text: str, alpha: float) -> "UpdateRule":
        """Parse the CLI form ``linear`` or ``piecewise:BETA``."""
        if text == "linear":
            return cls.linear(alpha)
        if text.startswith("piecewise:"):
            return cls.piecewise(alpha, float(text.split(":", 1)[1]))
        raise ValueError(f"unknown rule {text!r}")

    def f(self, x: float) -> float:
        if self.kind == "linear":
            return self.alpha * x
        if self.kind == "piecewise":
            return self.alpha * x if x >= 0 else self.beta * x
        return float(np.interp(x, self.xs, self.ys))

    def kernel_args(self):
        code = {"linear": _kernels.LINEAR, "piecewise": _kernels.PIECEWISE,
                "table": _kernels.TABLE}[self.kind]
        beta = self.beta if self.beta is not None else self.alpha
        xs = np.asarray(self.xs if self.xs else (0.0,), dtype=float)
        ys = np.asarray(self.ys if self.ys else (0.0,), dtype=float)
        return code, float(self.alpha), float(beta), xs, ys

    def describe(self) -> str:
        if self.kind == "piecewise":
            return f"piecewise:{self.beta!r}"
        return self.kind


def apply_interaction(config: Configuration, x: Interaction | Sequence[int],
                      rule: UpdateRule) -> Configuration:
    i, j = x.as_pair() if isinstance(x, Interaction) else (int(x[0]), int(x[1]))
    n = config.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"interaction {(i, j)} out of range for n={n}")
    U = np.array(config.opinions)
    if not _kernels.update_row(U, i, j, *rule.kernel_args()):
        raise DegenerateUpdate(f"|w| < {_kernels.DEGENERATE_NORM} for interaction {(i, j)}")
    return Configuration(U)


def predicted_row(A, i: int, l: int, alpha: float) -> np.ndarray:
    """Row i of the correlation matrix after agent ``l`` influences ``i``.

    Needs the full matrix since A'_ij depends on A_jl. Linear rule only.
    """
    A = as_correlation(A).entries
    a_il = A[i, l]
    denom = math.sqrt(1.0 + (2.0 * alpha + alpha * alpha) * a_il * a_il)
    row = (A[i] + alpha * a_il * A[:, l]) / denom
    if i != l:
        row[l] = (1.0 + alpha) * a_il / denom
    row[i] = 1.0
    return np.clip(row, -1.0, 1.0)


def self_reinforced(x: float, alpha: float) -> float:
    """|A_il| after one influence of l on i: (1+a)x / sqrt(1+(2a+a^2)x^2)."""
    return (1.0 + alpha) * x / math.sqrt(1.0 + (2.0 * alpha + alpha * alpha) * x * x)


def is_polarized(config: Configuration, tol: float) -> bool:
    if not tol > 0:
        raise ValueError("tol must be positive")
    return polarization_distance(config) <= tol


def polarization_distance(config: Configuration) -> float:
    """max over pairs of min(|u_i - u_j|, |u_i + u_j|)."""
    g = correlation(config).gaps
    return float(math.sqrt(2.0 * g.max()))


def flip_agent(config: Configuration, i: int) -> Configuration:
    U = np.array(config.opinions)
    U[i] = -U[i]
    return Configuration(U)


# -- persistence -------------------------------------------------------------

def config_to_dict(config: Configuration, alpha: float) -> dict:
    return {"d": config.dim, "alpha": float(alpha),
            "opinions": config.opinions.tolist()}


def config_from_dict(data: dict, renormalize: bool = False) -> tuple[Configuration, float]:
    try:
        d = int(data["d"])
        alpha = float(data["alpha"])
        U = np.array(data["opinions"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadFile(f"malformed configuration: {exc}") from exc
    if U.ndim != 2 or U.shape[1] != d:
        raise BadFile(f"opinions must be a list of length-{d} vectors")
    if U.shape[0] < 2 or d < 2:
        raise BadFile("need at least 2 opinions of dimension >= 2")
    norms = np.linalg.norm(U, axis=1)
    if renormalize:
        if np.any(norms == 0) or not np.all(np.isfinite(U)):
            raise BadFile("cannot renormalize zero or non-finite opinions")
        U = U / norms[:, None]
    else:
        err = np.max(np.abs(norms - 1.0))
        if not err <= FILE_UNIT_TOL:
            raise BadFile(f"opinion norms deviate from 1 by {err:.3g}; use --renormalize")
        if err > UNIT_TOL:
            U = U / norms[:, None]
    return Configuration(U), alpha


def save_config(path, config: Configuration, alpha: float) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config, alpha)) + "\n")


def load_config(path, renormalize: bool = False) -> tuple[Configuration, float]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadFile(f"cannot read configuration {path}: {exc}") from exc
    return config_from_dict(data, renormalize=renormalize)
