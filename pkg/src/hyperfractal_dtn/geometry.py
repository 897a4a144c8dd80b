"""Hyperfractal street support and parameter algebra.

The support is the union of levels ``X_l``: at level ``l`` there are ``2**l``
horizontal and ``2**l`` vertical streets sitting at the odd multiples of
``2**-(l+1)``.  Every street spans the whole unit interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

DEFAULT_L_MAX = 5

_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a formula."""


class Orientation(str, Enum):
    HORIZONTAL = "H"
    VERTICAL = "V"

    @property
    def perpendicular(self) -> "Orientation":
        return Orientation.VERTICAL if self is Orientation.HORIZONTAL else Orientation.HORIZONTAL


@dataclass(frozen=True)
class HyperfractalParams:
    n: int
    p: float
    q: float
    d_F: float
    delta: float
    L_max: int = DEFAULT_L_MAX

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"n must be positive, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")
        if abs(self.q - (1.0 - self.p)) > _TOL:
            raise DomainError("q must equal 1 - p")
        if self.L_max < 0:
            raise DomainError(f"L_max must be non-negative, got {self.L_max}")
        if self.q > 0:
            if abs(0.5 ** self.d_F - self.q / 4) > _TOL:
                raise DomainError("d_F inconsistent with q: (1/2)^d_F must equal q/4")
            if abs(self.delta - 1.0 / (self.d_F - 1.0)) > _TOL:
                raise DomainError("delta must equal 1/(d_F - 1)")

    @property
    def level_probabilities(self) -> np.ndarray:
        """Probability that a node sits on level ``l``, truncated at ``L_max``."""
        levels = np.arange(self.L_max + 1)
        if self.p == 0.0:
            return np.full(self.L_max + 1, 1.0 / (self.L_max + 1))
        w = self.p * self.q ** levels
        return w / w.sum()

    def with_n(self, n: int) -> "HyperfractalParams":
        return HyperfractalParams(n, self.p, self.q, self.d_F, self.delta, self.L_max)


def params_from_df(d_F: float, n: int, L_max: int = DEFAULT_L_MAX) -> HyperfractalParams:
    """Build parameters from the fractal dimension (``q = 4 * 2**-d_F``)."""
    if not d_F >= 2.0:
        raise DomainError(f"d_F must be >= 2 (q would exceed 1), got {d_F}")
    if math.isinf(d_F):
        return HyperfractalParams(n, 1.0, 0.0, math.inf, 0.0, L_max)
    q = 4.0 * 2.0 ** (-d_F)
    return HyperfractalParams(n=n, p=1.0 - q, q=q, d_F=d_F, delta=1.0 / (d_F - 1.0), L_max=L_max)


def params_from_p(p: float, n: int, L_max: int = DEFAULT_L_MAX) -> HyperfractalParams:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    q = 1.0 - p
    if q == 0.0:
        return HyperfractalParams(n, 1.0, 0.0, math.inf, 0.0, L_max)
    d_F = df_from_q(q)
    return HyperfractalParams(n=n, p=p, q=q, d_F=d_F, delta=1.0 / (d_F - 1.0), L_max=L_max)


def df_from_q(q: float) -> float:
    """Forward map ``d_F = log(4/q) / log 2``."""
    if not 0.0 < q <= 1.0:
        raise DomainError(f"q must lie in (0, 1], got {q}")
    return math.log(4.0 / q) / math.log(2.0)


def df_from_params(params: HyperfractalParams) -> float:
    return df_from_q(params.q)


def intensity_at_level(params: HyperfractalParams, level: int) -> float:
    """Nodes per unit length on one street of ``level``: ``n (p/2) (q/2)**l``."""
    if level < 0:
        raise DomainError("level must be non-negative")
    return params.n * street_probability(params, level)


def street_probability(params: HyperfractalParams, level: int) -> float:
    """Probability that a single node lands on a given street of ``level``."""
    return (params.p / 2.0) * (params.q / 2.0) ** level


def critical_level_H(params: HyperfractalParams, epsilon: float = 0.1, radio: bool = False) -> int:
    """Deepest level that is still busy with high probability.

    ``ceil(log(n**e * p/2) / log(2/q))`` with ``e = 1 - epsilon`` (or
    ``1/2 - epsilon`` under a ``1/sqrt(n)`` radio range).
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0, 1)")
    if params.q <= 0.0:
        raise DomainError("critical level undefined for q = 0")
    exponent = (0.5 - epsilon) if radio else (1.0 - epsilon)
    arg = params.n ** exponent * params.p / 2.0
    if arg < 1.0:
        raise DomainError(f"log argument {arg:.4g} < 1: critical level would be negative")
    return math.ceil(math.log(arg) / math.log(2.0 / params.q) - 1e-12)


@dataclass(frozen=True, order=True)
class Street:
    orientation: Orientation
    level: int
    index: int

    def __post_init__(self):
        if self.level < 0 or not 0 <= self.index < 2 ** self.level:
            raise DomainError(f"invalid street level={self.level} index={self.index}")

    @property
    def coordinate(self) -> float:
        """Fixed coordinate of the street, ``(2k+1) 2**-(l+1)``."""
        return street_coordinate(self.level, self.index)

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.orientation.value, self.level, self.index)


def street_coordinate(level, index):
    return (2 * index + 1) * 2.0 ** (-(level + 1))


def level_coordinates(level: int) -> np.ndarray:
    return (2 * np.arange(2 ** level) + 1) * 2.0 ** (-(level + 1))


@dataclass(frozen=True)
class StreetGrid:
    """All streets up to ``params.L_max``; streets are materialized lazily."""

    params: HyperfractalParams

    @property
    def L_max(self) -> int:
        return self.params.L_max

    def streets(self, orientation: Orientation | None = None) -> Iterator[Street]:
        orients = [orientation] if orientation else list(Orientation)
        for o in orients:
            for level in range(self.L_max + 1):
                for k in range(2 ** level):
                    yield Street(o, level, k)

    def __len__(self) -> int:
        return 2 * (2 ** (self.L_max + 1) - 1)

    def streets_at_level(self, level: int) -> list[Street]:
        return [Street(o, level, k) for o in Orientation for k in range(2 ** level)]

    def cumulated_length(self, H: int) -> int:
        """Cumulated street length per orientation up to level ``H``."""
        return 2 ** (H + 1) - 1


def nearest_perp_street_distance(position: float, target_level: int) -> float:
    """Distance from a running coordinate to the nearest street of exactly ``target_level``.

    Level-``H`` streets sit at odd multiples of ``s = 2**-(H+1)`` so the
    answer never exceeds ``s``.
    """
    if target_level < 0:
        raise DomainError("level must be non-negative")
    s = 2.0 ** (-(target_level + 1))
    # distance to nearest odd multiple of s
    k = math.floor(position / (2 * s))
    best = math.inf
    for j in (k - 1, k, k + 1):
        if 0 <= j < 2 ** target_level:
            best = min(best, abs(position - (2 * j + 1) * s))
    return best
