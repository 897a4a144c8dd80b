"""Billiard kinematics on a street.

A node moving with speed ``v`` is tracked through an unfolded coordinate
``u`` that always increases at rate ``v``; the physical position is the
triangle wave of period 2 in ``u``.  A node at ``x`` heading ``+1`` starts at
``u = x``, heading ``-1`` at ``u = 2 - x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

KMH_PER_UNIT_PER_S = 3600.0


def kmh_to_units(speed_kmh: float, unit_km: float = 1.0) -> float:
    """Convert km/h to map units per second for a map edge of ``unit_km``."""
    return speed_kmh / KMH_PER_UNIT_PER_S / unit_km


@dataclass(frozen=True)
class SpeedProfile:
    """Per-level speed law in map units per second.

    ``kind`` is ``"constant"``, ``"increasing"`` or ``"decreasing"``; the
    two level-dependent kinds carry an explicit level -> speed table.  Levels
    deeper than the table reuse the deepest entry.
    """

    kind: str
    speed: float | None = None
    table: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "constant":
            if self.speed is None or not self.speed > 0:
                raise ValueError("constant profile needs a positive speed")
        elif self.kind in ("increasing", "decreasing"):
            if not self.table or any(not v > 0 for v in self.table.values()):
                raise ValueError("level profile needs positive speeds")
        else:
            raise ValueError(f"unknown speed profile kind {self.kind!r}")

    @classmethod
    def constant(cls, v: float) -> "SpeedProfile":
        return cls("constant", speed=float(v))

    @classmethod
    def increasing(cls, speeds) -> "SpeedProfile":
        return cls("increasing", table={i: float(s) for i, s in enumerate(speeds)})

    @classmethod
    def decreasing(cls, speeds) -> "SpeedProfile":
        return cls("decreasing", table={i: float(s) for i, s in enumerate(speeds)})

    def speed_at(self, level: int) -> float:
        if self.kind == "constant":
            return self.speed
        deepest = max(self.table)
        return self.table[min(level, deepest)]

    def speeds_for(self, levels: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(len(levels), self.speed)
        deepest = max(self.table)
        lut = np.array([self.table[min(i, deepest)] for i in range(deepest + 1)])
        return lut[np.minimum(levels, deepest)]

    def min_speed(self, max_level: int | None = None) -> float:
        if self.kind == "constant":
            return self.speed
        levels = range(max(self.table) + 1 if max_level is None else max_level + 1)
        return min(self.speed_at(l) for l in levels)

    def max_speed(self, max_level: int | None = None) -> float:
        if self.kind == "constant":
            return self.speed
        levels = range(max(self.table) + 1 if max_level is None else max_level + 1)
        return max(self.speed_at(l) for l in levels)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "speed": self.speed}
        return {"kind": self.kind, "table": {str(k): v for k, v in sorted(self.table.items())}}


def unfolded_base(position, direction):
    """Unfolded coordinate at t = 0."""
    return np.where(np.asarray(direction) > 0, position, 2.0 - np.asarray(position))


def fold(u):
    """Triangle wave: returns (position, direction) for unfolded ``u``."""
    m = np.mod(u, 2.0)
    pos = np.where(m <= 1.0, m, 2.0 - m)
    direction = np.where(m < 1.0, 1, -1)
    return pos, direction


def position_at(node, t: float) -> tuple[float, int]:
    """Exact (position, direction) of ``node`` at time ``t`` under billiard reflection."""
    if t < 0:
        raise ValueError("t must be non-negative")
    u = float(unfolded_base(node.position, node.direction)) + node.speed * t
    pos, d = fold(u)
    return float(pos), int(d)


def positions_at(pos0: np.ndarray, dir0: np.ndarray, speed: np.ndarray, t: float) -> np.ndarray:
    """Vectorized positions of many nodes at time ``t``."""
    m = np.mod(unfolded_base(pos0, dir0) + speed * t, 2.0)
    return np.where(m <= 1.0, m, 2.0 - m)


def next_crossing_after(node, coordinate: float, t0: float) -> float:
    """Smallest ``t > t0`` at which ``node`` sits at ``coordinate`` (closed form).

    In unfolded space the coordinate is hit at ``u = c (mod 2)`` and
    ``u = 2 - c (mod 2)``.
    """
    if not 0.0 < coordinate < 1.0:
        raise ValueError("coordinate must lie in (0, 1)")
    u0 = float(unfolded_base(node.position, node.direction)) + node.speed * t0
    m0 = u0 % 2.0
    gaps = []
    for target in (coordinate, 2.0 - coordinate):
        g = (target - m0) % 2.0
        if g <= 1e-15:
            g += 2.0
        gaps.append(g)
    return t0 + min(gaps) / node.speed


class CrossingSchedule:
    """Iterates the crossings of a node with a fixed sorted set of coordinates.

    Crossings are enumerated in unfolded space as ``2 w + U[j]`` where ``U``
    holds the coordinates and their mirror images ``2 - c``.  Advancing is
    integer bookkeeping, so successive times are strictly increasing without
    any floating-point re-solving.
    """

    def __init__(self, coordinates: np.ndarray):
        coords = np.asarray(coordinates, dtype=float)
        u = np.concatenate([coords, 2.0 - coords])
        order = np.argsort(u, kind="stable")
        self.points = u[order]
        self.coord_index = np.concatenate([np.arange(len(coords)), np.arange(len(coords))])[order]
        self.size = len(self.points)

    def first_after(self, base: float, speed: float, t0: float) -> tuple[int, int]:
        """(wrap, slot) of the first crossing strictly after ``t0``."""
        u0 = base + speed * t0
        w = math.floor(u0 / 2.0)
        m0 = u0 - 2.0 * w
        j = int(np.searchsorted(self.points, m0, side="right"))
        if j == self.size:
            return w + 1, 0
        return w, j

    def advance(self, w: int, j: int) -> tuple[int, int]:
        j += 1
        if j == self.size:
            return w + 1, 0
        return w, j

    def time_of(self, base: float, speed: float, w: int, j: int) -> float:
        return (2.0 * w + self.points[j] - base) / speed
