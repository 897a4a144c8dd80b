"""Hyperfractal node populations and busy-street censuses."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .geometry import (
    HyperfractalParams,
    Orientation,
    Street,
    street_coordinate,
    street_probability,
)
from .mobility import SpeedProfile

_ORIENT_CODE = {Orientation.HORIZONTAL: 0, Orientation.VERTICAL: 1}
_CODE_ORIENT = {0: Orientation.HORIZONTAL, 1: Orientation.VERTICAL}


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Seeded generator for (master seed, replication, ...) streams."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


@dataclass(frozen=True)
class MobileNode:
    id: int
    street: Street
    position: float
    direction: int
    speed: float
    infected_at: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.position <= 1.0:
            raise ValueError("position must lie in [0, 1]")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        if self.infected_at is not None and self.infected_at < 0:
            raise ValueError("infection time must be non-negative")


class Population(Sequence[MobileNode]):
    """Immutable column store of mobile nodes; indexes as ``MobileNode``."""

    def __init__(self, orientation, level, index, position, direction, speed, params=None):
        self.orientation = np.asarray(orientation, dtype=np.int8)
        self.level = np.asarray(level, dtype=np.int64)
        self.index = np.asarray(index, dtype=np.int64)
        self.position = np.asarray(position, dtype=float)
        self.direction = np.asarray(direction, dtype=np.int8)
        self.speed = np.asarray(speed, dtype=float)
        self.params = params
        n = len(self.position)
        for arr in (self.orientation, self.level, self.index, self.direction, self.speed):
            if len(arr) != n:
                raise ValueError("population columns must have equal length")
        if n and (self.position.min() < 0 or self.position.max() > 1):
            raise ValueError("positions must lie in [0, 1]")
        if n and np.any(self.speed <= 0):
            raise ValueError("speeds must be positive")
        if n and np.any(self.index >= 2 ** self.level):
            raise ValueError("street index out of range for its level")
        for arr in (self.orientation, self.level, self.index, self.position, self.direction, self.speed):
            arr.setflags(write=False)

    @classmethod
    def from_nodes(cls, nodes: Iterable[MobileNode], params=None) -> "Population":
        nodes = sorted(nodes, key=lambda nd: nd.id)
        if [nd.id for nd in nodes] != list(range(len(nodes))):
            raise ValueError("node ids must be 0..n-1")
        return cls(
            [_ORIENT_CODE[nd.street.orientation] for nd in nodes],
            [nd.street.level for nd in nodes],
            [nd.street.index for nd in nodes],
            [nd.position for nd in nodes],
            [nd.direction for nd in nodes],
            [nd.speed for nd in nodes],
            params=params,
        )

    def __len__(self) -> int:
        return len(self.position)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return MobileNode(
            id=i,
            street=self.street_of(i),
            position=float(self.position[i]),
            direction=int(self.direction[i]),
            speed=float(self.speed[i]),
        )

    def __iter__(self) -> Iterator[MobileNode]:
        return (self[i] for i in range(len(self)))

    def street_of(self, i: int) -> Street:
        return Street(_CODE_ORIENT[int(self.orientation[i])], int(self.level[i]), int(self.index[i]))

    @property
    def coordinate(self) -> np.ndarray:
        return street_coordinate(self.level, self.index)

    def street_keys(self) -> np.ndarray:
        """Structured (orientation, level, index) rows, one per node."""
        return np.stack([self.orientation.astype(np.int64), self.level, self.index], axis=1)

    def to_jsonl(self) -> str:
        lines = []
        for i in range(len(self)):
            rec = {
                "id": i,
                "orientation": _CODE_ORIENT[int(self.orientation[i])].value,
                "level": int(self.level[i]),
                "index": int(self.index[i]),
                "position": float(self.position[i]),
                "direction": int(self.direction[i]),
                "speed": float(self.speed[i]),
            }
            lines.append(json.dumps(rec))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "Population":
        recs = [json.loads(line) for line in text.splitlines() if line.strip()]
        # non-node lines (such as a leading config header) are skipped
        recs = [r for r in recs if "id" in r]
        recs.sort(key=lambda r: r["id"])
        if [r["id"] for r in recs] != list(range(len(recs))):
            raise ValueError("node ids must be 0..n-1")
        return cls(
            [_ORIENT_CODE[Orientation(r["orientation"])] for r in recs],
            [r["level"] for r in recs],
            [r["index"] for r in recs],
            [r["position"] for r in recs],
            [r["direction"] for r in recs],
            [r["speed"] for r in recs],
        )


def sample_population(
    params: HyperfractalParams,
    seed: int,
    speed_profile: SpeedProfile,
    *stream: int,
) -> Population:
    """Draw exactly ``params.n`` nodes from the (level-truncated) hyperfractal law.

    Levels follow ``p q**l`` renormalized on ``0..L_max``; orientation, street
    index, position and direction are uniform.  Extra ``stream`` integers
    select an independent replication stream of the same master seed.
    """
    rng = make_rng(seed, *stream)
    n = params.n
    level = rng.choice(params.L_max + 1, size=n, p=params.level_probabilities)
    orientation = rng.integers(0, 2, size=n)
    index = np.floor(rng.random(n) * 2.0 ** level).astype(np.int64)
    index = np.minimum(index, 2 ** level - 1)
    position = rng.random(n)
    direction = np.where(rng.random(n) < 0.5, 1, -1)
    speed = speed_profile.speeds_for(level)
    return Population(orientation, level, index, position, direction, speed, params=params)


@dataclass
class BusyStreetStats:
    total_busy: int
    busy_ns: int
    busy_ew: int
    per_level_counts: dict[int, tuple[int, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total_busy": self.total_busy,
            "busy_ns": self.busy_ns,
            "busy_ew": self.busy_ew,
            "per_level": {str(k): {"busy": b, "total": t} for k, (b, t) in sorted(self.per_level_counts.items())},
        }


def busy_street_census(nodes) -> BusyStreetStats:
    """Count streets holding at least one node, overall, per orientation and per level."""
    pop = nodes if isinstance(nodes, Population) else Population.from_nodes(nodes)
    if len(pop) == 0:
        return BusyStreetStats(0, 0, 0, {})
    keys = np.unique(pop.street_keys(), axis=0)
    busy_ns = int(np.sum(keys[:, 0] == _ORIENT_CODE[Orientation.VERTICAL]))
    busy_ew = len(keys) - busy_ns
    max_level = int(pop.level.max())
    if pop.params is not None:
        max_level = max(max_level, pop.params.L_max)
    per_level = {}
    for level in range(max_level + 1):
        busy = int(np.sum(keys[:, 1] == level))
        per_level[level] = (busy, 2 ** (level + 1))
    return BusyStreetStats(len(keys), busy_ns, busy_ew, per_level)


def expected_busy_streets_exact(params: HyperfractalParams, truncate: bool = False) -> float:
    """Exact finite-``n`` mean number of busy streets.

    ``sum_l 2**(l+1) (1 - (1 - p_l)**n)`` with ``p_l = (p/2)(q/2)**l``.  With
    ``truncate`` the level law is renormalized on ``0..L_max`` to match
    :func:`sample_population`; otherwise the sum runs until terms drop below
    1e-12.
    """
    n = params.n
    if truncate:
        probs = params.level_probabilities
        total = 0.0
        for level, w in enumerate(probs):
            p_l = w / 2 ** (level + 1)
            total += 2 ** (level + 1) * -np.expm1(n * np.log1p(-p_l))
        return float(total)
    total = 0.0
    level = 0
    while True:
        p_l = street_probability(params, level)
        if p_l <= 0.0:
            break
        term = 2 ** (level + 1) * -np.expm1(n * np.log1p(-p_l))
        total += term
        if term < 1e-12 and level > 0:
            break
        level += 1
        if level > 2000:
            break
    return float(total)
