"""Discrete-event epidemic broadcast under the canyon constraint.

Radio propagation is confined to a node's own street.  Two kinds of events
move the packet:

* hop cycles at ``t = k h``: every node infected strictly before ``t``
  transmits along its street (nearest healthy neighbour on each side, or every
  healthy node within the radio range);
* intersection contacts: when a node passes the coordinate of a busy
  perpendicular street it is in contact with that street's nearest node
  (nearest-neighbour mode) or with all of its nodes within the radio range
  of the intersection.  The packet crosses in whichever direction it can.

Crossings are processed before a hop cycle falling at the same instant and
ties between crossings are broken by node id.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .geometry import Orientation, Street, intensity_at_level
from .mobility import CrossingSchedule, positions_at, unfolded_base
from .sampler import Population, make_rng

log = logging.getLogger(__name__)

SOURCE, HOP, HANDOFF = 0, 1, 2
MECHANISMS = {SOURCE: "source", HOP: "hop", HANDOFF: "handoff"}


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class NearestNeighbor:
    def to_dict(self):
        return {"mode": "nearest-neighbor"}


@dataclass(frozen=True)
class RadioRange:
    radius: float

    def __post_init__(self):
        if not 0.0 < self.radius <= 1.0:
            raise ValueError("radio range must lie in (0, 1]")

    def to_dict(self):
        return {"mode": "radio-range", "radius": self.radius}


ReachMode = Union[NearestNeighbor, RadioRange]


@dataclass(frozen=True)
class FullContamination:
    horizon: float | None = None

    def to_dict(self):
        return {"rule": "full-contamination", "horizon": self.horizon}


@dataclass(frozen=True)
class TargetNode:
    node: int
    horizon: float | None = None

    def to_dict(self):
        return {"rule": "target-node", "node": self.node, "horizon": self.horizon}


@dataclass(frozen=True)
class Horizon:
    t: float

    @property
    def horizon(self):
        return self.t

    def to_dict(self):
        return {"rule": "horizon", "t": self.t}


@dataclass(frozen=True)
class StreetReached:
    """Stop at the first infection of any node on ``street``."""

    street: Street
    horizon: float | None = None

    def to_dict(self):
        return {"rule": "street-reached", "street": list(self.street.key), "horizon": self.horizon}


@dataclass(frozen=True)
class WindowReached:
    """Stop when a node of ``street`` is infected while inside ``[lo, hi]``."""

    street: Street
    lo: float
    hi: float
    horizon: float | None = None

    def to_dict(self):
        return {"rule": "window-reached", "street": list(self.street.key), "lo": self.lo, "hi": self.hi,
                "horizon": self.horizon}


StopRule = Union[FullContamination, TargetNode, Horizon, StreetReached, WindowReached]


@dataclass(frozen=True)
class RandomSource:
    seed: int

    def to_dict(self):
        return {"random": self.seed}


@dataclass(frozen=True)
class SimConfig:
    hop_time: float
    reach: ReachMode = NearestNeighbor()
    stop: StopRule = FullContamination()
    source: Union[int, Sequence[int], RandomSource] = 0
    snapshots: tuple[float, ...] = ()
    record_crossings: bool = False
    track_clusters: bool = True

    def __post_init__(self):
        if not self.hop_time > 0:
            raise ValueError("hop time must be positive")
        object.__setattr__(self, "snapshots", tuple(sorted(float(t) for t in self.snapshots)))

    def to_dict(self) -> dict:
        src = self.source
        if isinstance(src, RandomSource):
            src = src.to_dict()
        elif not isinstance(src, (int, np.integer)):
            src = [int(s) for s in src]
        else:
            src = int(src)
        return {
            "hop_time": self.hop_time,
            "reach": self.reach.to_dict(),
            "stop": self.stop.to_dict(),
            "source": src,
            "snapshots": list(self.snapshots),
        }


@dataclass
class Snapshot:
    t: float
    position: np.ndarray
    infected: np.ndarray
    outbreak_root: np.ndarray


@dataclass
class CrossingRecord:
    t: float
    node: int
    street: tuple
    perpendicular: tuple


@dataclass
class SimResult:
    """Outcome of one broadcast run; arrays are indexed by node id."""

    infection_time: np.ndarray
    infected_by: np.ndarray
    mechanism: np.ndarray
    outbreak_root: np.ndarray
    sources: tuple[int, ...]
    stop_time: float
    complete: bool
    censored: bool
    event_counts: dict
    street_keys: list
    node_street: np.ndarray
    snapshots: list[Snapshot] = field(default_factory=list)
    teleport_timeline: dict = field(default_factory=dict)
    crossings: list[CrossingRecord] = field(default_factory=list)
    pair_delays: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    config: SimConfig | None = None

    @property
    def broadcast_time(self) -> float:
        """Latest infection time (full-contamination time when ``complete``)."""
        finite = self.infection_time[np.isfinite(self.infection_time)]
        return float(finite.max()) if len(finite) else math.nan

    @property
    def infected_count(self) -> int:
        return int(np.isfinite(self.infection_time).sum())

    def infection_times(self) -> dict[int, float]:
        return {i: float(t) for i, t in enumerate(self.infection_time) if np.isfinite(t)}

    def summary(self) -> dict:
        return {
            "n": len(self.infection_time),
            "sources": list(self.sources),
            "infected": self.infected_count,
            "complete": self.complete,
            "censored": self.censored,
            "broadcast_time": self.broadcast_time,
            "stop_time": self.stop_time,
            "event_counts": dict(self.event_counts),
            "pair_delays": {f"{a}->{b}": d for (a, b), d in sorted(self.pair_delays.items())},
            "diagnostics": list(self.diagnostics),
        }


class _StreetTable:
    """Static per-street grouping of a population."""

    def __init__(self, pop: Population):
        keys = pop.street_keys()
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.keys = [tuple(int(x) for x in row) for row in uniq]
        self.node_street = inverse
        self.members = [np.flatnonzero(inverse == s) for s in range(len(uniq))]
        self.orientation = uniq[:, 0]
        self.coordinate = (2 * uniq[:, 2] + 1) * 2.0 ** (-(uniq[:, 1] + 1))
        self.size = np.array([len(m) for m in self.members])

    def index_of(self, street: Street) -> int | None:
        key = (0 if street.orientation is Orientation.HORIZONTAL else 1, street.level, street.index)
        try:
            return self.keys.index(key)
        except ValueError:
            return None

    def street(self, s: int) -> Street:
        o, level, k = self.keys[s]
        return Street(Orientation.HORIZONTAL if o == 0 else Orientation.VERTICAL, level, k)


def _default_horizon(pop: Population, h: float) -> float:
    return 10.0 * (h * len(pop) + 1.0 / float(pop.speed.min()))


class _Engine:
    def __init__(self, pop: Population, config: SimConfig):
        if len(pop) == 0:
            raise SimulationError("empty population")
        self.pop = pop
        self.cfg = config
        self.n = n = len(pop)
        self.h = config.hop_time
        self.radio = config.reach.radius if isinstance(config.reach, RadioRange) else None
        self.streets = st = _StreetTable(pop)
        self.base = unfolded_base(pop.position, pop.direction).astype(float)
        self.speed = pop.speed
        self.itime = np.full(n, np.inf)
        self.by = np.full(n, -1, dtype=np.int64)
        self.mech = np.full(n, -1, dtype=np.int8)
        self.root = np.full(n, -1, dtype=np.int64)
        self.count = np.zeros(len(st.keys), dtype=np.int64)
        self.first = np.full(len(st.keys), -1, dtype=np.int64)
        self.active: set[int] = set()
        self.total = 0
        self.counts = {"hop_transmissions": 0, "handoffs": 0, "crossings": 0, "hop_cycles": 0}
        self.timeline: dict[int, list] = {}
        self._last_cluster: dict[int, tuple] = {}
        self.crossings: list[CrossingRecord] = []
        self.done = False
        self.stop_reason = None

        # crossing schedules per orientation, against busy perpendicular streets
        self.schedules = {}
        self.sched_street = {}
        for o in (0, 1):
            perp = np.flatnonzero(st.orientation == 1 - o)
            coords = st.coordinate[perp]
            if len(perp):
                sched = CrossingSchedule(coords)
                self.schedules[o] = sched
                self.sched_street[o] = perp[sched.coord_index]
        self.heap: list = []
        for i in range(n):
            self._schedule_first(i, 0.0)

        stop = config.stop
        self.horizon = getattr(stop, "horizon", None)
        if self.horizon is None:
            self.horizon = _default_horizon(pop, self.h)
        self.stop = stop
        if isinstance(stop, (StreetReached, WindowReached)):
            self.stop_street = st.index_of(stop.street)
            if self.stop_street is None:
                raise SimulationError(f"stop street {stop.street.key} holds no node")
        if isinstance(stop, TargetNode) and not 0 <= stop.node < n:
            raise SimulationError(f"target node {stop.node} does not exist")
        self.window_hit = None

    # -- scheduling -----------------------------------------------------
    def _schedule_first(self, i: int, t0: float):
        o = int(self.pop.orientation[i])
        sched = self.schedules.get(o)
        if sched is None:
            return
        w, j = sched.first_after(self.base[i], self.speed[i], t0)
        heapq.heappush(self.heap, (sched.time_of(self.base[i], self.speed[i], w, j), i, w, j))

    def positions(self, idx: np.ndarray, t: float) -> np.ndarray:
        return positions_at(self.pop.position[idx], self.pop.direction[idx], self.speed[idx], t)

    # -- infection bookkeeping -------------------------------------------
    def infect(self, b: int, t: float, by: int, mech: int):
        if np.isfinite(self.itime[b]):
            return
        self.itime[b] = t
        self.by[b] = by
        self.mech[b] = mech
        self.root[b] = self.root[by] if mech == HOP else b
        s = self.streets.node_street[b]
        self.count[s] += 1
        self.total += 1
        if mech == HOP:
            self.counts["hop_transmissions"] += 1
        elif mech == HANDOFF:
            self.counts["handoffs"] += 1
        if self.count[s] == 1:
            self.first[s] = b
            if self.streets.size[s] > 1:
                self.active.add(s)
        if self.count[s] == self.streets.size[s]:
            self.active.discard(s)
            if self.cfg.track_clusters and self.streets.size[s] > 1:
                self._record_clusters(s, t, 1, 0)
        self._check_stop(b, t)

    def _check_stop(self, b: int, t: float):
        stop = self.stop
        if isinstance(stop, FullContamination):
            if self.total == self.n:
                self._finish("complete")
        elif isinstance(stop, TargetNode):
            if b == stop.node:
                self._finish("target")
        elif isinstance(stop, StreetReached):
            if self.streets.node_street[b] == self.stop_street:
                self._finish("target")
        elif isinstance(stop, WindowReached):
            if self.streets.node_street[b] == self.stop_street:
                x = float(self.positions(np.array([b]), t)[0])
                if stop.lo <= x <= stop.hi:
                    self.window_hit = (b, t)
                    self._finish("target")
        if self.total == self.n and not self.done:
            self._finish("complete")

    def _finish(self, reason: str):
        self.done = True
        self.stop_reason = reason

    # -- events ------------------------------------------------------------
    def crossing(self, t: float, a: int, w: int, j: int):
        o = int(self.pop.orientation[a])
        sched = self.schedules[o]
        sb = self.sched_street[o][j]
        w2, j2 = sched.advance(w, j)
        heapq.heappush(self.heap, (sched.time_of(self.base[a], self.speed[a], w2, j2), a, w2, j2))
        self.counts["crossings"] += 1
        if self.cfg.record_crossings:
            self.crossings.append(CrossingRecord(t, a, self.streets.keys[self.streets.node_street[a]],
                                                 self.streets.keys[sb]))
        a_infected = self.itime[a] <= t
        if a_infected and self.count[sb] == self.streets.size[sb]:
            return
        if not a_infected and self.count[sb] == 0:
            return
        members = self.streets.members[sb]
        z = self.streets.coordinate[self.streets.node_street[a]]
        dist = np.abs(self.positions(members, t) - z)
        if self.radio is None:
            k = int(np.argmin(dist))
            b = int(members[k])
            if a_infected:
                self.infect(b, t, a, HANDOFF)
            elif self.itime[b] <= t:
                self.infect(a, t, b, HANDOFF)
        else:
            near = dist <= self.radio
            if a_infected:
                for b in members[near]:
                    if self.done:
                        break
                    self.infect(int(b), t, a, HANDOFF)
            else:
                cand = near & (self.itime[members] <= t)
                if cand.any():
                    k = np.flatnonzero(cand)[np.argmin(dist[cand])]
                    self.infect(a, t, int(members[k]), HANDOFF)

    def hop_cycle(self, t: float):
        self.counts["hop_cycles"] += 1
        for s in sorted(self.active):
            if self.done:
                return
            members = self.streets.members[s]
            pos = self.positions(members, t)
            order = np.argsort(pos, kind="stable")
            ids = members[order]
            itime = self.itime[ids]
            tx = itime < t
            healthy = itime > t
            if self.radio is None:
                left = np.zeros(len(ids), dtype=bool)
                right = np.zeros(len(ids), dtype=bool)
                left[1:] = tx[:-1]
                right[:-1] = tx[1:]
                new = np.flatnonzero(healthy & (left | right))
                for k in new:
                    if left[k] and right[k]:
                        a, c = ids[k - 1], ids[k + 1]
                        src = a if (self.itime[a], a) <= (self.itime[c], c) else c
                    else:
                        src = ids[k - 1] if left[k] else ids[k + 1]
                    self.infect(int(ids[k]), t, int(src), HOP)
                    if self.done:
                        return
            else:
                spos = pos[order]
                tx_idx = np.flatnonzero(tx)
                txpos = spos[tx_idx]
                cand = np.flatnonzero(healthy)
                if len(cand) and len(tx_idx):
                    ins = np.searchsorted(txpos, spos[cand])
                    lo = np.clip(ins - 1, 0, len(txpos) - 1)
                    hi = np.clip(ins, 0, len(txpos) - 1)
                    dlo = np.abs(spos[cand] - txpos[lo])
                    dhi = np.abs(spos[cand] - txpos[hi])
                    pick = np.where(dlo <= dhi, lo, hi)
                    dist = np.minimum(dlo, dhi)
                    for k, kk, d in zip(cand, pick, dist):
                        if d <= self.radio:
                            self.infect(int(ids[k]), t, int(ids[tx_idx[kk]]), HOP)
                            if self.done:
                                return
            if self.cfg.track_clusters and s in self.active:
                self._clusters_from_sorted(s, t, ids)

    def _clusters_from_sorted(self, s: int, t: float, ids: np.ndarray):
        inf = self.itime[ids] <= t
        if not inf.any():
            return
        starts = np.flatnonzero(inf & ~np.concatenate([[False], inf[:-1]]))
        ends = np.flatnonzero(inf & ~np.concatenate([inf[1:], [False]]))
        # a disjoint outbreak is a cluster without the street's earliest-infected node
        k = int(np.flatnonzero(ids == self.first[s])[0])
        holder = np.searchsorted(starts, k, side="right") - 1
        disjoint = len(starts) - (1 if holder >= 0 and k <= ends[holder] else 0)
        self._record_clusters(s, t, len(starts), disjoint)

    def _record_clusters(self, s: int, t: float, clusters: int, disjoint: int):
        state = (clusters, disjoint)
        if self._last_cluster.get(s) != state:
            self._last_cluster[s] = state
            self.timeline.setdefault(s, []).append((t, clusters, disjoint))

    def snapshot(self, t: float) -> Snapshot:
        idx = np.arange(self.n)
        return Snapshot(t, self.positions(idx, t), self.itime <= t, np.where(self.itime <= t, self.root, -1))

    # -- main loop ---------------------------------------------------------
    def run(self, sources: Sequence[int]) -> SimResult:
        for s in sources:
            if not 0 <= s < self.n:
                raise SimulationError(f"source {s} does not exist")
        for s in sources:
            if not self.done:
                self.infect(int(s), 0.0, int(s), SOURCE)
        snaps = list(self.cfg.snapshots)
        snapshots = []
        k = 1
        t_now = 0.0
        while not self.done:
            t_cross = self.heap[0][0] if self.heap else math.inf
            if self.active:
                t_cycle = k * self.h
            else:
                # no street can hop: jump the cycle counter past the next crossing
                k = max(k, math.floor(t_cross / self.h) + 1) if math.isfinite(t_cross) else k
                t_cycle = k * self.h if math.isfinite(t_cross) else math.inf
            t_next = min(t_cross, t_cycle)
            while snaps and snaps[0] < t_next and snaps[0] <= self.horizon:
                snapshots.append(self.snapshot(snaps.pop(0)))
            if t_next > self.horizon or not math.isfinite(t_next):
                t_now = self.horizon if math.isfinite(self.horizon) else t_now
                self.stop_reason = "horizon"
                break
            t_now = t_next
            if t_cross <= t_cycle:
                t, a, w, j = heapq.heappop(self.heap)
                self.crossing(t, a, w, j)
            else:
                self.hop_cycle(t_cycle)
                k += 1
        for ts in snaps:
            if ts <= t_now or self.done:
                snapshots.append(self.snapshot(ts))
        complete = self.total == self.n
        censored = self.stop_reason == "horizon" and not (
            isinstance(self.stop, Horizon) or complete)
        diagnostics = []
        if censored:
            diagnostics.append(
                f"stop rule {type(self.stop).__name__} not met before horizon {self.horizon:.6g}s; "
                f"{self.total}/{self.n} nodes infected (result censored)")
        result = SimResult(
            infection_time=self.itime,
            infected_by=self.by,
            mechanism=self.mech,
            outbreak_root=self.root,
            sources=tuple(int(s) for s in sources),
            stop_time=t_now,
            complete=complete,
            censored=censored,
            event_counts=dict(self.counts),
            street_keys=self.streets.keys,
            node_street=self.streets.node_street,
            snapshots=snapshots,
            teleport_timeline={self.streets.keys[s]: v for s, v in sorted(self.timeline.items())},
            crossings=self.crossings,
            diagnostics=diagnostics,
            config=self.cfg,
        )
        return result


def resolve_sources(pop: Population, source) -> tuple[int, ...]:
    if isinstance(source, RandomSource):
        return (int(make_rng(source.seed, 0xB0A5).integers(len(pop))),)
    if isinstance(source, (int, np.integer)):
        return (int(source),)
    return tuple(int(s) for s in source)


def run(nodes, config: SimConfig) -> SimResult:
    """Run one epidemic broadcast over ``nodes`` (a :class:`Population`)."""
    pop = nodes if isinstance(nodes, Population) else Population.from_nodes(nodes)
    if len(pop) == 0:
        raise SimulationError("empty population")
    engine = _Engine(pop, config)
    result = engine.run(resolve_sources(pop, config.source))
    if engine.window_hit is not None:
        result.pair_delays[(result.sources[0], engine.window_hit[0])] = engine.window_hit[1]
    return result


@dataclass
class PairDelay:
    source: int
    target: int
    delay: float
    censored: bool
    window: tuple[float, float]
    hit_node: int | None = None


def measure_pair_delay(nodes, config: SimConfig, x: int, y: int, halfwidth: float | None = None,
                       horizon: float | None = None) -> PairDelay:
    """Delay until the broadcast from ``x`` reaches the neighbourhood of node ``y``.

    The neighbourhood is the window ``[y0 - 1/lambda, y0 + 1/lambda]`` on
    ``y``'s street, where ``y0`` is ``y``'s position at ``t = 0`` and
    ``lambda`` the intensity of ``y``'s level; ``halfwidth`` overrides it.
    The first node infected while inside the window ends the run.
    """
    pop = nodes if isinstance(nodes, Population) else Population.from_nodes(nodes)
    y_street = pop.street_of(y)
    y0 = float(pop.position[y])
    if halfwidth is None:
        if pop.params is None:
            raise ValueError("population carries no params; pass halfwidth explicitly")
        halfwidth = 1.0 / intensity_at_level(pop.params, y_street.level)
    window = (y0 - halfwidth, y0 + halfwidth)
    if horizon is None:
        horizon = getattr(config.stop, "horizon", None)
    stop = WindowReached(y_street, window[0], window[1], horizon)
    cfg = SimConfig(config.hop_time, config.reach, stop, x, (), False, False)
    res = run(pop, cfg)
    hit = [(d, b) for (a, b), d in res.pair_delays.items()]
    if hit:
        d, b = hit[0]
        return PairDelay(x, y, d, False, window, b)
    return PairDelay(x, y, math.inf, True, window, None)
