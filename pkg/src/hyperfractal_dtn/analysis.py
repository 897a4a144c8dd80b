"""Post-run analytics: teleportation clusters, turn times and the inflexion point."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fitting import IntersectionLog
from .geometry import Orientation, Street
from .sampler import Population, make_rng
from .simulation import SimConfig, SimResult, StreetReached, run

_ORIENT = {0: Orientation.HORIZONTAL, 1: Orientation.VERTICAL}


def count_clusters(positions, infected) -> int:
    """Maximal runs of infected nodes, ordered by position, with no healthy node between."""
    positions = np.asarray(positions, dtype=float)
    infected = np.asarray(infected, dtype=bool)
    if not infected.any():
        return 0
    inf = infected[np.argsort(positions, kind="stable")]
    return int(np.sum(inf & ~np.concatenate([[False], inf[:-1]])))


@dataclass
class TeleportReport:
    street: Street
    outbreak_count_max: int
    first_disjoint_outbreak_time: float | None
    inflexion_estimate: float | None = None

    def to_dict(self) -> dict:
        return {
            "street": {"orientation": self.street.orientation.value, "level": self.street.level,
                       "index": self.street.index},
            "outbreak_count_max": self.outbreak_count_max,
            "first_disjoint_outbreak_time": self.first_disjoint_outbreak_time,
            "inflexion_estimate": self.inflexion_estimate,
        }


def teleport_analysis(result: SimResult, inflexion: float | None = None) -> list[TeleportReport]:
    """Per-street cluster statistics of one run.

    Two sources are merged: the cluster timeline kept by the engine at every
    hop cycle, and the recorded snapshots.  In both a disjoint outbreak is a
    cluster that does not contain the street's earliest-infected node.
    ``inflexion`` (from :func:`estimate_inflexion`) is copied onto every
    report since it is a property of a sweep, not of one run.
    """
    keys = result.street_keys
    stats: dict[int, list] = {}
    index_of = {k: s for s, k in enumerate(keys)}
    for key, rows in result.teleport_timeline.items():
        s = index_of[key]
        best = max(c for _, c, _ in rows)
        first = next((t for t, _, d in rows if d > 0), None)
        stats[s] = [best, first]
    itime = result.infection_time
    for snap in result.snapshots:
        for s in range(len(keys)):
            members = np.flatnonzero(result.node_street == s)
            infected = snap.infected[members]
            if not infected.any():
                continue
            pos = snap.position[members]
            order = np.argsort(pos, kind="stable")
            inf = infected[order]
            starts = np.flatnonzero(inf & ~np.concatenate([[False], inf[:-1]]))
            ends = np.flatnonzero(inf & ~np.concatenate([inf[1:], [False]]))
            earliest = members[np.lexsort((members, itime[members]))[0]]
            k = int(np.flatnonzero(members[order] == earliest)[0])
            holder = np.searchsorted(starts, k, side="right") - 1
            disjoint = len(starts) - (1 if holder >= 0 and k <= ends[holder] else 0)
            cur = stats.setdefault(s, [0, None])
            cur[0] = max(cur[0], len(starts))
            if disjoint and (cur[1] is None or snap.t < cur[1]):
                cur[1] = snap.t
    for s in range(len(keys)):
        if np.isfinite(itime[result.node_street == s]).any():
            stats.setdefault(s, [1, None])
            stats[s][0] = max(stats[s][0], 1)
    reports = []
    for s in sorted(stats):
        o, level, k = keys[s]
        best, first = stats[s]
        reports.append(TeleportReport(Street(_ORIENT[o], level, k), int(best), first, inflexion))
    return reports


@dataclass
class InflexionEstimate:
    n_star: float
    A: float
    ci: tuple[float, float]
    split: int

    def to_dict(self) -> dict:
        return {"n_star": self.n_star, "A": self.A, "A_ci": list(self.ci), "split": self.split}


def _fit_regimes(logn: np.ndarray, logt: np.ndarray, delta: float):
    """Best split into a linear (slope 1) and a power (slope 1 - delta) regime."""
    best = None
    for k in range(1, len(logn)):
        c = float(np.mean(logt[:k] - logn[:k]))
        a = float(np.mean(logt[k:] - (1.0 - delta) * logn[k:]))
        sse = float(np.sum((logt[:k] - logn[:k] - c) ** 2) + np.sum((logt[k:] - (1.0 - delta) * logn[k:] - a) ** 2))
        if best is None or sse < best[0]:
            best = (sse, k, c, a)
    return best


def estimate_inflexion(ns: Sequence[int], samples: Sequence[Sequence[float]], h: float, delta: float,
                       bootstrap: int = 500, seed: int = 0, level: float = 0.95) -> InflexionEstimate:
    """Locate where the hop-only regime ``T ~ c n`` meets ``T ~ A' n**(1 - delta)``.

    ``samples[i]`` holds broadcast times measured at ``ns[i]``.  The crossing
    ``n*`` solves ``c n = A' n**(1-delta)``; the constant of ``n h = A n**(1-delta)``
    is then ``A = h n***delta``.  The interval comes from a bootstrap over
    replications at each ``n``.
    """
    if len(ns) < 2:
        raise ValueError("need at least two values of n")
    order = np.argsort(ns)
    ns = np.asarray(ns, dtype=float)[order]
    samples = [np.asarray(samples[i], dtype=float) for i in order]
    logn = np.log(ns)

    def solve(means):
        _, k, c, a = _fit_regimes(logn, np.log(means), delta)
        n_star = math.exp((a - c) / delta)
        return n_star, h * n_star ** delta, k

    n_star, A, k = solve(np.array([s.mean() for s in samples]))
    rng = make_rng(seed, 0x1F1E)
    boot = []
    for _ in range(bootstrap):
        means = np.array([rng.choice(s, size=len(s)).mean() for s in samples])
        boot.append(solve(means)[1])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(boot, [alpha, 1.0 - alpha]) if boot else (A, A)
    return InflexionEstimate(n_star, A, (float(lo), float(hi)), int(k))


# -- turn time at one intersection ------------------------------------------

def cross_population(n_i: int, n_j: int, speed: float, rng, streets: tuple[Street, Street] | None = None
                     ) -> Population:
    """Nodes ``0..n_i-1`` on street i, the rest on the perpendicular street j."""
    if streets is None:
        streets = (Street(Orientation.HORIZONTAL, 0, 0), Street(Orientation.VERTICAL, 0, 0))
    si, sj = streets
    if si.orientation == sj.orientation:
        raise ValueError("the two streets must be perpendicular")
    n = n_i + n_j
    orient = [0 if si.orientation is Orientation.HORIZONTAL else 1] * n_i + \
             [0 if sj.orientation is Orientation.HORIZONTAL else 1] * n_j
    level = [si.level] * n_i + [sj.level] * n_j
    index = [si.index] * n_i + [sj.index] * n_j
    position = rng.random(n)
    direction = np.where(rng.random(n) < 0.5, 1, -1)
    return Population(orient, level, index, position, direction, np.full(n, float(speed)))


@dataclass
class TurnTimeEstimate:
    mean: float
    stderr: float
    replications: int
    censored: int

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)


def empirical_turn_time(n_i: int, n_j: int, speed: float, replications: int = 1000, seed: int = 0,
                        streets: tuple[Street, Street] | None = None, hop_time: float = 0.06) -> TurnTimeEstimate:
    """Monte-Carlo mean time for a packet held by every node of street i to reach street j.

    Each replication draws fresh uniform positions and directions.  Only
    intersection contacts can move the packet since street i starts fully
    infected and street j starts clean.
    """
    if n_i < 1 or n_j < 1:
        raise ValueError("both streets must be busy")
    times = []
    censored = 0
    for r in range(replications):
        pop = cross_population(n_i, n_j, speed, make_rng(seed, r, 0x7A2), streets)
        target = pop.street_of(n_i)
        cfg = SimConfig(hop_time, stop=StreetReached(target, horizon=4.0 / speed),
                        source=tuple(range(n_i)), track_clusters=False)
        res = run(pop, cfg)
        if res.censored:
            censored += 1
            continue
        times.append(res.stop_time)
    arr = np.asarray(times)
    se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else math.nan
    return TurnTimeEstimate(float(arr.mean()) if len(arr) else math.nan, se, replications, censored)


def intersection_logs(n: int, m: int, speed: float, replications: int, seed: int = 0,
                      duration: float | None = None) -> list[IntersectionLog]:
    """Crossing logs at the central intersection from simulated billiard motion.

    Every replication records the times at which any of the ``n + m`` nodes
    passes the intersection during ``duration`` (default ``2/v``).
    """
    from .simulation import Horizon

    duration = 2.0 / speed if duration is None else duration
    logs = []
    for r in range(replications):
        pop = cross_population(n, m, speed, make_rng(seed, r, 0x1065))
        cfg = SimConfig(1.0e9, stop=Horizon(duration), source=(), record_crossings=True,
                        track_clusters=False)
        res = run(pop, cfg)
        logs.append(IntersectionLog(n, m, 0.0, [c.t for c in res.crossings]))
    return logs
