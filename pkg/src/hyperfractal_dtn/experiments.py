"""Replicated experiments and parameter sweeps.

Replication ``r`` of a run with master seed ``s`` draws everything from the
stream ``(s, r)``, so results do not depend on how replications are spread
over worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .bounds import BoundInputs, lower_bound, upper_bound_direct, upper_bound_diverted
from .geometry import params_from_df
from .mobility import SpeedProfile
from .sampler import Population, make_rng, sample_population
from .simulation import FullContamination, NearestNeighbor, SimConfig, measure_pair_delay, run

_SOURCE_STREAM = 0x5EED
_PAIR_STREAM = 0x9A1B


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map, optionally over a process pool."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def mean_ci(samples, level: float = 0.95) -> tuple[float, float, float]:
    """Mean and Student-t confidence interval."""
    arr = np.asarray(samples, dtype=float)
    m = float(arr.mean())
    if len(arr) < 2:
        return m, math.nan, math.nan
    half = float(stats.t.ppf(0.5 + level / 2.0, len(arr) - 1) * arr.std(ddof=1) / math.sqrt(len(arr)))
    return m, m - half, m + half


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


@dataclass(frozen=True)
class RunSpec:
    d_F: float
    n: int
    L_max: int
    h: float
    speed: SpeedProfile
    seed: int
    replication: int
    reach: object = NearestNeighbor()


@dataclass
class RunOutcome:
    time: float
    complete: bool
    hop_transmissions: int
    handoffs: int


def broadcast_replication(spec: RunSpec) -> RunOutcome:
    params = params_from_df(spec.d_F, spec.n, spec.L_max)
    pop = sample_population(params, spec.seed, spec.speed, spec.replication)
    src = int(make_rng(spec.seed, spec.replication, _SOURCE_STREAM).integers(spec.n))
    res = run(pop, SimConfig(spec.h, spec.reach, FullContamination(), src, track_clusters=False))
    return RunOutcome(res.broadcast_time, res.complete, res.event_counts["hop_transmissions"],
                      res.event_counts["handoffs"])


def pair_replication(spec: RunSpec) -> float:
    """Delay from a uniform node to the window of a uniform node on the other orientation.

    Returns ``inf`` when the window is not reached (censored) or when one
    orientation holds no node.
    """
    params = params_from_df(spec.d_F, spec.n, spec.L_max)
    pop = sample_population(params, spec.seed, spec.speed, spec.replication)
    rng = make_rng(spec.seed, spec.replication, _PAIR_STREAM)
    x = int(rng.integers(spec.n))
    others = np.flatnonzero(pop.orientation != pop.orientation[x])
    if len(others) == 0:
        return math.inf
    y = int(others[rng.integers(len(others))])
    return measure_pair_delay(pop, SimConfig(spec.h, spec.reach), x, y).delay


def bound_inputs(d_F: float, n: int, L_max: int, h: float, v: float, epsilon: float = 0.1,
                 radio: bool = False) -> BoundInputs:
    return BoundInputs(params_from_df(d_F, n, L_max), h, v, epsilon, radio)


@dataclass
class SweepRow:
    d_F: float
    n: int
    replications: int
    mean_T: float
    ci_low: float
    ci_high: float
    censored: int
    lower: float
    upper_direct: float
    upper_diverted: float
    slope: float = math.nan
    expected_slope: float = math.nan

    COLUMNS = ("d_F", "n", "replications", "mean_T", "ci_low", "ci_high", "censored", "lower",
               "upper_direct", "upper_diverted", "slope", "expected_slope")

    def values(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


def sweep(d_Fs: Iterable[float], ns: Iterable[int], replications: int, seed: int, h: float,
          speed: SpeedProfile, L_max: int = 5, epsilon: float = 0.1, jobs: int = 1,
          metric: str = "broadcast", reach=NearestNeighbor()) -> list[SweepRow]:
    """Mean broadcast (or pair) delay per ``(d_F, n)`` cell next to the closed-form bounds.

    Upper bounds use the slowest level speed and the lower bound the fastest.
    ``slope`` is the log-log regression of mean time on ``n`` within each
    ``d_F``, repeated on each of its rows.
    """
    d_Fs = sorted(set(float(d) for d in d_Fs))
    ns = sorted(set(int(n) for n in ns))
    specs = [RunSpec(d, n, L_max, h, speed, seed, r, reach) for d in d_Fs for n in ns for r in range(replications)]
    fn = broadcast_replication if metric == "broadcast" else pair_replication
    outcomes = parallel_map(fn, specs, jobs)
    rows = []
    radio = not isinstance(reach, NearestNeighbor)
    for ci, (d, n) in enumerate((d, n) for d in d_Fs for n in ns):
        chunk = outcomes[ci * replications:(ci + 1) * replications]
        if metric == "broadcast":
            times = [o.time for o in chunk if o.complete]
        else:
            times = [t for t in chunk if math.isfinite(t)]
        m, lo, hi = mean_ci(times) if times else (math.nan, math.nan, math.nan)
        v_up, v_low = speed.min_speed(L_max), speed.max_speed(L_max)
        rows.append(SweepRow(
            d, n, replications, m, lo, hi, replications - len(times),
            lower_bound(bound_inputs(d, n, L_max, h, v_low, epsilon, radio)),
            upper_bound_direct(bound_inputs(d, n, L_max, h, v_up, epsilon, radio)),
            upper_bound_diverted(bound_inputs(d, n, L_max, h, v_up, epsilon, radio)),
        ))
    for d in d_Fs:
        cell = [r for r in rows if r.d_F == d and math.isfinite(r.mean_T)]
        slope = loglog_slope([r.n for r in cell], [r.mean_T for r in cell]) if len(cell) >= 2 else math.nan
        for r in rows:
            if r.d_F == d:
                r.slope = slope
                r.expected_slope = 1.0 - 1.0 / (d - 1.0)
    return rows


# -- one node per street --------------------------------------------------

def one_per_street_population(n: int, speed: float, rng) -> Population:
    """``n`` nodes, each alone on its own street, split evenly between orientations.

    Streets are distinct indices of the shallowest level wide enough to hold
    ``ceil(n/2)`` streets per orientation.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    per = [n - n // 2, n // 2]
    level = max(1, math.ceil(math.log2(per[0])))
    orient, index = [], []
    for o, count in enumerate(per):
        idx = rng.choice(2 ** level, size=count, replace=False)
        orient += [o] * count
        index += sorted(int(i) for i in idx)
    return Population(orient, [level] * n, index, rng.random(n), np.where(rng.random(n) < 0.5, 1, -1),
                      np.full(n, float(speed)))


@dataclass(frozen=True)
class UniformSpec:
    n: int
    h: float
    speed: float
    seed: int
    replication: int


def uniform_replication(spec: UniformSpec) -> float:
    rng = make_rng(spec.seed, spec.replication, 0xD1)
    pop = one_per_street_population(spec.n, spec.speed, rng)
    src = int(rng.integers(spec.n))
    res = run(pop, SimConfig(spec.h, source=src, track_clusters=False))
    return res.broadcast_time if res.complete else math.inf


@dataclass
class UniformLimitResult:
    ns: list[int]
    means: list[float]
    slope: float
    scale: float
    extra: dict = field(default_factory=dict)


def poisson_uniform_experiment(ns: Sequence[int], replications: int, seed: int, h: float, speed: float,
                               jobs: int = 1) -> UniformLimitResult:
    specs = [UniformSpec(n, h, speed, seed, r) for n in ns for r in range(replications)]
    out = parallel_map(uniform_replication, specs, jobs)
    means = []
    for i, _ in enumerate(ns):
        chunk = [t for t in out[i * replications:(i + 1) * replications] if math.isfinite(t)]
        means.append(float(np.mean(chunk)) if chunk else math.nan)
    return UniformLimitResult(list(ns), means, loglog_slope(ns, means), 1.0 / speed + h)
