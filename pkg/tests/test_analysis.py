import numpy as np
import pytest

from hyperfractal_dtn.analysis import (
    count_clusters,
    empirical_turn_time,
    estimate_inflexion,
    intersection_logs,
    teleport_analysis,
)
from hyperfractal_dtn.bounds import turn_time_bound
from hyperfractal_dtn.fitting import time_interval_criterion
from hyperfractal_dtn.geometry import Orientation, Street, params_from_df
from hyperfractal_dtn.sampler import MobileNode, sample_population
from hyperfractal_dtn.simulation import RandomSource, SimConfig, run

from conftest import H, V40


def test_cluster_definition():
    assert count_clusters([0.1, 0.2, 0.15], [True, True, False]) == 2
    assert count_clusters([0.1, 0.2], [False, False]) == 0


def test_source_street_single_cluster_at_start():
    hs = Street(Orientation.HORIZONTAL, 0, 0)
    nodes = [MobileNode(i, hs, 0.1 * (i + 1), 1, V40) for i in range(5)]
    res = run(nodes, SimConfig(H, source=2, snapshots=(H / 2,)))
    reps = teleport_analysis(res)
    assert len(reps) == 1 and reps[0].outbreak_count_max >= 1
    snap = res.snapshots[0]
    assert count_clusters(snap.position, snap.infected) == 1


def test_teleport_reports_cover_infected_streets(v40):
    pop = sample_population(params_from_df(5.33, 1200), 3, v40)
    res = run(pop, SimConfig(H, source=RandomSource(1), snapshots=(5.0, 10.0)))
    reps = teleport_analysis(res)
    infected_streets = {res.street_keys[s] for s in np.unique(res.node_street[np.isfinite(res.infection_time)])}
    assert len(reps) == len(infected_streets)
    assert all(r.outbreak_count_max >= 1 for r in reps)


@pytest.mark.parametrize("ni,nj", [(5, 5), (10, 20), (50, 50)])
def test_turn_time_below_bound(ni, nj):
    v = 0.0111
    est = empirical_turn_time(ni, nj, v, replications=4000, seed=ni)
    assert est.censored == 0
    assert est.mean <= turn_time_bound(ni, nj, v)


def test_turn_time_nonincreasing():
    v = 0.0111
    means = [empirical_turn_time(k // 2, k - k // 2, v, 400, seed=7) for k in (10, 20, 50, 100)]
    for a, b in zip(means, means[1:]):
        assert b.mean <= a.ci95[1]


def test_time_interval_criterion_from_logs():
    v = 0.0111
    # the true mean 1/(v (n+m+1)) sits only 1% under the bound, so many logs are needed
    logs = intersection_logs(50, 50, v, 20_000, seed=1, duration=1.01 / v)
    rep = time_interval_criterion(logs, 1 / v)
    assert rep.violation_fraction == 0.0
    doubled = time_interval_criterion(logs, 2 / v)
    assert doubled.violation_fraction <= rep.violation_fraction


def test_inflexion_estimate_on_synthetic_regimes():
    h, delta = 0.06, 0.5
    ns = [50, 100, 200, 400, 800, 1600, 3200]
    n_star = 400.0
    c = h
    A_prime = c * n_star ** delta
    rng = np.random.default_rng(0)
    samples = [list((c * n if n <= n_star else A_prime * n ** (1 - delta)) * rng.lognormal(0, 0.02, 30)) for n in ns]
    est = estimate_inflexion(ns, samples, h, delta, bootstrap=200)
    assert est.n_star == pytest.approx(n_star, rel=0.2)
    assert est.A == pytest.approx(h * n_star ** delta, rel=0.2)
    assert est.ci[0] <= est.A <= est.ci[1]
