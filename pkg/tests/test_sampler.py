import numpy as np
import pytest
from scipy import stats

from hyperfractal_dtn.geometry import Orientation, Street, params_from_df, params_from_p
from hyperfractal_dtn.sampler import (
    MobileNode,
    Population,
    busy_street_census,
    expected_busy_streets_exact,
    sample_population,
)

from conftest import V40


def test_exact_count_and_level_zero_concentration(v40):
    P = params_from_df(3, 1200)
    inside = 0
    for seed in range(100):
        pop = sample_population(P, seed, v40)
        assert len(pop) == 1200
        # truncated law: expected level-0 count is n p / (1 - q**6)
        mean = 1200 * P.level_probabilities[0]
        inside += abs(int(np.sum(pop.level == 0)) - mean) <= 3 * np.sqrt(1200 * 0.25)
    assert inside >= 99


def test_p_one_all_on_central_cross(v40):
    pop = sample_population(params_from_p(1.0, 1000), 1, v40)
    assert np.all(pop.level == 0)
    assert busy_street_census(pop).total_busy == 2


def test_level_fractions_chi2(v40):
    P = params_from_df(3, 10_000)
    pop = sample_population(P, 3, v40)
    observed = np.bincount(pop.level, minlength=P.L_max + 1)
    expected = P.level_probabilities * 10_000
    assert np.allclose(P.level_probabilities, [0.5 * 0.5 ** l / (1 - 0.5 ** 6) for l in range(6)])
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_positions_uniform(v40):
    pop = sample_population(params_from_df(3, 5000), 11, v40)
    assert stats.kstest(pop.position, "uniform").pvalue > 0.01


def test_reproducible_bytes(v40):
    P = params_from_df(3, 300)
    assert sample_population(P, 5, v40).to_jsonl() == sample_population(P, 5, v40).to_jsonl()
    assert sample_population(P, 5, v40).to_jsonl() != sample_population(P, 5, v40, 1).to_jsonl()


def test_jsonl_round_trip(v40):
    pop = sample_population(params_from_df(3, 50), 2, v40)
    back = Population.from_jsonl(pop.to_jsonl())
    assert back.to_jsonl() == pop.to_jsonl()
    assert list(back[3].street.key) == list(pop[3].street.key)


def test_census_single_node():
    nd = MobileNode(0, Street(Orientation.VERTICAL, 1, 1), 0.2, 1, V40)
    stats_ = busy_street_census([nd])
    assert (stats_.total_busy, stats_.busy_ns, stats_.busy_ew) == (1, 1, 0)


def test_census_invariants(v40):
    P = params_from_df(2.5, 2000, 6)
    c = busy_street_census(sample_population(P, 0, v40))
    assert c.total_busy == c.busy_ns + c.busy_ew
    assert all(b <= t for b, t in c.per_level_counts.values())
    assert c.total_busy <= 2 * (2 ** 7 - 1)


def test_exact_busy_streets_oracles():
    assert expected_busy_streets_exact(params_from_df(3, 1)) == pytest.approx(1.0, abs=1e-9)
    big = expected_busy_streets_exact(params_from_df(3, 10_000))
    assert big == pytest.approx(255.7, rel=0.15)
    vals = [expected_busy_streets_exact(params_from_df(3, n)) for n in (10, 100, 1000, 5000)]
    assert vals == sorted(vals)


def test_uniform_limit_busy_ratio(v40):
    P = params_from_df(2.0001, 300, 30)
    c = busy_street_census(sample_population(P, 0, v40))
    assert c.total_busy / 300 > 0.9


def test_node_validation():
    with pytest.raises(ValueError):
        MobileNode(0, Street(Orientation.VERTICAL, 0, 0), 1.5, 1, 1.0)
    with pytest.raises(ValueError):
        MobileNode(0, Street(Orientation.VERTICAL, 0, 0), 0.5, 0, 1.0)
