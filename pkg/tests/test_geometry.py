import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hyperfractal_dtn.geometry import (
    DomainError,
    Orientation,
    Street,
    StreetGrid,
    critical_level_H,
    df_from_params,
    intensity_at_level,
    level_coordinates,
    nearest_perp_street_distance,
    params_from_df,
    params_from_p,
    street_probability,
)


def test_params_from_df_three():
    P = params_from_df(3, 100)
    assert P.q == pytest.approx(0.5, abs=1e-15)
    assert P.p == pytest.approx(0.5, abs=1e-15)
    assert P.delta == pytest.approx(0.5, abs=1e-15)


def test_params_from_df_two_is_uniform_limit():
    P = params_from_df(2, 10)
    assert (P.q, P.p, P.delta) == (1.0, 0.0, 1.0)


def test_params_from_df_533():
    P = params_from_df(5.33, 1200)
    assert P.q == pytest.approx(4 * 2 ** -5.33, rel=1e-12)
    assert P.q == pytest.approx(0.09945, abs=5e-5)
    assert P.p == pytest.approx(0.90055, abs=5e-5)
    assert P.delta == pytest.approx(0.23095, abs=5e-5)


def test_params_below_two_rejected():
    with pytest.raises(DomainError):
        params_from_df(1.9, 10)


def test_params_from_p_one_is_central_cross():
    P = params_from_p(1.0, 10)
    assert P.q == 0.0 and math.isinf(P.d_F) and P.delta == 0.0


@given(st.floats(2.0, 8.0))
def test_df_round_trip(d):
    assert df_from_params(params_from_df(d, 10)) == pytest.approx(d, abs=1e-10)


def test_intensity_examples():
    P = params_from_df(3, 1000)
    assert intensity_at_level(P, 0) == pytest.approx(250)
    assert intensity_at_level(P, 1) == pytest.approx(62.5)
    assert street_probability(P, 1) == pytest.approx(0.0625)


@pytest.mark.parametrize("d", [2.2, 3.0, 4.5])
def test_level_mass_sums_to_n(d):
    P = params_from_df(d, 1000)
    total = sum(intensity_at_level(P, l) * 2.0 ** (l + 1) for l in range(1000))
    assert total == pytest.approx(1000, abs=1e-9)


@pytest.mark.parametrize("pos,level,expected", [(0.5, 1, 0.25), (0.25, 1, 0.0), (0.1, 2, 0.025)])
def test_nearest_perp_distance(pos, level, expected):
    assert nearest_perp_street_distance(pos, level) == pytest.approx(expected, abs=1e-15)


@given(st.floats(0, 1), st.integers(0, 10))
def test_nearest_perp_distance_bounded(pos, level):
    assert nearest_perp_street_distance(pos, level) <= 2.0 ** -level + 1e-15


def test_critical_level_examples():
    P = params_from_df(3, 1024)
    assert critical_level_H(P, 0.1) == 4
    assert critical_level_H(P, 0.25) == 3
    # radio uses n**(1/2 - eps): log4(0.25 * 1024**0.4) = 1.0 -> 1
    assert critical_level_H(P, 0.1, radio=True) == math.ceil(math.log(1024 ** 0.4 * 0.25) / math.log(4) - 1e-12)


def test_critical_level_domain():
    with pytest.raises(DomainError):
        critical_level_H(params_from_df(3, 2), 0.9)


def test_street_coordinate_and_validation():
    assert Street(Orientation.HORIZONTAL, 2, 1).coordinate == 0.375
    with pytest.raises(ValueError):
        Street(Orientation.VERTICAL, 1, 2)


def test_grid_counts():
    grid = StreetGrid(params_from_df(3, 10, 5))
    assert len(grid) == 126 == len(list(grid.streets()))
    for level in range(6):
        assert len(grid.streets_at_level(level)) == 2 ** (level + 1)
    assert grid.cumulated_length(3) == 15


def test_coordinates_distinct_and_interleaved():
    seen = []
    for level in range(7):
        seen.extend(level_coordinates(level).tolist())
        assert len(set(seen)) == len(seen)
        below = np.sort([0.0, 1.0] + seen[: len(seen) - 2 ** level])
        new = level_coordinates(level)
        counts = np.histogram(new, bins=below)[0]
        assert np.all(counts == 1)
