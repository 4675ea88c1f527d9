import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowbond import lpp
from slowbond._rng import grid_rng
from slowbond.errors import DomainError, OracleCapError, ParameterError

rates = st.floats(min_value=0.05, max_value=1.0)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def unit_grid(n, r=1.0):
    return lpp.QuadrantGrid(n, r, np.ones((n, n)))


# --- sampling -------------------------------------------------------------


def test_single_cell_grid_uses_diagonal_weight():
    g = lpp.sample_quadrant(1, 0.5, seed=3)
    assert g.samples.shape == (1, 1) and g.samples[0, 0] > 0
    assert g.weight(1, 1) == g.samples[0, 0] / 0.5


def test_sampling_is_reproducible():
    a = lpp.sample_quadrant(3, 0.5, seed=11)
    b = lpp.sample_quadrant(3, 0.5, seed=11)
    assert np.array_equal(a.samples, b.samples)
    c = lpp.sample_quadrant(3, 0.5, seed=11, replica=1)
    assert not np.array_equal(a.samples, c.samples)


def test_sample_mean_is_near_one():
    g = lpp.sample_quadrant(1000, 0.5, seed=5)
    assert abs(g.samples.mean() - 1) < 0.1


@pytest.mark.parametrize("n,r", [(0, 0.5), (3, 0.0), (3, 1.5), (3, -1)])
def test_bad_parameters_are_rejected(n, r):
    with pytest.raises(ParameterError):
        lpp.sample_quadrant(n, r, seed=0)


def test_grid_rejects_nonpositive_samples():
    with pytest.raises(ParameterError):
        lpp.QuadrantGrid(2, 1.0, np.array([[1.0, 0.0], [1.0, 1.0]]))


def test_streamed_blocks_equal_materialized_grid():
    n = 600  # crosses several row blocks
    g = lpp.sample_quadrant(n, 0.4, seed=9, replica=2)
    full = lpp.passage_time_quadrant(g).at(n, n)
    streamed, diag = lpp._stream_corner(grid_rng(9, 2), n, n, np.array([0.4]))
    assert streamed[0] == full
    assert diag == pytest.approx(np.trace(g.samples), rel=1e-12)


# --- quadrant passage times ----------------------------------------------


def test_two_by_two_unit_grid():
    g = unit_grid(2)
    assert lpp.passage_time_quadrant(g).at(2, 2) == 3
    assert lpp.brute_force_passage(g, (2, 2)) == 3


def test_single_cell_passage():
    g = lpp.sample_quadrant(1, 0.3, seed=1)
    assert lpp.passage_time_quadrant(g).at(1, 1) == g.samples[0, 0] / 0.3


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 6), r=rates, seed=seeds)
def test_dp_equals_brute_force_on_quadrant(n, r, seed):
    g = lpp.sample_quadrant(n, r, seed)
    table = lpp.passage_time_quadrant(g)
    for i, j in [(n, n), (n, 1), (1, n), ((n + 1) // 2, n)]:
        assert table.at(i, j) == lpp.brute_force_passage(g, (i, j))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), seed=seeds)
def test_quadrant_table_is_monotone(n, seed):
    v = lpp.passage_time_quadrant(lpp.sample_quadrant(n, 0.5, seed)).values
    assert np.all(np.diff(v, axis=0) > 0) and np.all(np.diff(v, axis=1) > 0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 15), r1=rates, r2=rates, seed=seeds)
def test_table_is_monotone_in_rate_per_sample(n, r1, r2, seed):
    r1, r2 = min(r1, r2), max(r1, r2)
    g = lpp.sample_quadrant(n, 1.0, seed)
    t1 = lpp.passage_time_quadrant(lpp.QuadrantGrid(n, r1, g.samples)).values
    t2 = lpp.passage_time_quadrant(lpp.QuadrantGrid(n, r2, g.samples)).values
    assert np.all(t1 >= t2)


def test_brute_force_refuses_large_path_counts():
    g = lpp.sample_quadrant(12, 1.0, seed=0)
    with pytest.raises(OracleCapError):
        lpp.brute_force_passage(g, (12, 12), cap=1000)


# --- wedge ----------------------------------------------------------------


@pytest.mark.parametrize("site", [(0, 0), (3, 0), (-1, 1), (-3, 3)])
def test_wedge_boundary_is_zero(site):
    g = lpp.sample_wedge(3, 4, 0, 0.5, seed=2)
    assert lpp.passage_time_wedge(g).at(*site) == 0
    assert lpp.brute_force_passage(g, site) == 0


def test_wedge_grid_only_indexes_lattice_sites():
    g = lpp.sample_wedge(2, 3, 0, 0.5, seed=2)
    assert g.contains(-2, 3) and not g.contains(-2, 2)
    with pytest.raises(DomainError):
        g.weight(-2, 2)


@settings(max_examples=50, deadline=None)
@given(j_max=st.integers(1, 5), m=st.integers(-3, 3), r=rates, seed=seeds)
def test_dp_equals_brute_force_on_wedge(j_max, m, r, seed):
    i_max = 3
    g = lpp.sample_wedge(i_max, j_max, m, r, seed)
    table = lpp.passage_time_wedge(g)
    for j in range(1, j_max + 1):
        for i in range(1 - j, i_max + 1):
            if lpp.wedge_extent_for((i, j)) <= i_max:
                assert table.at(i, j) == lpp.brute_force_passage(g, (i, j))


def test_wedge_single_site_on_defect():
    t_w, t_q = lpp.wedge_quadrant_equivalence(1, 0.25, seed=4)
    g = lpp.sample_wedge(0, 1, 0, 0.25, seed=4)
    assert t_w == t_q == g.samples[0, 0] / 0.25


@settings(max_examples=100, deadline=None)
@given(seed=seeds, r=rates)
def test_wedge_quadrant_bijection_is_exact(seed, r):
    t_w, t_q = lpp.wedge_quadrant_equivalence(5, r, seed)
    assert t_w == t_q


def test_dropping_vertical_steps_keeps_the_value():
    g = lpp.sample_wedge(9, 10, 0, 0.5, seed=8)
    full = lpp.passage_time_wedge(g).at(0, 10)
    restricted = lpp.passage_time_wedge(g, vertical_steps=False).at(0, 10)
    assert full == pytest.approx(restricted, rel=1e-14)


# --- kappa ----------------------------------------------------------------


def test_kappa_with_one_cell():
    est = lpp.estimate_kappa(0.4, 1, 1, seed=6)
    g = lpp.sample_quadrant(1, 0.4, seed=6)
    assert est.mean == g.samples[0, 0] / 0.4
    assert math.isnan(est.stderr)


def test_kappa_estimate_mean_matches_replicas():
    est = lpp.estimate_kappa(0.5, 40, 7, seed=1)
    assert est.replicas == 7 and est.mean == pytest.approx(est.per_replica.mean())
    assert est.mean >= 0
    again = lpp.estimate_kappa(0.5, 40, 7, seed=1)
    assert np.array_equal(est.per_replica, again.per_replica)


def test_threads_do_not_change_estimates():
    a = lpp.estimate_kappa(0.5, 60, 4, seed=2, threads=1)
    b = lpp.estimate_kappa(0.5, 60, 4, seed=2, threads=3)
    assert np.array_equal(a.per_replica, b.per_replica)


@pytest.mark.parametrize("r,lower,upper", [(1.0, 4.0, 4.0), (0.5, 4.0, 5.0)])
def test_kappa_bounds_examples(r, lower, upper):
    b = lpp.kappa_bounds(r)
    assert b.lower == pytest.approx(lower) and b.upper == pytest.approx(upper)


def test_lower_bound_crossover_near_0425():
    r_star = (math.sqrt(41) - 3) / 8
    expr = lambda r: 1.5 + (r * r + 2 * (1 + r)) / (2 * r * (1 + r))
    assert expr(r_star) == pytest.approx(4.0, abs=1e-12)
    assert expr(r_star - 0.01) > 4 > expr(r_star + 0.01)


@given(r=rates)
def test_bounds_are_ordered(r):
    b = lpp.kappa_bounds(r)
    assert 4 <= b.lower <= b.upper and b.upper == 3 + 1 / r


def test_lambda0_from_kappa():
    assert lpp.lambda0_from_kappa(4) == 1
    assert lpp.lambda0_from_kappa(8) == 0.5
    assert lpp.lambda0_from_kappa(3.9) == 1
    with pytest.raises(DomainError):
        lpp.lambda0_from_kappa(3.5)


def test_superadditivity_signature():
    for n in (50, 100):
        small = lpp.estimate_kappa(0.5, n, 40, seed=3)
        big = lpp.estimate_kappa(0.5, 2 * n, 40, seed=4)
        # means of T/n: T_{2n,2n} >= 2 T_{n,n} reads as big.mean >= small.mean
        assert big.mean >= small.mean - 2 * math.hypot(big.stderr, small.stderr)


def test_shape_probe_two_by_two_matches_brute_force():
    g = lpp.sample_quadrant(2, 1.0, seed=12)
    assert lpp.shape_probe(1, 1, 2, seed=12) == lpp.brute_force_passage(g, (2, 2)) / 2


def test_finite_size_fit_recovers_line():
    ns = np.array([100, 200, 400, 800])
    a, b = lpp.fit_finite_size(ns, 4.0 - 3.0 * ns ** (-1 / 3))
    assert a == pytest.approx(4.0) and b == pytest.approx(-3.0)
