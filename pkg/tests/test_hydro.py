import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowbond import hydro
from slowbond.errors import DomainError, ParameterError, PreconditionError
from slowbond.hydro import MacroProfile, MacroRate

R64 = MacroRate(0.64)
lambdas = st.floats(min_value=0.05, max_value=1.0)
densities = st.floats(min_value=0.0, max_value=1.0)


# --- basic functions ------------------------------------------------------


def test_rate_constants():
    assert R64.B == pytest.approx(0.6) and R64.rho_star == pytest.approx(0.2)
    assert hydro.HOMOGENEOUS.B == 0 and hydro.HOMOGENEOUS.rho_star == 0.5
    with pytest.raises(ParameterError):
        MacroRate(0.0)


@given(lam=lambdas)
def test_flux_at_critical_density(lam):
    rate = MacroRate(lam)
    assert hydro.f0(rate.rho_star) == pytest.approx(lam / 4, abs=1e-12)


def test_f0_and_g0_examples():
    assert hydro.f0(0) == 0 and hydro.f0(0.5) == 0.25 and hydro.f0(0.1) == pytest.approx(0.09)
    assert hydro.g0(1) == 0 and hydro.g0(0) == 0.25 and hydro.g0(-2) == 2
    with pytest.raises(DomainError):
        hydro.f0(1.2)


def test_g0_is_the_conjugate_of_f0():
    rho = np.linspace(0, 1, 100001)
    for x in np.linspace(-2, 2, 81):
        assert hydro.g0(x) == pytest.approx(np.max(rho * (1 - rho) - x * rho), abs=1e-6)


def test_gamma0_examples():
    assert hydro.gamma0(1, 1) == pytest.approx((math.sqrt(2) + 1) ** 2)
    assert hydro.gamma0(0, 2.5) == pytest.approx(10)
    with pytest.raises(DomainError):
        hydro.gamma0(-2, 1)


def test_gamma0_on_the_level_curve():
    xs = np.linspace(-1, 1, 200)
    assert np.max(np.abs(hydro.gamma0(xs, hydro.g0(xs)) - 1)) <= 1e-12


@given(y=st.floats(0, 50), s=st.floats(1e-3, 1), c=st.floats(0.01, 100))
def test_gamma0_is_homogeneous(y, s, c):
    # kept off the edge x = -y, where scaling x and y separately loses x + y to cancellation
    x = -y + s * 3 * (y + 1)
    assert hydro.gamma0(c * x, c * y) == pytest.approx(c * hydro.gamma0(x, y), rel=1e-12)


@given(y=st.just(0.0) | st.floats(1e-6, 50), s=st.just(0.0) | st.floats(1e-6, 1),
       e=st.integers(-20, 20))
def test_gamma0_scales_exactly_by_powers_of_four(y, s, e):
    # square roots of powers of four are exact, so no rounding enters
    x = -y + s * 3 * (y + 1)
    c = 4.0**e
    assert hydro.gamma0(c * x, c * y) == c * hydro.gamma0(x, y)


# --- control cost -------------------------------------------------------------


def test_cost_examples():
    t = 2.0
    assert hydro.cost_I(1.5, t, 1.5, R64) == pytest.approx(t / 4)
    assert hydro.cost_I(0.3, t, 0.3 - t, R64) == 0
    assert hydro.cost_I(0, t, 0, R64) == pytest.approx(t * 0.64 / 4)
    with pytest.raises(DomainError):
        hydro.cost_I(0, 0, 0, R64)


def test_all_five_cases_occur():
    seen = {hydro.classify_case(x, 1.0, q, R64)
            for x in np.linspace(-1, 1, 21) for q in np.linspace(-1, 1, 21)}
    assert seen == set("abcde")


@settings(max_examples=200)
@given(x=st.floats(-3, 3), t=st.floats(0.05, 5), q=st.floats(-5, 5), lam=lambdas)
def test_defect_only_cheapens_cost(x, t, q, lam):
    straight = t * hydro.g0((x - q) / t)
    assert hydro.cost_I(x, t, q, MacroRate(lam)) <= straight + 1e-12
    assert hydro.cost_I(x, t, q, hydro.HOMOGENEOUS) == straight


def _boundaries(x, t, rate):
    bt = rate.B * t
    inner = (math.sqrt(bt) - math.sqrt(abs(x))) ** 2
    return [x - bt, x + bt, inner, -inner]


def test_cost_is_continuous_across_case_boundaries():
    worst = 0.0
    for lam in (0.3, 0.64, 0.9):
        rate = MacroRate(lam)
        for t in (0.5, 1.0, 3.0):
            for x in np.linspace(-1.2 * rate.B * t, 1.2 * rate.B * t, 25):
                for q in _boundaries(x, t, rate):
                    worst = max(worst, abs(hydro.cost_I(x, t, q + 1e-9, rate)
                                           - hydro.cost_I(x, t, q - 1e-9, rate)))
            for q in np.linspace(-2, 2, 25):
                for x in (rate.B * t, -rate.B * t, 0.0):
                    worst = max(worst, abs(hydro.cost_I(x + 1e-9, t, q, rate)
                                           - hydro.cost_I(x - 1e-9, t, q, rate)))
    assert worst <= 1e-6


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-2, 2), t=st.floats(0.1, 3), q=st.floats(-3, 3), lam=st.floats(0.1, 0.99))
def test_cost_equals_level_curve_of_wedge_functional(x, t, q, lam):
    rate = MacroRate(lam)
    assert hydro.cost_I(x, t, q, rate) == pytest.approx(hydro.level_g(-q, x - q, t, rate), abs=1e-3)


@settings(max_examples=100)
@given(x=st.floats(-2, 2), t=st.floats(0.1, 3), q=st.floats(-3, 3), lam=st.floats(0.05, 0.99))
def test_optimal_path_cost_matches_closed_form(x, t, q, lam):
    rate = MacroRate(lam)
    path = hydro.optimal_path(x, t, q, rate)
    assert path.value == pytest.approx(hydro.cost_I(x, t, q, rate), abs=1e-12)
    assert 0 <= path.s1 <= path.s2 <= t + 1e-12
    assert path.position(0.0) == pytest.approx(q) and path.position(t) == pytest.approx(x)
    if path.kind == "three-segment":
        mid = 0.5 * (path.s1 + path.s2)
        assert path.position(mid) == 0


def test_path_examples():
    p = hydro.optimal_path(1.5, 1.0, 1.0, R64)
    assert p.kind == "straight" and p.value == pytest.approx(hydro.g0(0.5))
    p = hydro.optimal_path(0.0, 2.0, 0.0, R64)
    assert p.kind == "three-segment" and p.value == pytest.approx(0.32)
    assert p.s1 == 0 and p.s2 == 2
    p = hydro.optimal_path(0.1, 1.0, 0.05, R64)
    assert hydro.classify_case(0.1, 1.0, 0.05, R64) == "d"
    assert p.s1 == pytest.approx(0.05 / 0.6) and p.s2 == pytest.approx(1 - 0.1 / 0.6)


# --- wedge functional --------------------------------------------------------


def test_big_gamma_examples():
    assert hydro.big_gamma(0.3, 0.5, 1.0, hydro.HOMOGENEOUS) == hydro.gamma0(0.5, 1.0)
    assert hydro.big_gamma(0.0, 0.0, 2.0, R64) == pytest.approx(2.0 * 4 / 0.64)
    with pytest.raises(DomainError):
        hydro.big_gamma(0, -3, 1, R64)


@settings(max_examples=100)
@given(q=st.floats(-3, 3), y=st.floats(0, 4), s=st.floats(0, 1), lam=lambdas)
def test_big_gamma_dominates_straight_path(q, y, s, lam):
    x = -y + s * 5
    assert hydro.big_gamma(q, x, y, MacroRate(lam)) >= hydro.gamma0(x, y)


def test_big_gamma_matches_dense_two_variable_search():
    rate = MacroRate(0.5)
    k = rate.kappa
    for q, x, y in [(0.2, 0.5, 1.0), (-0.3, 0.1, 0.8), (0.5, -0.2, 1.5)]:
        b = np.linspace(0, y, 801)
        b1, b2 = np.meshgrid(b, b, indexing="ij")
        ok = (b1 <= b2) & (b1 >= -q) & (y - b2 >= q - x)
        val = (np.sqrt(np.maximum(q + b1, 0)) + np.sqrt(b1)) ** 2 + k * (b2 - b1) \
            + (np.sqrt(np.maximum(x - q + y - b2, 0)) + np.sqrt(y - b2)) ** 2
        dense = max(hydro.gamma0(x, y), np.max(np.where(ok, val, -np.inf)))
        assert hydro.big_gamma(q, x, y, rate) == pytest.approx(dense, rel=1e-4)


def test_level_curve_examples():
    t = 1.5
    for x in np.linspace(-t, t, 9):
        assert hydro.level_g(0.4, x, t, hydro.HOMOGENEOUS) == pytest.approx(t * hydro.g0(x / t), abs=1e-6)
    # far-away column is never worth visiting
    assert hydro.level_g(50.0, 0.2, t, R64) == pytest.approx(t * hydro.g0(0.2 / t), abs=1e-6)


# --- value function ---------------------------------------------------------


def test_flat_profile_examples():
    assert hydro.flat_profile_oracle(0.5, hydro.HOMOGENEOUS, 0.7, 2.0) == pytest.approx(0.35 - 0.5)
    assert hydro.flat_profile_oracle(0.5, R64, 0.0, 3.0) == pytest.approx(-0.16 * 3)
    t = 2.0
    assert hydro.flat_profile_oracle(0.5, R64, -0.3 * t, t) == -0.4 * t
    sol = hydro.value_function(MacroProfile.flat(0.5), t, R64, [-0.3 * t])
    assert sol.v[0] == -0.4 * t


@settings(max_examples=200, deadline=None)
@given(rho=densities, lam=lambdas, s=st.floats(-2, 2), t=st.floats(0.05, 5))
def test_value_function_matches_flat_oracle(rho, lam, s, t):
    rate = MacroRate(lam)
    x = s * t
    sol = hydro.value_function(MacroProfile.flat(rho), t, rate, [x])
    assert sol.v[0] == pytest.approx(hydro.flat_profile_oracle(rho, rate, x, t), abs=1e-6)


def test_grid_method_agrees_with_exact():
    prof = MacroProfile.from_densities([-0.5, 0.2, 0.9], [0.1, 0.7, 0.3, 0.9])
    xs = np.linspace(-2, 2, 41)
    a = hydro.value_function(prof, 0.8, R64, xs)
    b = hydro.value_function(prof, 0.8, R64, xs, method="grid")
    assert np.max(np.abs(a.v - b.v)) < 1e-8


profiles = st.lists(densities, min_size=2, max_size=5).flatmap(
    lambda d: st.tuples(st.just(d), st.lists(st.floats(-2, 2), min_size=len(d) - 1,
                                             max_size=len(d) - 1, unique=True)))


def _profile(pair):
    dens, breaks = pair
    return MacroProfile.from_densities(sorted(breaks), dens)


@settings(max_examples=40, deadline=None)
@given(pair=profiles, lam=lambdas, t=st.floats(0.1, 3))
def test_solution_density_is_in_unit_interval(pair, lam, t):
    xs = np.linspace(-3, 3, 121)
    sol = hydro.value_function(_profile(pair), t, MacroRate(lam), xs)
    slopes = np.diff(sol.v) / np.diff(xs)
    assert np.all(slopes >= -1e-9) and np.all(slopes <= 1 + 1e-9)


@settings(max_examples=40, deadline=None)
@given(pair=profiles, lam1=lambdas, lam2=lambdas, t=st.floats(0.1, 3))
def test_value_is_nonincreasing_in_lambda(pair, lam1, lam2, t):
    lam1, lam2 = min(lam1, lam2), max(lam1, lam2)
    prof = _profile(pair)
    xs = np.linspace(-3, 3, 31)
    v1 = hydro.value_function(prof, t, MacroRate(lam1), xs).v
    v2 = hydro.value_function(prof, t, MacroRate(lam2), xs).v
    assert np.all(v1 >= v2 - 1e-12)


@settings(max_examples=40, deadline=None)
@given(pair=profiles, lam=lambdas, t=st.floats(0.1, 3))
def test_current_through_defect_is_capped(pair, lam, t):
    prof = _profile(pair)
    v = hydro.value_function(prof, t, MacroRate(lam), [0.0]).v[0]
    assert prof(0.0) - v <= t * lam / 4 + 1e-9


@pytest.mark.parametrize("dens,breaks", [([0.2, 0.8, 0.4], [-0.5, 0.3]),
                                         ([0.9, 0.1], [0.0]),
                                         ([0.3, 0.6, 0.1, 0.7], [-1.0, 0.0, 0.5])])
def test_semigroup(dens, breaks):
    rate = MacroRate(0.6)
    prof = MacroProfile.from_densities(breaks, dens)
    s, t = 0.4, 1.0
    mesh = np.linspace(-6, 6, 24001)
    mid = hydro.value_function(prof, s, rate, mesh)
    inter = MacroProfile.from_values(mesh, mid.v, dens[0], dens[-1])
    shift = float(mid.v[12000])  # v(0, s); the intermediate profile is renormalized to 0 there
    xs = np.linspace(-1.5, 1.5, 31)
    two_step = hydro.value_function(inter, t - s, rate, xs).v + shift
    direct = hydro.value_function(prof, t, rate, xs).v
    assert np.max(np.abs(two_step - direct)) <= 1e-5


# --- density ---------------------------------------------------------------


def test_density_of_flat_profile():
    sol = hydro.value_function(MacroProfile.flat(0.3), 1.0, MacroRate(0.9), np.linspace(-2, 2, 41))
    assert MacroRate(0.9).rho_star > 0.3
    assert np.allclose(hydro.density(sol), 0.3, atol=1e-12)


def test_density_shows_critical_plateaus():
    t, rho = 1.0, 0.5
    xs = np.linspace(-1, 1, 401)
    d = hydro.density(hydro.value_function(MacroProfile.flat(rho), t, R64, xs))
    h = xs[1] - xs[0]

    def at(x):
        return d[np.argmin(np.abs(xs - x))]

    assert at(-0.6) == pytest.approx(rho)
    assert at(-0.15) == pytest.approx(0.8) and at(0.15) == pytest.approx(0.2)
    assert at(0.5) == pytest.approx(rho)
    jumps = xs[1:-1][np.abs(np.diff(d)[1:]) > 0.05]
    for edge in (-0.3, 0.0, 0.3):
        assert np.min(np.abs(jumps - edge)) <= 1.5 * h


def test_density_two_point_mesh_and_errors():
    sol = hydro.HydroSolution(np.array([0.0, 2.0]), 1.0, np.array([0.0, 1.0]), 1.0, np.zeros(2))
    assert list(hydro.density(sol)) == [0.5, 0.5]
    with pytest.raises(ParameterError):
        hydro.density(hydro.HydroSolution(np.array([0.0]), 1.0, np.array([0.0]), 1.0, np.zeros(1)))


def test_density_warns_outside_unit_interval():
    sol = hydro.HydroSolution(np.array([0.0, 1.0]), 1.0, np.array([0.0, 2.0]), 1.0, np.zeros(2))
    with pytest.warns(RuntimeWarning):
        hydro.density(sol)


# --- profiles and invariance ----------------------------------------------------


def test_profile_normalization_and_json_roundtrip():
    prof = MacroProfile.from_densities([-1.0, 0.5], [0.2, 0.6, 0.9])
    assert prof(0.0) == 0
    assert prof(1.5) == pytest.approx(0.3 + 0.9)
    assert prof(-2.0) == pytest.approx(-0.6 - 0.2)
    again = MacroProfile.from_json(prof.to_json())
    xs = np.linspace(-3, 3, 13)
    assert np.allclose(again(xs), prof(xs))
    with pytest.raises(ParameterError):
        MacroProfile.from_densities([0.0], [0.5, 1.5])


def test_invariance_examples():
    rs = R64.rho_star
    times = [0.1, 1.0, 5.0]
    assert hydro.invariance_check(MacroProfile.flat(rs), R64, times).passed
    at0 = hydro.invariance_check(MacroProfile.from_densities([0.0], [1 - rs, rs]), R64, times)
    assert at0.passed and at0.jumps[0].kind == "non-entropy" and at0.jumps[0].admissible
    entropy = hydro.invariance_check(MacroProfile.from_densities([0.5], [rs, 1 - rs]), R64, times)
    assert entropy.passed and entropy.jumps[0].kind == "entropy"
    bad = hydro.invariance_check(MacroProfile.from_densities([1.0], [1 - rs, rs]), R64, times)
    assert not bad.passed and bad.first_failing_t == 0.1 and not bad.jumps[0].admissible


def test_invariance_needs_band():
    with pytest.raises(PreconditionError):
        hydro.invariance_check(MacroProfile.flat(0.1), R64, [1.0])


@settings(max_examples=30, deadline=None)
@given(x0=st.floats(-2, 2), lam=st.floats(0.1, 0.95))
def test_entropy_shocks_are_invariant_anywhere(x0, lam):
    rate = MacroRate(lam)
    rs = rate.rho_star
    prof = MacroProfile.from_densities([x0], [rs, 1 - rs])
    assert hydro.invariance_check(prof, rate, [0.5, 2.0]).passed


@settings(max_examples=30, deadline=None)
@given(x0=st.floats(0.05, 2), sign=st.sampled_from([-1, 1]), lam=st.floats(0.1, 0.95))
def test_non_entropy_shocks_away_from_origin_move(x0, sign, lam):
    rate = MacroRate(lam)
    rs = rate.rho_star
    prof = MacroProfile.from_densities([sign * x0], [1 - rs, rs])
    assert not hydro.invariance_check(prof, rate, [0.5, 2.0]).passed
