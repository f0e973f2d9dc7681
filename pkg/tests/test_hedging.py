import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosshedge.hedging import (
    ConstantStrategy,
    FunctionStrategy,
    GridStrategy,
    WealthSample,
    admissibility_diagnostics,
    default_levels,
    expected_utility,
    geometric_pi_star_table,
    hitting_bounds,
    indifference_check,
    simulate_wealth,
    simulate_wealth_many,
)
from crosshedge.model import ConstantDrift, ConstantPayoff, LogQuad, LogShift, MarketSpec, derive_constants
from crosshedge.pricing import McConfig
from crosshedge.sde import NumericalError, TimeGrid
from crosshedge.strategy import pi_star_geometric

from conftest import canonical_market, canonical_process

GRID = TimeGrid(0.0, 1.0, 50)


def test_zero_strategy_keeps_wealth(market, geo):
    w = simulate_wealth(ConstantStrategy(0.0), market, geo, GRID, 1000, 1, v0=2.5)
    assert np.all(w.terminal_wealth == 2.5) and np.all(w.min_wealth == 2.5)


def test_classical_value_function(geo):
    m = canonical_market(v0=0.5)
    w = simulate_wealth(ConstantStrategy(0.1 / 0.13), m, geo, GRID, 40_000, 2)
    u = expected_utility(w, 1.0)
    target = -math.exp(-0.01 / (2 * 0.13)) * math.exp(-0.5)
    assert abs(u.mean_utility - target) < 3 * u.std_error


def test_deterministic_wealth(geo):
    m = MarketSpec(0.0, 0.0, ConstantDrift(0.1), 1.0, v0=1.0)
    w = simulate_wealth(ConstantStrategy(2.0), m, geo, TimeGrid(0.0, 1.0, 8), 5, 0)
    assert np.allclose(w.terminal_wealth, 1.2, rtol=0, atol=1e-15)
    # time-varying pi: left-endpoint sum of pi g dt
    w = simulate_wealth(FunctionStrategy(lambda t, x: t), m, geo, TimeGrid(0.0, 1.0, 4), 3, 0)
    assert np.allclose(w.terminal_wealth, 1.0 + 0.1 * 0.25 * (0 + 0.25 + 0.5 + 0.75), atol=1e-15)


def test_wealth_invariants(market, geo):
    w = simulate_wealth(ConstantStrategy(1.0), market, geo, GRID, 2000, 4, payoff=LogShift(1.0))
    assert np.all(w.min_wealth <= w.terminal_wealth)
    assert len(w.terminal_payoff) == w.n_paths == 2000
    with pytest.raises(ValueError):
        WealthSample(np.zeros(3), None, np.zeros(2), 0)


def test_self_financing_without_drift(geo):
    m = canonical_market(drift=ConstantDrift(0.0), v0=1.0)
    pi = FunctionStrategy(lambda t, x: np.clip(3 * np.sin(5 * x), -2, 2))
    w = simulate_wealth(pi, m, geo, GRID, 40_000, 9)
    se = w.terminal_wealth.std(ddof=1) / math.sqrt(w.n_paths)
    assert abs(w.terminal_wealth.mean() - 1.0) < 3 * se


def test_non_finite_wealth_names_the_path(market, geo):
    pi = FunctionStrategy(lambda t, x: np.where(x > 1.3, np.inf, 0.0))
    with pytest.raises(NumericalError, match="path"):
        with np.errstate(invalid="ignore"):
            simulate_wealth(pi, market, geo, GRID, 500, 1)


def test_utility_examples():
    z = np.zeros(5)
    assert expected_utility(WealthSample(z, None, z, 0), 2.0).mean_utility == -1.0
    assert expected_utility(WealthSample(z, np.full(5, 0.4), z, 0), 2.0, True, 0.4).mean_utility == -1.0
    with pytest.raises(ValueError):
        expected_utility(WealthSample(z, None, z, 0), 1.0, True)


def test_utility_is_overflow_safe():
    v = np.array([-800.0, -801.0])
    u = expected_utility(WealthSample(v, None, v, 0), 1.0)
    assert u.mean_utility == -math.inf
    assert u.certainty_equivalent == pytest.approx(-800.0 - math.log((1 + math.e) / 2), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    v=st.lists(st.floats(-3, 3), min_size=3, max_size=30),
    shift=st.floats(-5, 5),
    eta=st.floats(0.1, 3.0),
)
def test_utility_shift(v, shift, eta):
    v = np.array(v)
    a = expected_utility(WealthSample(v, None, v, 0), eta)
    b = expected_utility(WealthSample(v + shift, None, v + shift, 0), eta)
    assert b.mean_utility == pytest.approx(a.mean_utility * math.exp(-eta * shift), rel=1e-12)
    assert b.certainty_equivalent == pytest.approx(a.certainty_equivalent + shift, abs=1e-12 * (1 + abs(shift)))


def test_crn_discipline(market, geo):
    a, b = simulate_wealth_many([ConstantStrategy(1.0), ConstantStrategy(2.0)], market, geo, GRID, 1000, 3)
    assert np.allclose(b.terminal_wealth, 2 * a.terminal_wealth, rtol=1e-14)


def test_grid_strategy_interpolation():
    gs = GridStrategy([0.0, 1.0], [0.0, 1.0], [[0.0, 1.0], [2.0, 3.0]])
    assert gs(0.5, np.array([0.5]))[0] == pytest.approx(1.5)
    assert gs(0.0, np.array([5.0]))[0] == 1.0
    with pytest.raises(ValueError):
        GridStrategy([0.0], [0.0, 1.0], [[0.0]])


def test_pi_star_table_matches_pointwise(market, geo):
    tab = geometric_pi_star_table(LogShift(1.0), market, geo, n_t=20, n_z=201)
    for t, x in ((0.0, 1.0), (0.5, 0.7)):
        assert tab(t, np.array([x]))[0] == pytest.approx(pi_star_geometric(LogShift(1.0), market, geo, t, x), rel=1e-4)


def test_indifference_constant_payoff(market, geo):
    rep = indifference_check(ConstantPayoff(0.8), market, geo, McConfig(2000, 20, 1))
    assert rep.price == 0.8
    assert rep.gap == 0.0 and rep.passed
    assert rep.lhs.mean_utility == rep.rhs.mean_utility
    assert rep.lhs.std_error == pytest.approx(rep.rhs.std_error, rel=1e-12)


def test_indifference_logshift_small(market, geo):
    rep = indifference_check(LogShift(1.0), market, geo, McConfig(20_000, 200, 3))
    assert rep.passed
    assert rep.allowance == pytest.approx(10 * 0.005)


def test_indifference_gap_shrinks_with_dt(market, geo):
    tab = geometric_pi_star_table(LogShift(1.0), market, geo, n_t=100, n_z=201)
    gaps = [indifference_check(LogShift(1.0), market, geo, McConfig(20_000, n, 5), pi_star_strategy=tab) for n in (25, 50)]
    assert abs(gaps[1].gap) <= abs(gaps[0].gap) + 3 * math.hypot(gaps[0].gap_se, gaps[1].gap_se)


def test_default_levels():
    assert default_levels(0.0) == (1.0, 2.0, 4.0, 8.0)
    assert default_levels(-3.0) == (3.0, 6.0, 12.0, 24.0)


def test_hitting_bounds(market):
    st_, co = hitting_bounds(market, 1.0)
    assert st_ == pytest.approx(math.exp(-1 / (2 * 0.01)))
    assert co == pytest.approx(math.exp(-0.13 / (2 * 0.01)))
    assert hitting_bounds(canonical_market(drift=ConstantDrift(0.0)), 1.0) == (0.0, 0.0)


def test_zero_strategy_never_hits(market, geo):
    rep = admissibility_diagnostics(ConstantStrategy(0.0), market, geo, McConfig(1000, 10, 2))
    assert all(l.p_hat == 0.0 for l in rep.levels)
    assert rep.scaled_nonincreasing


def test_bridge_crossing_matches_reflection_principle(geo):
    # constant pi, zero drift: V is a Brownian motion with volatility pi beta
    m = canonical_market(drift=ConstantDrift(0.0))
    pi, level = 2.0, 0.5
    rep = admissibility_diagnostics(ConstantStrategy(pi), m, geo, McConfig(100_000, 10, 4), levels=(level,))
    s = pi * math.sqrt(0.13)
    exact = 2 * (1 - 0.5 * (1 + math.erf(level / s / math.sqrt(2))))
    l = rep.levels[0]
    assert abs(l.p_hat - exact) < 3 * l.std_error + 0.5 / 100_000


def test_corrected_bound_holds_for_classical_strategy(market, geo):
    rep = admissibility_diagnostics(ConstantStrategy(0.1 / 0.13), market, geo, McConfig(50_000, 50, 6), levels=(1.0, 2.0))
    assert rep.sharp and rep.all_within_corrected


def test_non_constant_strategy_reports_trend_only(market, geo):
    tab = geometric_pi_star_table(LogShift(1.0), market, geo, n_t=20, n_z=101)
    rep = admissibility_diagnostics(tab, market, geo, McConfig(2000, 10, 1))
    assert not rep.sharp and rep.all_within_stated is None and rep.notes


@pytest.mark.slow
def test_logquad_quasi_admissibility_trend(market, geo):
    # bigger drift so the lower levels are actually reached
    m = canonical_market(drift=ConstantDrift(0.5))
    tab = geometric_pi_star_table(LogQuad(0.05), m, geo, n_t=50, n_z=201)
    rep = admissibility_diagnostics(tab, m, geo, McConfig(1_000_000, 50, 13), levels=(2.0, 4.0, 6.0, 8.0))
    assert rep.scaled_nonincreasing
