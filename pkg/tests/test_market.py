import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core import AgentGrid, canonical_to_info, standardize
from src.errors import ZeroExposure
from src.generators import random_canonical, random_information
from src.market import (MarketScenario, closed_form_slope, general_revenue, market_payoff, obedience_revenue,
                        optimal_tax, pipeline_revenue, policy_roundtrip, revenue_lower_bound, revenue_rate,
                        revenue_sweep, stated_revenue_rate, tax_revenue)

from .conftest import market_case

GRID_21 = np.linspace(0.0, 1.0, 21)


def test_market_payoff_extremes():
    untaxed = market_payoff(0.0, 3)
    np.testing.assert_allclose(untaxed.b, 1.0)
    np.testing.assert_allclose(untaxed.w, -1.0)
    full = market_payoff(1.0, 3)
    assert np.all(full.b == 0.0) and np.all(full.w == 0.0)


def test_closed_form_values():
    assert closed_form_slope(0.5, 0.8) == pytest.approx(0.303030303, abs=1e-9)
    assert tax_revenue(0.5, 0.8) == pytest.approx(0.0459137, abs=1e-7)


@pytest.mark.parametrize("tau, h", [(0.5, 0.8), (0.2, 0.3), (0.9, 1.0)])
def test_revenue_routes_agree(solver, tau, h):
    s = MarketScenario(tau=tau, h=h, grid=AgentGrid.uniform(20))
    expected = tax_revenue(tau, h)
    assert pipeline_revenue(s, solver) == pytest.approx(expected, abs=1e-8)
    assert obedience_revenue(s, solver) == pytest.approx(expected, abs=1e-8)
    _, info, grid = market_case(tau, h)
    assert general_revenue(tau, info, grid, solver) == pytest.approx(expected, abs=1e-8)


def test_scenario_bounds():
    with pytest.raises(ValueError):
        MarketScenario(tau=1.2, h=0.5, grid=AgentGrid.uniform(4))
    with pytest.raises(ValueError):
        MarketScenario(tau=0.5, h=-0.1, grid=AgentGrid.uniform(4))


def test_revenue_rates():
    assert stated_revenue_rate(0.5) == pytest.approx(1.0 / 12.0)
    taus = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(revenue_rate(taus), tax_revenue(taus, 1.0), atol=1e-15)


def test_stated_rate_exceeds_fully_informative_revenue():
    assert stated_revenue_rate(0.5) > tax_revenue(0.5, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_lower_bound_holds(seed, tau):
    n = 12
    grid = AgentGrid.uniform(n)
    info = canonical_to_info(random_canonical(n, seed=seed, var_theta=1.0, positive=True), grid)
    bound, r_tau = revenue_lower_bound(tau, info, grid)
    assert r_tau == pytest.approx(revenue_rate(tau))
    assert bound <= general_revenue(tau, info, grid) + 1e-12


def test_optimal_tax_without_exposure():
    best = optimal_tax(0.0)
    assert best.zero_revenue
    assert best.tau_star == 0.0 and best.revenue_star == 0.0


def test_optimal_tax_matches_brute_force():
    taus = np.linspace(0.0, 1.0, 1_000_001)
    brute = taus[np.argmax(tax_revenue(taus, 1.0))]
    best = optimal_tax(1.0)
    assert best.unimodal and not best.zero_revenue
    assert best.tau_star == pytest.approx(brute, abs=1e-6)


def test_optimal_tax_depends_on_exposure():
    assert abs(optimal_tax(0.3).tau_star - optimal_tax(0.9).tau_star) > 1e-3


def test_optimal_tax_resolution_floor():
    with pytest.raises(ValueError):
        optimal_tax(0.5, resolution=1e-7)


def test_policy_roundtrip_recovers_exposure(solver):
    report = policy_roundtrip(MarketScenario(tau=0.0, h=0.8, grid=AgentGrid.uniform(20)), solver=solver)
    assert report.h_error <= 1e-8
    assert report.passed
    assert report.as_dict()["tau_star_hat"] == report.tau_star_hat


def test_policy_roundtrip_without_exposure(solver):
    with pytest.raises(ZeroExposure):
        policy_roundtrip(MarketScenario(tau=0.5, h=0.0, grid=AgentGrid.uniform(10)), solver=solver)


def test_revenue_sweep_marks_optimum(solver):
    frame = revenue_sweep([0.5], [0.0, 0.5, 1.0], n=10, solver=solver)
    assert list(frame.columns) == ["h", "tau", "revenue_closed_form", "revenue_pipeline", "lower_bound", "tau_star"]
    assert len(frame) == 4
    assert frame["tau_star"].sum() == 1
    np.testing.assert_allclose(frame["revenue_pipeline"], frame["revenue_closed_form"], atol=1e-8)
    assert (frame["lower_bound"] <= frame["revenue_closed_form"] + 1e-15).all()


@pytest.mark.parametrize("tau", GRID_21)
@pytest.mark.parametrize("h", GRID_21)
def test_market_grid_matches_closed_form(solver, tau, h):
    s = MarketScenario(tau=float(tau), h=float(h), grid=AgentGrid.uniform(100))
    _, _, wp, prof = solver.solve_game(*market_case(tau, h, n=100))
    assert wp.well_posed
    np.testing.assert_allclose(prof.phi[:, 0], closed_form_slope(tau, h), atol=1e-8)
    expected = tax_revenue(tau, h)
    assert pipeline_revenue(s, solver) == pytest.approx(expected, abs=1e-8)
    assert obedience_revenue(s, solver) == pytest.approx(expected, abs=1e-8)


def test_lower_bound_scales_with_prior_variance(solver):
    n = 12
    grid = AgentGrid.uniform(n)
    info = random_information(n, 3, seed=11)
    assert info.var_theta != 1.0
    bound, r_tau = revenue_lower_bound(0.5, info, grid)
    std = standardize(info)
    assert bound == pytest.approx(r_tau * info.var_theta * np.mean(np.sum(std.P_theta ** 2, axis=1)))
    assert bound <= general_revenue(0.5, info, grid, solver) + 1e-9


@pytest.mark.parametrize("seed", range(50))
def test_lower_bound_on_random_signals(solver, seed):
    n = 12
    grid = AgentGrid.uniform(n)
    info = random_information(n, 1 + seed % 3, seed=seed)
    for tau in np.linspace(0.1, 0.9, 9):
        bound, _ = revenue_lower_bound(tau, info, grid)
        assert bound <= general_revenue(tau, info, grid, solver) + 1e-9
