from dataclasses import replace

import numpy as np
import pytest

from src.core import AffineProfile, StandardizedInfo, standardize
from src.outcome import (condition_on_state, empirical_conditional, obedience_residuals, outcome_moments,
                         sample_conditional, sample_outcome)


def _two_dim_agent(P_theta):
    return StandardizedInfo(P_kernel=np.eye(2)[None, None], P_theta=np.array([P_theta]),
                            root_inv=np.eye(2)[None], mu_theta=0.0, var_theta=1.0)


def test_zero_slopes_give_deterministic_actions(market):
    _, info, _ = market
    std = standardize(info)
    prof = AffineProfile(phi0=np.linspace(0.0, 1.0, std.n), phi=np.zeros((std.n, 1)))
    mom = outcome_moments(std, prof)
    assert np.all(mom.cov_xx == 0.0) and np.all(mom.var_x == 0.0) and np.all(mom.cov_xtheta == 0.0)
    np.testing.assert_allclose(mom.mean_x, prof.phi0)
    cond = condition_on_state(mom, 2.5)
    assert np.all(cond.cond_cov == 0.0)
    np.testing.assert_allclose(cond.cond_mean, prof.phi0)


def test_orthogonal_slope_is_uncorrelated_with_state():
    std = _two_dim_agent([0.0, 1.0])
    mom = outcome_moments(std, AffineProfile(phi0=np.zeros(1), phi=np.array([[1.0, 0.0]])))
    assert mom.cov_xtheta[0] == 0.0
    assert mom.var_x[0] == 1.0


def test_market_moments(solver, market):
    payoff, info, grid = market
    std, _, _, prof = solver.solve_game(payoff, info, grid)
    mom = outcome_moments(std, prof)
    slope = 0.4 / 1.32
    np.testing.assert_allclose(mom.var_x, slope ** 2)
    np.testing.assert_allclose(mom.cov_xtheta, 0.8 * slope)
    np.testing.assert_allclose(mom.cov_xx, 0.64 * slope ** 2)
    np.testing.assert_allclose(np.diag(mom.pointwise_cov()), slope ** 2)


def test_conditioning_at_prior_mean(solver, market):
    std, _, _, prof = solver.solve_game(*market)
    mom = outcome_moments(std, prof)
    cond = condition_on_state(mom, mom.mu_theta)
    np.testing.assert_allclose(cond.cond_mean, mom.mean_x)
    assert np.min(np.linalg.eigvalsh(cond.cond_cov)) >= -1e-12
    np.testing.assert_allclose(cond.cond_cov, cond.cond_cov.T)


def test_obedience_holds_in_equilibrium(solver, game_2d):
    payoff, info, grid = game_2d
    std, _, _, prof = solver.solve_game(payoff, info, grid)
    res1, res2 = obedience_residuals(outcome_moments(std, prof), payoff, grid)
    assert np.max(np.abs(res1)) <= 1e-8
    assert np.max(np.abs(res2)) <= 1e-8


def test_obedience_is_linear_in_means(solver, game_2d):
    payoff, info, grid = game_2d
    std, _, _, prof = solver.solve_game(payoff, info, grid)
    mom = outcome_moments(std, prof)
    bumped = np.array(mom.mean_x)
    bumped[2] += 1.0
    before, _ = obedience_residuals(mom, payoff, grid)
    after, _ = obedience_residuals(replace(mom, mean_x=bumped), payoff, grid)
    assert after[2] - before[2] == pytest.approx(1.0 - payoff.w[2, 2] / grid.n, abs=1e-12)


def test_sampler_is_deterministic(solver, market):
    std, _, _, prof = solver.solve_game(*market)
    mom = outcome_moments(std, prof)
    first = sample_outcome(mom, [0, 3, 5], 500, seed=42)
    second = sample_outcome(mom, [0, 3, 5], 500, seed=42)
    assert first.shape == (500, 4)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, sample_outcome(mom, [0, 3, 5], 500, seed=43))


def test_conditional_sampler_moments(solver, market):
    std, _, _, prof = solver.solve_game(*market)
    mom = outcome_moments(std, prof)
    draws = sample_conditional(mom, 1.0, 200_000, seed=9, subset=[0, 1])
    cond = condition_on_state(mom, 1.0)
    np.testing.assert_allclose(draws.mean(axis=0), cond.cond_mean[:2], atol=5e-3)
    np.testing.assert_allclose(np.cov(draws.T), cond.cond_cov[:2, :2], atol=5e-3)


def test_empirical_conditional_of_zero_covariance(market):
    _, info, _ = market
    std = standardize(info)
    mom = outcome_moments(std, AffineProfile(phi0=np.ones(std.n), phi=np.zeros((std.n, 1))))
    cond = empirical_conditional(mom, 0.5, 1000, seed=1)
    assert np.all(cond.cond_cov == 0.0)
    np.testing.assert_allclose(cond.cond_mean, 1.0)


def test_empirical_conditional_is_seeded(solver, market):
    std, _, _, prof = solver.solve_game(*market)
    mom = outcome_moments(std, prof)
    a = empirical_conditional(mom, 1.0, 5000, seed=3, chunk=1000)
    b = empirical_conditional(mom, 1.0, 5000, seed=3, chunk=1000)
    assert np.array_equal(a.cond_mean, b.cond_mean)
    assert np.array_equal(a.cond_cov, b.cond_cov)


def test_empirical_conditional_needs_two_draws(market):
    std = standardize(market[1])
    mom = outcome_moments(std, AffineProfile(phi0=np.zeros(std.n), phi=np.zeros((std.n, 1))))
    with pytest.raises(ValueError):
        empirical_conditional(mom, 0.0, 1, seed=0)


def test_sampler_subset_limit(market):
    std = standardize(market[1])
    mom = outcome_moments(std, AffineProfile(phi0=np.zeros(std.n), phi=np.zeros((std.n, 1))))
    with pytest.raises(ValueError):
        sample_outcome(mom, list(range(2001)), 10, seed=0)


def test_conditioning_is_homoskedastic_and_affine(solver, game_2d):
    std, _, _, prof = solver.solve_game(*game_2d)
    mom = outcome_moments(std, prof)
    low, mid, high = (condition_on_state(mom, tb) for tb in (-2.0, 0.3, 5.3))
    assert np.array_equal(low.cond_cov, high.cond_cov)
    assert np.array_equal(low.cond_cov, mid.cond_cov)
    step = (high.cond_mean - low.cond_mean) / (5.3 + 2.0)
    np.testing.assert_allclose(mid.cond_mean, low.cond_mean + 2.3 * step, atol=1e-10)
    np.testing.assert_allclose(step, mom.cov_xtheta / mom.var_theta, atol=1e-10)
