from dataclasses import replace

import numpy as np
import pytest

from src.canonical import canonical_standardized
from src.core import AffineProfile, AgentGrid, canonical_to_info, make_canonical_info
from src.errors import DegenerateStates, InconsistentInput, SingularTeamCovariance, ZeroExposure, ZeroVariance
from src.generators import random_canonical, random_team_path
from src.identification import (STAGE_CROSS_STATE_MOMENT, STAGE_SLOPE_MAGNITUDE,
                                first_order_uncertainty, higher_order_uncertainty,
                                identify, nested_projection_oracle, resolve_signs_positive)
from src.outcome import ConditionalOutcome, condition_on_state, outcome_moments

from .conftest import market_case

PRIOR = (0.0, 1.0)


def _conditionals(std, prof, theta_bars=(0.0, 1.0)):
    mom = outcome_moments(std, prof)
    return [condition_on_state(mom, tb) for tb in theta_bars]


def _canonical_outcome(canon, phi0, phi1, theta_bars=(0.0, 1.0), mu_theta=0.0):
    std = canonical_standardized(canon, mu_theta)
    return _conditionals(std, AffineProfile(phi0=phi0, phi=phi1[:, None]), theta_bars)


def test_market_round_trip(solver):
    std, _, _, prof = solver.solve_game(*market_case(0.5, 0.6))
    idc = identify(*_conditionals(std, prof), PRIOR)
    np.testing.assert_allclose(idc.abs_h, 0.6, atol=1e-8)
    np.testing.assert_allclose(idc.g_diag, 0.64, atol=1e-8)
    off = ~np.eye(idc.n, dtype=bool)
    np.testing.assert_allclose(idc.abs_g[off], 0.0, atol=1e-8)
    np.testing.assert_allclose(idc.abs_phi1, prof.phi[:, 0], atol=1e-8)
    np.testing.assert_allclose(idc.phi0, prof.phi0, atol=1e-12)


def test_uninformative_signals_identify_zero_exposure():
    n = 3
    same = np.array([0.2, -0.1, 0.4])
    c1 = ConditionalOutcome(theta_bar=0.0, cond_mean=same, cond_cov=np.eye(n))
    c2 = ConditionalOutcome(theta_bar=1.0, cond_mean=same, cond_cov=np.eye(n))
    idc = identify(c1, c2, PRIOR)
    assert np.all(idc.cross_phih == 0.0)
    np.testing.assert_allclose(idc.abs_h, 0.0)
    np.testing.assert_allclose(idc.abs_phi1, 1.0)
    with pytest.raises(ZeroExposure):
        resolve_signs_positive(idc)


def test_sign_pair_invariance():
    canon = random_canonical(6, seed=8, var_theta=1.5)
    phi0 = np.linspace(-1.0, 1.0, 6)
    phi1 = np.linspace(0.5, 1.5, 6)
    flipped = replace(canon, h=-canon.h)
    a = identify(*_canonical_outcome(canon, phi0, phi1), (0.0, 1.5))
    b = identify(*_canonical_outcome(flipped, phi0, -phi1), (0.0, 1.5))
    for field in ("phi0", "abs_phi1", "abs_h", "abs_g", "cross_phih", "cross_phig"):
        np.testing.assert_allclose(getattr(a, field), getattr(b, field), atol=1e-12)


def test_positive_generator_recovered():
    canon = random_canonical(8, seed=21, var_theta=1.2, positive=True)
    phi1 = np.linspace(0.3, 1.1, 8)
    idc = identify(*_canonical_outcome(canon, np.zeros(8), phi1, theta_bars=(-0.5, 1.5)), (0.0, 1.2))
    h, g, recovered = resolve_signs_positive(idc)
    np.testing.assert_allclose(h, canon.h, atol=1e-8)
    np.testing.assert_allclose(g, canon.g, atol=1e-8)
    np.testing.assert_allclose(recovered, phi1, atol=1e-8)


def test_negative_slope_recovered_with_positive_exposure():
    canon = random_canonical(5, seed=4, var_theta=1.0, positive=True)
    phi1 = np.array([0.7, -0.4, 0.9, -1.2, 0.5])
    idc = identify(*_canonical_outcome(canon, np.zeros(5), phi1), PRIOR)
    h, g, recovered = resolve_signs_positive(idc)
    np.testing.assert_allclose(recovered, phi1, atol=1e-8)
    np.testing.assert_allclose(g, canon.g, atol=1e-8)


def test_intercept_read_off_and_combined():
    n = 20
    prior = (0.7, 1.0)
    canon = make_canonical_info(np.full(n, 0.6), np.zeros((n, n)), 1.0)
    phi0 = np.linspace(0.1, 0.9, n)
    phi1 = np.full(n, 0.25)
    direct = identify(*_canonical_outcome(canon, phi0, phi1, theta_bars=(0.7, 2.0), mu_theta=0.7), prior)
    combined = identify(*_canonical_outcome(canon, phi0, phi1, theta_bars=(-1.0, 2.0), mu_theta=0.7), prior)
    np.testing.assert_allclose(direct.phi0, phi0, atol=1e-12)
    np.testing.assert_allclose(combined.phi0, phi0, atol=1e-10)


def test_equal_states_rejected(solver):
    std, _, _, prof = solver.solve_game(*market_case(0.5, 0.6))
    c1, _ = _conditionals(std, prof)
    with pytest.raises(DegenerateStates):
        identify(c1, c1, PRIOR)


def test_silent_agents_rejected():
    c1 = ConditionalOutcome(theta_bar=0.0, cond_mean=np.zeros(2), cond_cov=np.zeros((2, 2)))
    c2 = ConditionalOutcome(theta_bar=1.0, cond_mean=np.zeros(2), cond_cov=np.zeros((2, 2)))
    with pytest.raises(ZeroVariance):
        identify(c1, c2, PRIOR)


@pytest.mark.parametrize("shrink, stage", [(0.5, STAGE_CROSS_STATE_MOMENT), (5e-6, STAGE_SLOPE_MAGNITUDE)])
def test_inconsistent_moments_name_their_stage(shrink, stage):
    # conditional variance falls between the states while the means stay put
    c1 = ConditionalOutcome(theta_bar=0.0, cond_mean=np.zeros(1), cond_cov=np.array([[1.0]]))
    c2 = ConditionalOutcome(theta_bar=1.0, cond_mean=np.zeros(1), cond_cov=np.array([[1.0 - shrink]]))
    with pytest.raises(InconsistentInput) as excinfo:
        identify(c1, c2, PRIOR)
    assert excinfo.value.stage == stage
    assert stage in str(excinfo.value)


def test_first_order_uncertainty_single_signal():
    canon = make_canonical_info(np.full(4, 0.6), np.zeros((4, 4)), 1.0)
    assert first_order_uncertainty(canon, [2]) == pytest.approx(0.64, abs=1e-12)
    assert higher_order_uncertainty(canon, PRIOR, [[2]]) == pytest.approx(0.64, abs=1e-12)


def test_second_order_uncertainty_iid():
    canon = make_canonical_info(np.full(4, 0.6), np.zeros((4, 4)), 1.0)
    assert higher_order_uncertainty(canon, PRIOR, [[0], [1]]) == pytest.approx(0.313344, abs=1e-12)


def test_second_order_from_identified_cross_terms(solver):
    std, _, _, prof = solver.solve_game(*market_case(0.5, 0.6))
    idc = identify(*_conditionals(std, prof), PRIOR)
    assert higher_order_uncertainty(idc, PRIOR, [[0], [1]]) == pytest.approx(0.313344, abs=1e-10)


def test_conditioning_on_own_team_leaves_nothing():
    canon = random_canonical(7, seed=2, var_theta=1.0)
    assert abs(higher_order_uncertainty(canon, None, [[1, 4], [1, 4]])) <= 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_identified_form_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 9
    canon = random_canonical(n, seed=rng, var_theta=None)
    phi1 = rng.uniform(0.3, 1.5, n) * rng.choice([-1.0, 1.0], n)
    idc = identify(*_canonical_outcome(canon, np.zeros(n), phi1), (0.0, canon.var_theta))
    info = canonical_to_info(canon, AgentGrid.uniform(n))
    teams = random_team_path(n, int(rng.integers(1, 5)), seed=rng)
    oracle = nested_projection_oracle(info, teams)
    assert higher_order_uncertainty(idc, None, teams) == pytest.approx(oracle, abs=1e-9)
    assert higher_order_uncertainty(canon, None, teams) == pytest.approx(oracle, abs=1e-9)


def test_overlapping_teams_agree():
    canon = random_canonical(6, seed=13, var_theta=1.0)
    info = canonical_to_info(canon, AgentGrid.uniform(6))
    teams = [[0, 1, 2], [1, 2], [2]]
    assert higher_order_uncertainty(canon, None, teams) == pytest.approx(nested_projection_oracle(info, teams),
                                                                         abs=1e-10)


def test_oracle_single_team_is_schur_complement():
    canon = random_canonical(5, seed=6, var_theta=1.0)
    info = canonical_to_info(canon, AgentGrid.uniform(5))
    A = info.pointwise_block([0, 3])
    b = info.K_theta[[0, 3]].reshape(-1)
    expected = 1.0 - b @ np.linalg.solve(A, b)
    assert nested_projection_oracle(info, [[0, 3]]) == pytest.approx(expected, abs=1e-12)


def test_perfectly_correlated_team_is_singular():
    canon = make_canonical_info(np.ones(3), np.zeros((3, 3)), 1.0)
    with pytest.raises(SingularTeamCovariance):
        higher_order_uncertainty(canon, None, [[0, 1]])


def test_team_checks():
    canon = make_canonical_info(np.full(3, 0.5), np.zeros((3, 3)), 1.0)
    with pytest.raises(ValueError):
        higher_order_uncertainty(canon, None, [])
    with pytest.raises(IndexError):
        higher_order_uncertainty(canon, None, [[5]])


@pytest.mark.parametrize("seed", range(30))
def test_identification_invariant_to_state_pair(seed):
    rng = np.random.default_rng(100 + seed)
    n = 8
    canon = random_canonical(n, seed=rng, var_theta=None)
    phi0 = rng.normal(size=n)
    phi1 = rng.uniform(0.3, 1.5, n) * rng.choice([-1.0, 1.0], n)
    prior = (0.0, canon.var_theta)
    results = [identify(*_canonical_outcome(canon, phi0, phi1, theta_bars=pair), prior)
               for pair in [(0.0, 1.0), (0.3, 5.3), (-2.0, 2.0)]]
    for idc in results:
        np.testing.assert_allclose(idc.abs_h, np.abs(canon.h), atol=1e-8)
        np.testing.assert_allclose(idc.abs_g, np.abs(canon.g), atol=1e-8)
        np.testing.assert_allclose(idc.abs_phi1, np.abs(phi1), atol=1e-8)
        np.testing.assert_allclose(idc.phi0, phi0, atol=1e-8)
    for other in results[1:]:
        for field in ("phi0", "abs_phi1", "abs_h", "abs_g", "cross_phih", "cross_phig"):
            np.testing.assert_allclose(getattr(other, field), getattr(results[0], field), atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_first_order_uncertainty_shrinks_with_team(seed):
    canon = random_canonical(10, seed=seed, var_theta=1.0)
    nested = [[3], [3, 7], [1, 3, 7], [0, 1, 3, 7, 9]]
    values = [first_order_uncertainty(canon, team) for team in nested]
    assert values[0] <= canon.var_theta + 1e-12
    assert np.all(np.diff(values) <= 1e-12)
    assert values[-1] >= -1e-12
