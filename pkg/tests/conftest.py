from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from src.core import AgentGrid, canonical_to_info, make_canonical_info
from src.equilibrium import EquilibriumSolver
from src.generators import random_game
from src.logger import setup_logger
from src.market import market_payoff

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
BATTERY_SEEDS = range(50)


@pytest.fixture(scope="session", autouse=True)
def quiet_logs():
    setup_logger("WARNING")


@pytest.fixture
def solver():
    return EquilibriumSolver()


def market_case(tau, h, n=20, var_theta=1.0):
    """(payoff, info, grid) of the symmetric market with i.i.d. canonical noise."""
    grid = AgentGrid.uniform(n)
    canon = make_canonical_info(np.full(n, h), np.zeros((n, n)), var_theta)
    return market_payoff(tau, n), canonical_to_info(canon, grid), grid


@pytest.fixture
def market():
    return market_case(0.5, 0.8)


@lru_cache(maxsize=None)
def battery_game(seed):
    """Random well-posed game on 50 agents; signal dimension cycles through 1, 2, 3."""
    return random_game(50, 1 + seed % 3, seed=seed)


@pytest.fixture
def game_2d(solver):
    """Small random well-posed game with two-dimensional signals."""
    return random_game(6, 2, seed=11, solver=solver, scale=0.8)


@pytest.fixture
def scenarios_dir():
    return SCENARIOS
