"""
Random instance generators for the LQG identification toolkit.
Factor models with idiosyncratic jitter keep every draw jointly PSD by
construction; payoffs are redrawn until the game is well-posed.
"""

from typing import List, Optional, Tuple

import numpy as np

from .config import *
from .core import AgentGrid, CanonicalInfo, InformationStructure, PayoffStructure, make_canonical_info, standardize
from .equilibrium import EquilibriumSolver, build_operator
from .logger import get_logger

logger = get_logger()

MAX_REDRAWS = 50


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _unit_ball_rows(rng: np.random.Generator, n: int, k: int, max_norm: float) -> np.ndarray:
    """n vectors in R^k with norms uniform in [0, max_norm)."""
    dirs = rng.standard_normal((n, k))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * rng.uniform(0.0, max_norm, size=(n, 1))


def random_canonical(n: int, seed=None, var_theta: Optional[float] = None, factors: int = 2,
                     max_correlation: float = 0.95, positive: bool = False) -> CanonicalInfo:
    """
    Random canonical structure with factor-model idiosyncratic noise.

    eps(i) = s(i) (a(i)^T z + sqrt(1 - |a(i)|^2) e(i)) with s(i)^2 = 1 - h(i)^2 var_theta,
    so g(i,j) = s(i) s(j) a(i)^T a(j) off the diagonal and the kernel diagonal
    keeps only the common part s(i)^2 |a(i)|^2.
    """
    rng = _rng(seed)
    var_theta = float(rng.uniform(0.5, 2.0)) if var_theta is None else var_theta
    low = 0.05 if positive else -max_correlation
    rho = rng.uniform(low, max_correlation, size=n)
    h = rho / np.sqrt(var_theta)
    s = np.sqrt(1.0 - rho ** 2)
    a = _unit_ball_rows(rng, n, factors, 0.9)
    common = np.outer(s, s) * (a @ a.T)
    g_off = common - np.diag(np.diag(common))
    return make_canonical_info(h, g_off, var_theta, g_kernel_diag=np.diag(common))


def random_information(n: int, d: int, seed=None, factors: int = 2, var_theta: Optional[float] = None,
                       mu_theta: float = 0.0) -> InformationStructure:
    """
    Random d-dimensional signals S(i) = l(i) theta + B(i) z + e(i).

    z is a vector of common factors and e(i) idiosyncratic noise with a
    positive diagonal covariance, which only enters K_point.
    """
    rng = _rng(seed)
    var_theta = float(rng.uniform(0.5, 2.0)) if var_theta is None else var_theta
    loadings = rng.normal(0.0, 1.0, size=(n, d))
    B = rng.normal(0.0, 0.7, size=(n, d, factors))
    jitter = rng.uniform(0.2, 1.0, size=(n, d))
    return _factor_information(loadings, B, jitter, var_theta, mu_theta, rng.normal(size=(n, d)))


def smooth_information(grid: AgentGrid, d: int = 1, var_theta: float = 1.0) -> InformationStructure:
    """Deterministic factor model whose loadings vary smoothly with the agent's position."""
    x = grid.points
    ks = np.arange(1, d + 1)
    loadings = 0.6 + 0.3 * np.cos(np.pi * np.outer(x, ks))
    B = (0.4 * np.sin(np.pi * np.outer(x, ks) + 0.5))[:, :, None]
    jitter = 0.5 + 0.2 * np.outer(x, np.ones(d))
    return _factor_information(loadings, B, jitter, var_theta, 0.0, np.zeros((grid.n, d)))


def _factor_information(loadings, B, jitter, var_theta, mu_theta, means) -> InformationStructure:
    n, d = loadings.shape
    common = var_theta * np.einsum("ia,jb->ijab", loadings, loadings) + np.einsum("iak,jbk->ijab", B, B)
    idx = np.arange(n)
    K_point = common[idx, idx] + np.einsum("ia,ab->iab", jitter, np.eye(d))
    return InformationStructure(
        d=d,
        mu_theta=mu_theta,
        var_theta=var_theta,
        m=means,
        K_point=K_point,
        K_kernel=common,
        K_theta=var_theta * loadings,
    )


def smooth_payoff(grid: AgentGrid) -> PayoffStructure:
    """Heterogeneous payoff with a smooth interaction kernel."""
    x = grid.points
    b = 1.0 + 0.5 * x
    c = np.sin(np.pi * x)
    w = -0.5 * np.exp(-np.abs(x[:, None] - x[None, :]))
    return PayoffStructure(b=b, c=c, w=w)


def random_payoff(n: int, seed=None, scale: float = 1.0) -> PayoffStructure:
    """b bounded away from zero, Gaussian c and Gaussian interaction kernel."""
    rng = _rng(seed)
    b = rng.uniform(0.5, 1.5, size=n) * rng.choice([-1.0, 1.0], size=n)
    c = rng.normal(size=n)
    w = scale * rng.normal(size=(n, n))
    return PayoffStructure(b=b, c=c, w=w)


def random_game(n: int, d: int, seed=None, solver: Optional[EquilibriumSolver] = None,
                scale: float = 1.0) -> Tuple[PayoffStructure, InformationStructure, AgentGrid]:
    """
    Random well-posed game; payoffs are redrawn until the spectral check passes.

    Returns:
        Tuple (payoff, info, grid)
    """
    rng = _rng(seed)
    solver = solver or EquilibriumSolver()
    grid = AgentGrid.uniform(n)
    info = random_information(n, d, rng)
    std = standardize(info)
    for attempt in range(MAX_REDRAWS):
        payoff = random_payoff(n, rng, scale)
        if solver.spectral_check(build_operator(payoff, std, grid)).well_posed:
            return payoff, info, grid
        logger.debug(f"Redrawing payoff (attempt {attempt + 1})")
    raise RuntimeError(f"No well-posed payoff after {MAX_REDRAWS} draws")


def random_team_path(pool: int, p: int, seed=None, max_size: int = 3) -> List[List[int]]:
    """p teams of 1..max_size distinct agents drawn from range(pool)."""
    rng = _rng(seed)
    teams = []
    for _ in range(p):
        size = int(rng.integers(1, max_size + 1))
        teams.append(sorted(rng.choice(pool, size=size, replace=False).tolist()))
    return teams
