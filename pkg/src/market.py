"""
Market module for the LQG identification toolkit.
Cournot-style competition under an exercise tax: closed forms, revenue
sweeps, the optimal tax and the observe-identify-predict round trip.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from .config import *
from .core import AgentGrid, InformationStructure, PayoffStructure, canonical_to_info, make_canonical_info, standardize
from .equilibrium import EquilibriumSolver
from .errors import DimensionMismatch, ZeroExposure
from .identification import identify, resolve_signs_positive
from .logger import get_logger
from .outcome import condition_on_state, outcome_moments

logger = get_logger()

MARKET_MU_THETA = 0.0
MARKET_VAR_THETA = 1.0


@dataclass(frozen=True)
class MarketScenario:
    """Symmetric market with tax rate tau and exposure h; theta ~ N(0, 1)."""

    tau: float
    h: float
    grid: AgentGrid

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0.0 <= self.h <= 1.0:
            raise ValueError(f"h must lie in [0, 1], got {self.h}")


@dataclass(frozen=True)
class OptimalTax:
    tau_star: float
    revenue_star: float
    unimodal: bool
    zero_revenue: bool


@dataclass(frozen=True)
class RoundtripReport:
    """Identified exposure and the tax policy it implies, against the truth."""

    h: float
    h_hat: float
    tau_star: float
    tau_star_hat: float
    revenue_star: float
    revenue_star_hat: float
    h_error: float
    tau_error: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def market_payoff(tau: float, n: int) -> PayoffStructure:
    """w = -(1 - tau), b = 1 - tau, c = 0."""
    return PayoffStructure.constant(n, b=1.0 - tau, c=0.0, w=-(1.0 - tau))


def market_game(s: MarketScenario) -> Tuple[PayoffStructure, InformationStructure]:
    """Payoff and i.i.d. canonical information of a market scenario."""
    n = s.grid.n
    canon = make_canonical_info(np.full(n, s.h), np.zeros((n, n)), MARKET_VAR_THETA)
    return market_payoff(s.tau, n), canonical_to_info(canon, s.grid, MARKET_MU_THETA)


def closed_form_slope(tau, h):
    """Symmetric equilibrium slope (1 - tau) h / (1 + (1 - tau) h^2)."""
    return (1.0 - tau) * h / (1.0 + (1.0 - tau) * h ** 2)


def tax_revenue(tau, h):
    """Expected revenue tau (1 - tau)^2 h^2 / (1 + (1 - tau) h^2)^2."""
    return tau * (1.0 - tau) ** 2 * h ** 2 / (1.0 + (1.0 - tau) * h ** 2) ** 2


def general_revenue(tau: float, info: InformationStructure, grid: AgentGrid,
                    solver: Optional[EquilibriumSolver] = None) -> float:
    """
    Expected revenue tau * mean_i Var(X(i)) of the market game on any information structure.

    Requires zero prior mean so intercepts vanish.
    """
    if info.mu_theta != 0.0:
        raise ValueError(f"Revenue formula needs mu_theta = 0, got {info.mu_theta}")
    if info.n != grid.n:
        raise DimensionMismatch(f"Information has {info.n} agents, grid {grid.n}")
    solver = solver or EquilibriumSolver()
    _, _, _, prof = solver.solve_game(market_payoff(tau, grid.n), info, grid)
    return float(tau * np.mean(np.sum(prof.phi ** 2, axis=1)))


def pipeline_revenue(s: MarketScenario, solver: Optional[EquilibriumSolver] = None) -> float:
    """Revenue from the generic route: solve, take moments, average variances."""
    solver = solver or EquilibriumSolver()
    payoff, info = market_game(s)
    std, _, _, prof = solver.solve_game(payoff, info, s.grid)
    mom = outcome_moments(std, prof)
    return float(s.tau * np.mean(mom.var_x))


def obedience_revenue(s: MarketScenario, solver: Optional[EquilibriumSolver] = None) -> float:
    """Revenue with Var(X(i)) replaced by b(i) Cov(X(i), theta) + sum_j w(i,j) Cov(X(i), X(j)) / n."""
    solver = solver or EquilibriumSolver()
    payoff, info = market_game(s)
    std, _, _, prof = solver.solve_game(payoff, info, s.grid)
    mom = outcome_moments(std, prof)
    volatility = payoff.b * mom.cov_xtheta + s.grid.weight * np.sum(payoff.w * mom.cov_xx, axis=1)
    return float(s.tau * np.mean(volatility))


def stated_revenue_rate(tau):
    """tau (1 - tau)^2 / (2 - tau); see revenue_rate for the rate that bounds revenue."""
    return tau * (1.0 - tau) ** 2 / (2.0 - tau)


def revenue_rate(tau):
    """
    tau (1 - tau)^2 / (2 - tau)^2.

    Slopes solve phi + (1 - tau) P phi / n = (1 - tau) sigma_theta P_theta with
    P / n having eigenvalues in [0, 1], so |phi| >= (1 - tau) sigma_theta |P_theta| / (2 - tau).
    Tight for fully informative canonical signals.
    """
    return tau * (1.0 - tau) ** 2 / (2.0 - tau) ** 2


def revenue_lower_bound(tau: float, info: InformationStructure, grid: AgentGrid) -> Tuple[float, float]:
    """
    Lower bound on expected revenue from signal informativeness alone.

    Slopes are forced by sigma_theta * b * P_theta, so the bound carries the
    prior variance.

    Returns:
        Tuple (bound, r_tau) with bound = r_tau * var_theta * mean_i |P_theta(i)|^2
    """
    if info.n != grid.n:
        raise DimensionMismatch(f"Information has {info.n} agents, grid {grid.n}")
    std = standardize(info)
    r_tau = float(revenue_rate(tau))
    bound = r_tau * std.var_theta * float(np.mean(np.sum(std.P_theta ** 2, axis=1)))
    return bound, r_tau


def optimal_tax(h: float, resolution: float = TAX_RESOLUTION,
                prescan_points: int = TAX_PRESCAN_POINTS) -> OptimalTax:
    """
    Revenue-maximizing tax rate by golden-section search.

    A grid pre-scan locates the bracket and checks that revenue rises then
    falls; violations are flagged, not assumed away.

    Args:
        h: Exposure
        resolution: Target accuracy in tau (at least 1e-6)

    Returns:
        OptimalTax with unimodality and zero-revenue flags
    """
    if resolution < 1e-6:
        raise ValueError(f"resolution must be at least 1e-6, got {resolution}")
    taus = np.linspace(0.0, 1.0, prescan_points)
    revenue = tax_revenue(taus, h)

    if np.max(revenue) <= 0.0:
        logger.warning(f"Revenue vanishes for every tax rate at h={h:g}")
        return OptimalTax(tau_star=0.0, revenue_star=0.0, unimodal=True, zero_revenue=True)

    k = int(np.argmax(revenue))
    steps = np.diff(revenue)
    slack = 1e-15 * float(np.max(revenue))
    unimodal = bool(np.all(steps[:k] >= -slack) and np.all(steps[k:] <= slack))
    if not unimodal:
        logger.warning(f"Revenue curve at h={h:g} is not unimodal on the pre-scan grid")

    if k == 0 or k == prescan_points - 1:
        return OptimalTax(tau_star=float(taus[k]), revenue_star=float(revenue[k]),
                          unimodal=unimodal, zero_revenue=False)

    result = minimize_scalar(lambda t: -tax_revenue(t, h), bracket=(taus[k - 1], taus[k], taus[k + 1]),
                             method="golden", options={"xtol": resolution / 2.0})
    tau_star = float(result.x)
    logger.debug(f"Optimal tax at h={h:g}: tau*={tau_star:.8f} after {result.nit} iterations")
    return OptimalTax(tau_star=tau_star, revenue_star=float(tax_revenue(tau_star, h)),
                      unimodal=unimodal, zero_revenue=False)


def policy_roundtrip(s: MarketScenario, theta_bars: Tuple[float, float] = DEFAULT_THETA_BARS,
                     solver: Optional[EquilibriumSolver] = None) -> RoundtripReport:
    """
    Observe conditionals at the current tax, identify h, and re-optimize the tax.

    Args:
        s: Market scenario at the status-quo tax rate
        theta_bars: Two distinct conditioning states

    Returns:
        RoundtripReport
    """
    if s.h <= ZERO_EXPOSURE_TOL:
        raise ZeroExposure(f"Exposure h={s.h:g} leaves nothing to identify")
    solver = solver or EquilibriumSolver()
    payoff, info = market_game(s)
    std, _, _, prof = solver.solve_game(payoff, info, s.grid)
    mom = outcome_moments(std, prof)

    idc = identify(condition_on_state(mom, theta_bars[0]), condition_on_state(mom, theta_bars[1]),
                   (MARKET_MU_THETA, MARKET_VAR_THETA))
    h_vec, _, _ = resolve_signs_positive(idc)
    h_hat = float(np.mean(h_vec))

    truth = optimal_tax(s.h)
    predicted = optimal_tax(h_hat)
    h_error = float(np.max(np.abs(h_vec - s.h)))
    tau_error = abs(predicted.tau_star - truth.tau_star)
    passed = h_error <= ROUNDTRIP_H_TOL and tau_error <= ROUNDTRIP_TAU_TOL
    logger.info(f"Round trip at tau0={s.tau:g}: h={s.h:g}, h_hat={h_hat:.10f}, "
                f"tau*={truth.tau_star:.6f}, tau*_hat={predicted.tau_star:.6f}")
    return RoundtripReport(h=s.h, h_hat=h_hat, tau_star=truth.tau_star, tau_star_hat=predicted.tau_star,
                           revenue_star=truth.revenue_star, revenue_star_hat=predicted.revenue_star,
                           h_error=h_error, tau_error=tau_error, passed=passed)


def revenue_sweep(h_values: Sequence[float], taus: Sequence[float], n: int = DEFAULT_GRID_SIZE,
                  solver: Optional[EquilibriumSolver] = None) -> pd.DataFrame:
    """
    Revenue curves over tax rates for several exposures.

    Each h contributes one row per tau plus one marker row at its optimal
    tax (tau_star = True).

    Returns:
        DataFrame with columns h, tau, revenue_closed_form, revenue_pipeline, lower_bound, tau_star
    """
    solver = solver or EquilibriumSolver()
    grid = AgentGrid.uniform(n)
    rows = []
    for h in h_values:
        logger.info(f"Sweeping {len(taus)} tax rates at h={h:g}")
        best = optimal_tax(h)
        points = [(float(t), False) for t in taus] + [(best.tau_star, True)]
        for tau, marker in points:
            s = MarketScenario(tau=tau, h=float(h), grid=grid)
            rows.append({
                "h": float(h),
                "tau": tau,
                "revenue_closed_form": float(tax_revenue(tau, h)),
                "revenue_pipeline": pipeline_revenue(s, solver),
                "lower_bound": float(revenue_rate(tau)) * float(h) ** 2,
                "tau_star": marker,
            })
    return pd.DataFrame(rows)
