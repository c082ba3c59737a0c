"""
Canonicalization module for the LQG identification toolkit.
Builds the observationally equivalent canonical structure of an equilibrium
and verifies that it reproduces the outcome and solves the same game.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .config import *
from .core import (AffineProfile, AgentGrid, CanonicalInfo, PayoffStructure, StandardizedInfo,
                   canonical_to_info, standardize)
from .equilibrium import build_operator
from .errors import DimensionMismatch, ZeroSlope
from .logger import get_logger
from .outcome import outcome_moments

logger = get_logger()


@dataclass
class EquivalenceReport:
    """Discrepancies between the outcome moments of two (information, profile) pairs."""

    passed: bool
    max_discrepancy: float
    table: pd.DataFrame


def canonicalize(std: StandardizedInfo, prof: AffineProfile, var_theta: Optional[float] = None,
                 pd_tol: float = PD_TOL) -> Tuple[CanonicalInfo, AffineProfile]:
    """
    Collapse each agent's signal onto the direction of its equilibrium slope.

    With u(i) = phi(i)/|phi(i)|:
        h(i)   = u(i)^T P_theta(i) / sigma_theta
        g(i,j) = u(i)^T (P(i,j) - P_theta(i) P_theta(j)^T) u(j)
    and the canonical profile keeps phi0 and uses slopes |phi(i)|.

    Args:
        std: Standardized information structure
        prof: Affine profile with nonzero slopes
        var_theta: Prior state variance; defaults to std.var_theta
        pd_tol: Slopes with norm below this raise ZeroSlope

    Returns:
        Tuple (canonical structure, canonical profile)
    """
    if prof.n != std.n or prof.d != std.d:
        raise DimensionMismatch(f"Profile shape ({prof.n}, {prof.d}) does not match information ({std.n}, {std.d})")
    var_theta = std.var_theta if var_theta is None else var_theta
    sigma = np.sqrt(var_theta)

    norms = prof.slope_norms()
    if norms.size and np.min(norms) < pd_tol:
        i = int(np.argmin(norms))
        raise ZeroSlope(f"Agent {i} has slope norm {norms[i]:.3e}; canonical form needs nonzero slopes")

    u = prof.phi / norms[:, None]
    loading = np.sum(u * std.P_theta, axis=1)
    h = loading / sigma

    g_kernel = np.einsum("ia,ijab,jb->ij", u, std.P_kernel, u) - np.outer(loading, loading)
    g_kernel = 0.5 * (g_kernel + g_kernel.T)
    g = np.array(g_kernel)
    g[np.diag_indices(std.n)] = 1.0 - loading ** 2

    canon = CanonicalInfo(h=h, g=g, var_theta=var_theta, g_kernel_diag=np.diag(g_kernel))
    logger.debug(f"Canonicalized {std.n} agents (d={std.d}); exposure range [{h.min():.4f}, {h.max():.4f}]")
    return canon, AffineProfile(phi0=prof.phi0, phi=norms[:, None])


def canonical_exposure(std: StandardizedInfo, prof: AffineProfile, pd_tol: float = PD_TOL) -> np.ndarray:
    """Exposure h(i) of the canonical form; NaN where the slope vanishes."""
    norms = prof.slope_norms()
    h = np.full(prof.n, np.nan)
    ok = norms >= pd_tol
    h[ok] = np.sum(prof.phi[ok] * std.P_theta[ok], axis=1) / (norms[ok] * std.sigma_theta)
    return h


def canonical_standardized(canon: CanonicalInfo, mu_theta: float = 0.0) -> StandardizedInfo:
    """Standardized form of a canonical structure (unit own variances)."""
    return standardize(canonical_to_info(canon, AgentGrid.uniform(canon.n), mu_theta))


def verify_equivalence(std: StandardizedInfo, prof: AffineProfile, canon_std: StandardizedInfo,
                       canon_prof: AffineProfile, prior: Optional[Tuple[float, float]] = None,
                       tol: float = NORMALIZATION_TOL) -> EquivalenceReport:
    """
    Compare the outcome moments induced by two pairs.

    Returns:
        EquivalenceReport; passes when every discrepancy is at most tol
    """
    if prof.n != canon_prof.n:
        raise DimensionMismatch(f"Profiles cover {prof.n} and {canon_prof.n} agents")
    left = outcome_moments(std, prof, prior)
    right = outcome_moments(canon_std, canon_prof, prior)

    quantities = {
        "mean_x": (left.mean_x, right.mean_x),
        "var_x": (left.var_x, right.var_x),
        "cov_xx": (left.pointwise_cov(), right.pointwise_cov()),
        "cov_xx_kernel": (left.cov_xx, right.cov_xx),
        "cov_xtheta": (left.cov_xtheta, right.cov_xtheta),
    }
    table = pd.DataFrame(
        [{"quantity": name, "discrepancy": float(np.max(np.abs(a - b), initial=0.0))}
         for name, (a, b) in quantities.items()]
    )
    worst = float(table["discrepancy"].max())
    passed = worst <= tol
    if passed:
        logger.debug(f"Outcome equivalence holds (max discrepancy {worst:.3e})")
    else:
        logger.warning(f"Outcome equivalence fails (max discrepancy {worst:.3e})")
    return EquivalenceReport(passed=passed, max_discrepancy=worst, table=table)


def verify_canonical_equilibrium(payoff: PayoffStructure, canon: CanonicalInfo, canon_prof: AffineProfile,
                                 grid: AgentGrid, mu_theta: float = 0.0) -> float:
    """Sup-norm residual of canon_prof in the equilibrium equation of (b, c, w, canon)."""
    op = build_operator(payoff, standardize(canonical_to_info(canon, grid, mu_theta)), grid)
    residual = op.residual_norm(canon_prof)
    logger.debug(f"Canonical equilibrium residual {residual:.3e}")
    return residual
