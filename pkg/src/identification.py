"""
Identification module for the LQG identification toolkit.
Recovers the canonical structure (up to sign) from two conditional action
distributions and computes higher-order uncertainty along team paths.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .config import *
from .core import CanonicalInfo, InformationStructure
from .errors import (DegenerateStates, DimensionMismatch, InconsistentInput, SingularTeamCovariance,
                     ZeroExposure, ZeroVariance)
from .logger import get_logger
from .outcome import ConditionalOutcome

logger = get_logger()

# Stages reported by InconsistentInput
STAGE_CONDITIONAL_COVARIANCE = "conditional_covariance"
STAGE_CROSS_STATE_MOMENT = "cross_state_moment"
STAGE_SLOPE_MAGNITUDE = "slope_magnitude"


@dataclass(frozen=True)
class IdentifiedCanonical:
    """
    What two conditional distributions reveal about the canonical structure.

    Magnitudes are identified; the cross terms phi1(i) h(i) and
    phi1(i) phi1(j) g(i,j) are identified with their signs.
    """

    phi0: np.ndarray
    abs_phi1: np.ndarray
    abs_h: np.ndarray
    abs_g: np.ndarray
    cross_phih: np.ndarray
    cross_phig: np.ndarray
    mu_theta: float
    var_theta: float

    @property
    def n(self) -> int:
        return self.phi0.shape[0]

    @property
    def g_diag(self) -> np.ndarray:
        return np.diag(self.abs_g)


Source = Union[IdentifiedCanonical, CanonicalInfo]


def _intercept(cond1: ConditionalOutcome, cond2: ConditionalOutcome, mu_theta: float) -> np.ndarray:
    for cond in (cond1, cond2):
        if abs(cond.theta_bar - mu_theta) < INTERCEPT_BRANCH_TOL:
            return np.array(cond.cond_mean)
    k1 = 1.0 / (cond1.theta_bar - mu_theta)
    k2 = 1.0 / (cond2.theta_bar - mu_theta)
    return (k1 * cond1.cond_mean - k2 * cond2.cond_mean) / (k1 - k2)


def identify(cond1: ConditionalOutcome, cond2: ConditionalOutcome, prior: Tuple[float, float],
             pd_tol: float = PD_TOL) -> IdentifiedCanonical:
    """
    Identify the canonical structure from actions observed at two states.

    Steps:
        1. Intercepts from the two conditional means.
        2. cross_phig from the conditional covariance.
        3. phi1 h cross-products from the second moment at the second state
           of actions demeaned at the first, net of cross_phig.
        4. phi1^2 from the unit-variance normalization.
        5. |h| and |g| by division and square roots.

    Args:
        cond1: Conditional outcome at theta_bar_1
        cond2: Conditional outcome at theta_bar_2
        prior: (mu_theta, var_theta)

    Returns:
        IdentifiedCanonical
    """
    mu_theta, var_theta = prior
    if cond1.n != cond2.n:
        raise DimensionMismatch(f"Conditionals cover {cond1.n} and {cond2.n} agents")
    delta = cond1.theta_bar - cond2.theta_bar
    if abs(delta) < DEGENERATE_STATE_TOL:
        raise DegenerateStates(f"Conditioning states coincide: {cond1.theta_bar} and {cond2.theta_bar}")
    logger.info(f"Identifying {cond1.n} agents from states {cond1.theta_bar:g} and {cond2.theta_bar:g}")

    phi0 = _intercept(cond1, cond2, mu_theta)

    cross_phig = 0.5 * (cond1.cond_cov + cond1.cond_cov.T)
    cond_var = np.diag(cross_phig)
    if np.min(cond_var, initial=0.0) < -pd_tol:
        i = int(np.argmin(cond_var))
        raise InconsistentInput(f"Negative conditional variance {cond_var[i]:.3e} at agent {i}",
                                STAGE_CONDITIONAL_COVARIANCE)

    cross_phih = (cond1.cond_mean - cond2.cond_mean) / delta
    total_var = cond_var + var_theta * cross_phih ** 2
    if np.min(total_var, initial=np.inf) < pd_tol:
        i = int(np.argmin(total_var))
        raise ZeroVariance(f"Var(X({i})) = {total_var[i]:.3e} vanishes; agent {i} does not respond to its signal")

    demeaned = cond2.cond_mean - cond1.cond_mean
    second_moment = 0.5 * (cond2.cond_cov + cond2.cond_cov.T) + np.outer(demeaned, demeaned)
    cross_hh = (second_moment - cross_phig) / delta ** 2
    if np.min(np.diag(cross_hh), initial=0.0) < -np.sqrt(pd_tol):
        i = int(np.argmin(np.diag(cross_hh)))
        raise InconsistentInput(f"Negative squared state loading at agent {i}", STAGE_CROSS_STATE_MOMENT)

    phi1_sq = np.diag(second_moment) + (var_theta - delta ** 2) * np.diag(cross_hh)
    if np.min(phi1_sq) <= 0.0:
        i = int(np.argmin(phi1_sq))
        raise InconsistentInput(f"Squared slope {phi1_sq[i]:.3e} at agent {i} is not positive",
                                STAGE_SLOPE_MAGNITUDE)
    abs_phi1 = np.sqrt(phi1_sq)

    g_diag = np.clip(cond_var, 0.0, None) / phi1_sq
    h_sq = (1.0 - g_diag) / var_theta
    if np.min(h_sq) < -SLOPE_CLAMP_TOL:
        i = int(np.argmin(h_sq))
        raise InconsistentInput(f"Idiosyncratic variance {g_diag[i]:.6g} exceeds one at agent {i}",
                                STAGE_SLOPE_MAGNITUDE)
    abs_h = np.sqrt(np.clip(h_sq, 0.0, None))

    abs_g = np.abs(cross_phig) / np.outer(abs_phi1, abs_phi1)
    abs_g[np.diag_indices(cond1.n)] = g_diag

    logger.info(f"Identified |h| in [{abs_h.min():.6f}, {abs_h.max():.6f}], |phi1| in "
                f"[{abs_phi1.min():.6f}, {abs_phi1.max():.6f}]")
    return IdentifiedCanonical(phi0=phi0, abs_phi1=abs_phi1, abs_h=abs_h, abs_g=abs_g,
                               cross_phih=cross_phih, cross_phig=cross_phig,
                               mu_theta=float(mu_theta), var_theta=float(var_theta))


def resolve_signs_positive(idc: IdentifiedCanonical,
                           tol: float = ZERO_EXPOSURE_TOL) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Point-identify (h, g, phi1) under the hypothesis h >= 0.

    Returns:
        Tuple (h, g, phi1)
    """
    if np.min(idc.abs_h, initial=np.inf) < tol:
        i = int(np.argmin(idc.abs_h))
        raise ZeroExposure(f"|h({i})| = {idc.abs_h[i]:.3e}; the sign of phi1({i}) is not recoverable")
    h = np.array(idc.abs_h)
    phi1 = idc.cross_phih / h
    g = idc.cross_phig / np.outer(phi1, phi1)
    return h, 0.5 * (g + g.T), phi1


def _cross_terms(source: Source) -> Tuple[np.ndarray, np.ndarray, float]:
    """(cross_phih, cross_phig, var_theta); a CanonicalInfo is read with unit slopes."""
    if isinstance(source, CanonicalInfo):
        return source.h, source.g, source.var_theta
    return source.cross_phih, source.cross_phig, source.var_theta


def _check_teams(teams: Sequence[Sequence[int]], n: int) -> List[np.ndarray]:
    if len(teams) == 0:
        raise ValueError("At least one team is required")
    checked = []
    for k, team in enumerate(teams, start=1):
        team = np.asarray(team, dtype=int)
        if team.size == 0:
            raise ValueError(f"Team {k} is empty")
        if team.size > MAX_TEAM_SIZE:
            raise ValueError(f"Team {k} has {team.size} agents; the limit is {MAX_TEAM_SIZE}")
        if np.any(team < 0) or np.any(team >= n):
            raise IndexError(f"Team {k} references agents outside 0..{n - 1}")
        checked.append(team)
    return checked


def _solve_block(matrix: np.ndarray, rhs: np.ndarray, pd_tol: float, label: str) -> np.ndarray:
    matrix = 0.5 * (matrix + matrix.T)
    low = float(np.linalg.eigvalsh(matrix)[0])
    if low < pd_tol:
        raise SingularTeamCovariance(f"Covariance of {label} is singular (min eigenvalue {low:.3e})")
    return scipy.linalg.solve(matrix, rhs, assume_a="pos")


def higher_order_uncertainty(source: Source, prior: Optional[Tuple[float, float]],
                             teams: Sequence[Sequence[int]], pd_tol: float = PD_TOL) -> float:
    """
    Residual variance R_p along a team path, from identified cross terms only.

    Works with D-conjugated blocks D_p A_{p,q} D_q, where D = diag(phi1), so no
    sign resolution is required. For p = 1 this is the residual state variance
    given N_1's signals; for p >= 2 it is the variance, given N_1's signals,
    of E_{N_2}...E_{N_p}[theta].

    Args:
        source: IdentifiedCanonical, or a CanonicalInfo read with unit slopes
        prior: (mu_theta, var_theta); None uses the source's var_theta
        teams: Ordered team path N_1, ..., N_p

    Returns:
        R_p
    """
    cross_phih, cross_phig, var_theta = _cross_terms(source)
    if prior is not None:
        var_theta = prior[1]
    teams = _check_teams(teams, cross_phih.shape[0])

    def block(rows, cols):
        return var_theta * np.outer(cross_phih[rows], cross_phih[cols]) + cross_phig[np.ix_(rows, cols)]

    def forcing(team):
        return var_theta * cross_phih[team]

    if len(teams) == 1:
        team = teams[0]
        b = forcing(team)
        r = var_theta - float(b @ _solve_block(block(team, team), b, pd_tol, "team 1"))
        logger.debug(f"R_1 over {team.size} agents: {r:.12g}")
        return r

    # c_{q:p} = A_{q,q+1} A_{q+1}^{-1} c_{q+1:p}, starting from c_{p:p} = b_p
    p = len(teams)
    c = forcing(teams[-1])
    c_by_team = {p - 1: c}
    for q in range(p - 2, -1, -1):
        inner = _solve_block(block(teams[q + 1], teams[q + 1]), c, pd_tol, f"team {q + 2}")
        c = block(teams[q], teams[q + 1]) @ inner
        c_by_team[q] = c

    c2, c1 = c_by_team[1], c_by_team[0]
    var_y = float(c2 @ _solve_block(block(teams[1], teams[1]), c2, pd_tol, "team 2"))
    explained = float(c1 @ _solve_block(block(teams[0], teams[0]), c1, pd_tol, "team 1"))
    r = var_y - explained
    logger.debug(f"R_{p} along path of {p} teams: {r:.12g}")
    return r


def first_order_uncertainty(source: Source, team: Sequence[int], prior: Optional[Tuple[float, float]] = None,
                            pd_tol: float = PD_TOL) -> float:
    """Residual state variance given one team's signals."""
    return higher_order_uncertainty(source, prior, [team], pd_tol)


def nested_projection_oracle(info: InformationStructure, teams: Sequence[Sequence[int]],
                             prior: Optional[Tuple[float, float]] = None, pd_tol: float = PD_TOL) -> float:
    """
    R_p computed from raw covariances by composing linear projections.

    The statistic E_{N_2}...E_{N_p}[theta] is a_2^T S(N_2) with
    a_p^T = b_p^T A_p^{-1} and a_q^T = a_{q+1}^T A_{q+1,q} A_q^{-1}; its variance
    given S(N_1) is a_2^T (A_2 - A_21 A_1^{-1} A_12) a_2.
    """
    var_theta = info.var_theta if prior is None else prior[1]
    teams = _check_teams(teams, info.n)

    def check(matrix, label):
        low = float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0])
        if low < pd_tol:
            raise SingularTeamCovariance(f"Covariance of {label} is singular (min eigenvalue {low:.3e})")
        return matrix

    inverses = [np.linalg.inv(check(info.pointwise_block(t), f"team {k + 1}")) for k, t in enumerate(teams)]
    b_last = info.K_theta[teams[-1]].reshape(-1)

    if len(teams) == 1:
        return var_theta - float(b_last @ inverses[0] @ b_last)

    a = inverses[-1] @ b_last
    for q in range(len(teams) - 2, 0, -1):
        a = inverses[q] @ (info.cross_block(teams[q], teams[q + 1]) @ a)

    A2 = info.pointwise_block(teams[1])
    A21 = info.cross_block(teams[1], teams[0])
    schur = A2 - A21 @ inverses[0] @ A21.T
    return float(a @ schur @ a)
