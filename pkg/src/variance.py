"""
Variance-reduction module for the LQG identification toolkit.
Measures how much a team's signals and a team's actions reveal about the
state, the gap between the two and when that gap closes.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from .canonical import canonical_standardized, canonicalize
from .config import *
from .core import AffineProfile, AgentGrid, InformationStructure, PayoffStructure, StandardizedInfo, sym_root, standardize
from .equilibrium import EquilibriumSolver, build_operator
from .errors import DegenerateActions, DimensionMismatch, SingularTeamCovariance, ZeroVector
from .logger import get_logger

logger = get_logger()


@dataclass(frozen=True)
class ActionMap:
    """Per-agent slope matrices Phi(i) of shape (d_s, d_x) acting on standardized signals."""

    Phi: np.ndarray

    def __post_init__(self):
        Phi = np.array(self.Phi, dtype=float)
        if Phi.ndim != 3:
            raise DimensionMismatch(f"Phi must have shape (n, d_s, d_x), got {Phi.shape}")
        if not np.all(np.isfinite(Phi)):
            raise ValueError("Phi contains non-finite entries")
        Phi.setflags(write=False)
        object.__setattr__(self, "Phi", Phi)

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def d_s(self) -> int:
        return self.Phi.shape[1]

    @property
    def d_x(self) -> int:
        return self.Phi.shape[2]

    @classmethod
    def from_profile(cls, prof: AffineProfile) -> "ActionMap":
        return cls(Phi=prof.phi[:, :, None])


@dataclass(frozen=True)
class GapReport:
    """Signal- and action-based variance reduction for one team."""

    r_signal: float
    r_action: float
    gap: float
    ssr: float
    proportional: bool
    ls_residual: float


def _team(N: Sequence[int]) -> np.ndarray:
    N = np.asarray(N, dtype=int)
    if N.size == 0:
        raise ValueError("Team must be nonempty")
    return N


def _signal_system(info: InformationStructure, N: np.ndarray, pd_tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (K(N), K_theta(N), K(N)^{-1} K_theta(N))."""
    K = info.pointwise_block(N)
    k_theta = info.K_theta[N].reshape(-1)
    low = float(np.linalg.eigvalsh(K)[0])
    if low < pd_tol:
        raise SingularTeamCovariance(f"K(N) for team {N.tolist()} is singular (min eigenvalue {low:.3e})")
    return K, k_theta, scipy.linalg.solve(K, k_theta, assume_a="pos")


def _transformed_actions(info: InformationStructure, amap: ActionMap, N: np.ndarray) -> np.ndarray:
    if amap.n != info.n or amap.d_s != info.d:
        raise DimensionMismatch(f"Action map ({amap.n}, {amap.d_s}) does not match information ({info.n}, {info.d})")
    roots = sym_root(info.K_point[N], inverse=True)
    return scipy.linalg.block_diag(*[roots[k] @ amap.Phi[i] for k, i in enumerate(N)])


def variance_reduction_signals(info: InformationStructure, N: Sequence[int], pd_tol: float = PD_TOL) -> float:
    """r(N) = K_theta(N)^T K(N)^{-1} K_theta(N)."""
    N = _team(N)
    _, k_theta, y = _signal_system(info, N, pd_tol)
    return float(k_theta @ y)


def variance_reduction_actions(info: InformationStructure, amap: ActionMap, N: Sequence[int],
                               pd_tol: float = PD_TOL) -> float:
    """
    State-variance reduction from observing the team's actions.

    With Phi_t = V(N)^{-1/2} Phi(N) (block diagonal):
        r_hat = K_theta^T Phi_t (Phi_t^T K Phi_t)^{-1} Phi_t^T K_theta
    """
    N = _team(N)
    K = info.pointwise_block(N)
    k_theta = info.K_theta[N].reshape(-1)
    Phi_t = _transformed_actions(info, amap, N)
    action_cov = Phi_t.T @ K @ Phi_t
    low = float(np.linalg.eigvalsh(0.5 * (action_cov + action_cov.T))[0])
    if low < pd_tol:
        raise DegenerateActions(f"Action covariance of team {N.tolist()} is singular (min eigenvalue {low:.3e})")
    cov_theta = Phi_t.T @ k_theta
    return float(cov_theta @ scipy.linalg.solve(action_cov, cov_theta, assume_a="pos"))


def gap_report(info: InformationStructure, amap: ActionMap, N: Sequence[int], pd_tol: float = PD_TOL,
               proportional_tol: float = PROPORTIONAL_TOL) -> GapReport:
    """
    Gap between signal- and action-based variance reduction.

    The gap equals the GLS sum of squared residuals u^T K u of regressing
    y = K^{-1} K_theta on Phi_t; it vanishes exactly when Phi(N) beta =
    V(N)^{1/2} y has a solution.

    Returns:
        GapReport
    """
    N = _team(N)
    K, k_theta, y = _signal_system(info, N, pd_tol)
    r_signal = float(k_theta @ y)
    r_action = variance_reduction_actions(info, amap, N, pd_tol)

    Phi_t = _transformed_actions(info, amap, N)
    beta_gls = scipy.linalg.solve(Phi_t.T @ K @ Phi_t, Phi_t.T @ K @ y, assume_a="pos")
    resid = y - Phi_t @ beta_gls
    ssr = float(resid @ K @ resid)

    gap = r_signal - r_action
    if abs(gap - ssr) > 1e-8:
        logger.warning(f"Gap routes disagree for team {N.tolist()}: difference {gap:.3e}, SSR {ssr:.3e}")

    Phi_blk = scipy.linalg.block_diag(*[amap.Phi[i] for i in N])
    rhs = scipy.linalg.block_diag(*sym_root(info.K_point[N])) @ y
    beta, _, _, _ = scipy.linalg.lstsq(Phi_blk, rhs)
    ls_residual = float(np.linalg.norm(Phi_blk @ beta - rhs))
    proportional = ls_residual <= proportional_tol * (1.0 + float(np.linalg.norm(rhs)))

    logger.debug(f"Team {N.tolist()}: r_signal={r_signal:.10g} r_action={r_action:.10g} gap={gap:.3e}")
    return GapReport(r_signal=r_signal, r_action=r_action, gap=gap, ssr=ssr,
                     proportional=proportional, ls_residual=ls_residual)


def cosine_ratio(std: StandardizedInfo, prof: AffineProfile, i: int, pd_tol: float = PD_TOL) -> Tuple[float, float]:
    """
    Ratio r(i | canonical) / r(i | original) and the squared cosine between phi(i) and P_theta(i).

    Returns:
        Tuple (ratio_lhs, cos2)
    """
    phi = prof.phi[i]
    p = std.P_theta[i]
    norm_phi, norm_p = float(np.linalg.norm(phi)), float(np.linalg.norm(p))
    if norm_phi < pd_tol or norm_p < pd_tol:
        raise ZeroVector(f"Agent {i}: |phi| = {norm_phi:.3e}, |P_theta| = {norm_p:.3e}")
    cos2 = float(phi @ p) ** 2 / (norm_phi ** 2 * norm_p ** 2)

    local = std.restrict([i])
    canon, _ = canonicalize(local, prof.restrict([i]))
    r_canonical = variance_reduction_signals(canonical_standardized(canon, std.mu_theta).as_information(), [0])
    r_original = variance_reduction_signals(local.as_information(), [0])
    return r_canonical / r_original, cos2


def bridge_check(std: StandardizedInfo, prof: AffineProfile, N: Sequence[int]) -> Tuple[float, float]:
    """
    Action-based variance reduction before and after canonicalization.

    Returns:
        Tuple (r_action original, r_action canonical)
    """
    canon, canon_prof = canonicalize(std, prof)
    original = variance_reduction_actions(std.as_information(), ActionMap.from_profile(prof), N)
    canonical = variance_reduction_actions(canonical_standardized(canon, std.mu_theta).as_information(),
                                           ActionMap.from_profile(canon_prof), N)
    return original, canonical


ZERO_CASES = ("w_row", "b_off", "p_theta_off", "p_row")


def _zero_case_game(case: str, payoff: PayoffStructure, std: StandardizedInfo, i: int):
    """
    Modify the game so one hypothesis holds on the grid.

    Agent i carries a 1/n cell, so each "vanishes for j != i" hypothesis also
    removes agent i's own contribution to the affected integral.
    """
    b, c, w = np.array(payoff.b), np.array(payoff.c), np.array(payoff.w)
    P, P_theta = np.array(std.P_kernel), np.array(std.P_theta)
    others = np.arange(std.n) != i
    if case == "w_row":
        w[i, :] = 0.0
    elif case == "b_off":
        b[others] = 0.0
        w[:, i] = 0.0
    elif case == "p_theta_off":
        P_theta[others] = 0.0
        w[:, i] = 0.0
    elif case == "p_row":
        P[i, :] = 0.0
        P[:, i] = 0.0
    else:
        raise ValueError(f"Unknown zero case {case!r}")
    modified = StandardizedInfo(P_kernel=P, P_theta=P_theta, root_inv=std.root_inv,
                                mu_theta=std.mu_theta, var_theta=std.var_theta)
    return PayoffStructure(b=b, c=c, w=w), modified


def proportionality_cases(payoff: PayoffStructure, info: InformationStructure, grid: AgentGrid, i: int,
                         solver: EquilibriumSolver = None) -> pd.DataFrame:
    """
    Check that agent i's slope is proportional to P_theta(i) in the four vanishing cases.

    Args:
        payoff: Base payoff with b(i) != 0
        info: Base information structure
        grid: Agent grid
        i: Agent index

    Returns:
        DataFrame with one row per case: lambda, ls_residual, proportional, gap
    """
    if payoff.b[i] == 0.0:
        raise ValueError(f"b({i}) must be nonzero")
    solver = solver or EquilibriumSolver()
    std = standardize(info)

    rows = []
    for case in ZERO_CASES:
        mod_payoff, mod_std = _zero_case_game(case, payoff, std, i)
        prof = solver.solve_equilibrium(build_operator(mod_payoff, mod_std, grid))
        phi_i, p_i = prof.phi[i], mod_std.P_theta[i]
        lam, _, _, _ = scipy.linalg.lstsq(phi_i[:, None], p_i)
        ls_residual = float(np.linalg.norm(phi_i * lam[0] - p_i))
        proportional = ls_residual <= PROPORTIONAL_TOL * (1.0 + float(np.linalg.norm(p_i)))
        report = gap_report(mod_std.as_information(), ActionMap.from_profile(prof), [i])
        logger.info(f"Zero case {case} at agent {i}: residual {ls_residual:.3e}, gap {report.gap:.3e}")
        rows.append({"case": case, "agent": i, "lambda": float(lam[0]), "ls_residual": ls_residual,
                     "proportional": proportional, "gap": report.gap})
    return pd.DataFrame(rows)
