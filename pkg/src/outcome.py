"""
Outcome module for the LQG identification toolkit.
Gaussian moments of (theta, X(.)) induced by an affine profile, conditional
action distributions, obedience residuals and seeded Monte-Carlo draws.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import *
from .core import AffineProfile, AgentGrid, PayoffStructure, StandardizedInfo
from .errors import DimensionMismatch, NotPSD
from .logger import get_logger

logger = get_logger()


@dataclass(frozen=True)
class OutcomeMoments:
    """
    Mean and covariance of the equilibrium outcome.

    cov_xx is the kernel covariance phi(i)^T P(i,j) phi(j), whose diagonal uses
    the kernel extension of P; var_x holds the pointwise variances phi(i)^T phi(i).
    """

    mean_x: np.ndarray
    var_x: np.ndarray
    cov_xx: np.ndarray
    cov_xtheta: np.ndarray
    mu_theta: float
    var_theta: float

    @property
    def n(self) -> int:
        return self.mean_x.shape[0]

    def pointwise_cov(self) -> np.ndarray:
        """Covariance of distinct agents with the pointwise variances on the diagonal."""
        cov = np.array(self.cov_xx)
        cov[np.diag_indices(self.n)] = self.var_x
        return cov

    def joint_covariance(self, idx: Sequence[int]) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        k = len(idx)
        joint = np.empty((k + 1, k + 1))
        joint[0, 0] = self.var_theta
        joint[0, 1:] = joint[1:, 0] = self.cov_xtheta[idx]
        joint[1:, 1:] = self.pointwise_cov()[np.ix_(idx, idx)]
        return joint


@dataclass(frozen=True)
class ConditionalOutcome:
    """Distribution of X(.) given theta = theta_bar (cond_cov is pointwise)."""

    theta_bar: float
    cond_mean: np.ndarray
    cond_cov: np.ndarray

    @property
    def n(self) -> int:
        return self.cond_mean.shape[0]


def outcome_moments(std: StandardizedInfo, prof: AffineProfile,
                    prior: Optional[Tuple[float, float]] = None) -> OutcomeMoments:
    """
    Compute the Gaussian moments of (theta, X(.)) under an affine profile.

    Args:
        std: Standardized information structure
        prof: Affine profile on standardized signals
        prior: (mu_theta, var_theta); defaults to the values carried by std

    Returns:
        OutcomeMoments
    """
    if prof.n != std.n or prof.d != std.d:
        raise DimensionMismatch(f"Profile shape ({prof.n}, {prof.d}) does not match information ({std.n}, {std.d})")
    mu_theta, var_theta = prior if prior is not None else (std.mu_theta, std.var_theta)

    phi = prof.phi
    cov_xx = np.einsum("ia,ijab,jb->ij", phi, std.P_kernel, phi)
    var_x = np.sum(phi ** 2, axis=1)
    cov_xtheta = np.sqrt(var_theta) * np.sum(phi * std.P_theta, axis=1)
    return OutcomeMoments(
        mean_x=np.array(prof.phi0),
        var_x=var_x,
        cov_xx=0.5 * (cov_xx + cov_xx.T),
        cov_xtheta=cov_xtheta,
        mu_theta=float(mu_theta),
        var_theta=float(var_theta),
    )


def condition_on_state(mom: OutcomeMoments, theta_bar: float) -> ConditionalOutcome:
    """Gaussian conditioning of the actions on theta = theta_bar."""
    if not mom.var_theta > 0.0:
        raise ValueError(f"var_theta must be positive, got {mom.var_theta}")
    slope = mom.cov_xtheta / mom.var_theta
    cond_mean = mom.mean_x + slope * (theta_bar - mom.mu_theta)
    cond_cov = mom.pointwise_cov() - np.outer(mom.cov_xtheta, mom.cov_xtheta) / mom.var_theta
    return ConditionalOutcome(theta_bar=float(theta_bar), cond_mean=cond_mean, cond_cov=cond_cov)


def obedience_residuals(mom: OutcomeMoments, payoff: PayoffStructure, grid: AgentGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    First- and second-moment obedience residuals.

    Returns:
        Tuple (res1, res2) of per-agent residual vectors
    """
    if payoff.n != mom.n or grid.n != mom.n:
        raise DimensionMismatch(f"Payoff has {payoff.n} agents, outcome {mom.n}, grid {grid.n}")
    res1 = mom.mean_x - grid.weight * (payoff.w @ mom.mean_x) - payoff.b * mom.mu_theta - payoff.c
    res2 = mom.var_x - grid.weight * np.sum(payoff.w * mom.cov_xx, axis=1) - payoff.b * mom.cov_xtheta
    return res1, res2


def _psd_root(cov: np.ndarray, psd_tol: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if vals.size and vals[0] < -psd_tol:
        raise NotPSD(f"Sampling covariance has eigenvalue {vals[0]:.3e}", min_eigenvalue=float(vals[0]))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _check_subset(subset: Optional[Sequence[int]], n: int) -> np.ndarray:
    idx = np.arange(n) if subset is None else np.asarray(subset, dtype=int)
    if idx.size > MAX_SAMPLE_SUBSET:
        raise ValueError(f"Subset of {idx.size} agents exceeds the sampling limit {MAX_SAMPLE_SUBSET}")
    return idx


def sample_outcome(mom: OutcomeMoments, subset: Sequence[int], draws: int, seed: int,
                   psd_tol: float = PSD_TOL) -> np.ndarray:
    """
    Draw i.i.d. Gaussian vectors (theta, X(subset)).

    Args:
        mom: Outcome moments
        subset: Agent indices
        draws: Number of draws
        seed: PCG64 seed; identical seeds give identical draws

    Returns:
        Array of shape (draws, 1 + len(subset)); column 0 is theta
    """
    idx = _check_subset(subset, mom.n)
    root = _psd_root(mom.joint_covariance(idx), psd_tol)
    mean = np.concatenate([[mom.mu_theta], mom.mean_x[idx]])
    z = _make_rng(seed).standard_normal((int(draws), idx.size + 1))
    return mean + z @ root.T


def sample_conditional(mom: OutcomeMoments, theta_bar: float, draws: int, seed,
                       subset: Optional[Sequence[int]] = None, psd_tol: float = PSD_TOL) -> np.ndarray:
    """Draw actions from X(subset) | theta = theta_bar; returns shape (draws, len(subset))."""
    idx = _check_subset(subset, mom.n)
    cond = condition_on_state(mom, theta_bar)
    root = _psd_root(cond.cond_cov[np.ix_(idx, idx)], psd_tol)
    z = _make_rng(seed).standard_normal((int(draws), idx.size))
    return cond.cond_mean[idx] + z @ root.T


def empirical_conditional(mom: OutcomeMoments, theta_bar: float, draws: int, seed,
                          chunk: int = 100_000, psd_tol: float = PSD_TOL) -> ConditionalOutcome:
    """
    Finite-sample estimate of the conditional action distribution.

    Draws are streamed in chunks so memory stays bounded; the sample covariance
    uses ddof = 1.

    Args:
        mom: Outcome moments generating the data
        theta_bar: Conditioning state
        draws: Number of simulated observations (at least 2)
        seed: PCG64 seed or SeedSequence

    Returns:
        ConditionalOutcome built from sample moments
    """
    if draws < 2:
        raise ValueError(f"At least two draws are needed, got {draws}")
    idx = _check_subset(None, mom.n)
    cond = condition_on_state(mom, theta_bar)
    root = _psd_root(cond.cond_cov, psd_tol)
    rng = _make_rng(seed)

    # Accumulate around the conditional mean to limit cancellation
    centre = cond.cond_mean
    total = np.zeros(idx.size)
    outer = np.zeros((idx.size, idx.size))
    remaining = int(draws)
    while remaining > 0:
        size = min(chunk, remaining)
        dev = rng.standard_normal((size, idx.size)) @ root.T
        total += dev.sum(axis=0)
        outer += dev.T @ dev
        remaining -= size

    mean_dev = total / draws
    cov = (outer - draws * np.outer(mean_dev, mean_dev)) / (draws - 1)
    logger.debug(f"Empirical conditional at theta={theta_bar:g} from {draws} draws")
    return ConditionalOutcome(theta_bar=float(theta_bar), cond_mean=centre + mean_dev, cond_cov=0.5 * (cov + cov.T))
