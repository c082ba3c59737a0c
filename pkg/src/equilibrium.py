"""
Equilibrium module for the LQG identification toolkit.
Discretizes the Fredholm equation on the agent grid, checks well-posedness
through the operator spectrum and solves for the affine equilibrium.
"""

import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from .config import *
from .core import AffineProfile, AgentGrid, InformationStructure, PayoffStructure, StandardizedInfo, standardize
from .errors import ConditionWarning, DimensionMismatch, NonConvergence, SingularSystem
from .logger import get_logger

logger = get_logger()


@dataclass(frozen=True)
class DiscreteOperator:
    """Intercept block (T0, f0) and slope block (T1, f1) of the discretized equation."""

    T0: np.ndarray
    T1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    n: int
    d: int

    def residual(self, profile: AffineProfile) -> Tuple[np.ndarray, np.ndarray]:
        """Row residuals (I - T) phi_bar - f for both blocks."""
        phi1 = profile.phi.reshape(-1)
        res0 = profile.phi0 - self.T0 @ profile.phi0 - self.f0
        res1 = phi1 - self.T1 @ phi1 - self.f1
        return res0, res1

    def residual_norm(self, profile: AffineProfile) -> float:
        res0, res1 = self.residual(profile)
        return float(max(np.max(np.abs(res0), initial=0.0), np.max(np.abs(res1), initial=0.0)))

    def forcing_norm(self) -> float:
        return float(max(np.max(np.abs(self.f0), initial=0.0), np.max(np.abs(self.f1), initial=0.0)))


@dataclass(frozen=True)
class WellPosedness:
    """Spectra of both operator blocks and their distance to one."""

    spectrum0: np.ndarray
    spectrum1: np.ndarray
    dist_to_one: float
    well_posed: bool

    def to_frame(self) -> pd.DataFrame:
        """Eigenvalues of both blocks, sorted for reproducible output."""
        frames = []
        for block, spectrum in (("intercept", self.spectrum0), ("slope", self.spectrum1)):
            spectrum = np.sort_complex(np.round(spectrum, 14))
            frames.append(pd.DataFrame({
                "block": block,
                "real": spectrum.real,
                "imag": spectrum.imag,
                "dist_to_one": np.abs(spectrum - 1.0),
            }))
        return pd.concat(frames, ignore_index=True)


@dataclass(frozen=True)
class KnifeEdgeReport:
    """Fredholm alternative for one operator block."""

    block: str
    status: str  # "unique", "no_solution" or "continuum"
    residual: float
    null_dim: int
    particular: np.ndarray
    null_basis: np.ndarray


def build_operator(payoff: PayoffStructure, std: StandardizedInfo, grid: AgentGrid) -> DiscreteOperator:
    """
    Assemble the Nystrom discretization of the equilibrium equation.

    Args:
        payoff: Payoff structure (b, c, w)
        std: Standardized information structure
        grid: Agent grid supplying the quadrature weight

    Returns:
        DiscreteOperator with T0 = w/n, T1 = [w(i,j) P(i,j)/n] and forcing terms
    """
    n, d = std.n, std.d
    if payoff.n != n or grid.n != n:
        raise DimensionMismatch(f"Payoff has {payoff.n} agents, information {n}, grid {grid.n}")

    T0 = payoff.w * grid.weight
    T1 = (payoff.w[:, :, None, None] * std.P_kernel * grid.weight).transpose(0, 2, 1, 3).reshape(n * d, n * d)
    f0 = std.mu_theta * payoff.b + payoff.c
    f1 = (std.sigma_theta * payoff.b[:, None] * std.P_theta).reshape(-1)
    return DiscreteOperator(T0=T0, T1=T1, f0=f0, f1=f1, n=n, d=d)


def regularize_weights(payoff: PayoffStructure, eps: float) -> PayoffStructure:
    """Scale the interaction kernel by (1 - eps), leaving b and c unchanged."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return PayoffStructure(b=payoff.b, c=payoff.c, w=(1.0 - eps) * payoff.w)


def _unit_direction(shape: Tuple[int, ...], n: int, seed: int) -> np.ndarray:
    """Random direction with unit discrete L2 norm."""
    direction = np.random.default_rng(seed).standard_normal(shape)
    cells = n ** len(shape)
    return direction / np.sqrt(np.sum(direction ** 2) / cells)


class EquilibriumSolver:
    """Solves discretized LQG games and runs the well-posedness diagnostics."""

    def __init__(self, spec_tol: float = SPEC_TOL, residual_tol: float = RESIDUAL_TOL):
        self.spec_tol = spec_tol
        self.residual_tol = residual_tol

    def spectral_check(self, op: DiscreteOperator) -> WellPosedness:
        """
        Compute both block spectra and flag eigenvalues within spec_tol of one.

        Args:
            op: Discretized operator

        Returns:
            WellPosedness diagnostics
        """
        spectrum0 = scipy.linalg.eigvals(op.T0) if op.n else np.zeros(0, dtype=complex)
        spectrum1 = scipy.linalg.eigvals(op.T1) if op.n else np.zeros(0, dtype=complex)
        dist = float(np.min(np.abs(np.concatenate([spectrum0, spectrum1]) - 1.0), initial=np.inf))
        well_posed = dist > self.spec_tol
        if well_posed:
            logger.debug(f"Spectral check passed: distance to one {dist:.3e}")
        else:
            logger.warning(f"Spectral check failed: eigenvalue within {dist:.3e} of one")
        return WellPosedness(spectrum0=spectrum0, spectrum1=spectrum1, dist_to_one=dist, well_posed=well_posed)

    def solve_equilibrium(self, op: DiscreteOperator, allow_ill_posed: bool = False,
                          diagnostics: Optional[WellPosedness] = None) -> AffineProfile:
        """
        Solve (I - T) phi_bar = f block by block with a dense LU factorization.

        Args:
            op: Discretized operator
            allow_ill_posed: Solve anyway when the spectral check fails (emits ConditionWarning)
            diagnostics: Precomputed spectral check, if any

        Returns:
            AffineProfile with intercepts and slopes
        """
        wp = diagnostics if diagnostics is not None else self.spectral_check(op)
        if not wp.well_posed:
            message = f"1 is within {wp.dist_to_one:.3e} of the operator spectrum"
            if not allow_ill_posed:
                raise SingularSystem(message, diagnostics=wp)
            warnings.warn(message, ConditionWarning, stacklevel=2)

        phi0 = self._lu_solve(np.eye(op.n) - op.T0, op.f0)
        phi1 = self._lu_solve(np.eye(op.n * op.d) - op.T1, op.f1)
        profile = AffineProfile(phi0=phi0, phi=phi1.reshape(op.n, op.d))

        residual = op.residual_norm(profile)
        bound = self.residual_tol * (1.0 + op.forcing_norm())
        if residual > bound:
            logger.warning(f"Equilibrium residual {residual:.3e} exceeds {bound:.3e}")
        else:
            logger.debug(f"Equilibrium residual {residual:.3e}")
        return profile

    @staticmethod
    def _lu_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        if matrix.size == 0:
            return np.zeros(0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(matrix)
            x = scipy.linalg.lu_solve((lu, piv), rhs)
            # One step of iterative refinement
            x = x + scipy.linalg.lu_solve((lu, piv), rhs - matrix @ x)
        return x

    def fixed_point_solve(self, op: DiscreteOperator, damping: float = FIXED_POINT_DAMPING,
                          tol: float = 1e-13, max_iter: int = FIXED_POINT_MAX_ITER) -> AffineProfile:
        """
        Damped Picard iteration x <- (1 - a) x + a (T x + f), used as a cross-check.

        Raises:
            NonConvergence: the damped map is not a contraction or the tolerance is not met
        """
        if not 0.0 < damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {damping}")
        wp = self.spectral_check(op)
        eigs = np.concatenate([wp.spectrum0, wp.spectrum1])
        rate = float(np.max(np.abs(1.0 - damping + damping * eigs), initial=0.0))
        if rate >= 1.0:
            raise NonConvergence(f"Damped iteration is not contracting (rate {rate:.4f})")

        blocks = []
        for T, f in ((op.T0, op.f0), (op.T1, op.f1)):
            x = np.zeros_like(f)
            for it in range(max_iter):
                x_new = (1.0 - damping) * x + damping * (T @ x + f)
                step = float(np.max(np.abs(x_new - x), initial=0.0))
                x = x_new
                if step <= tol * (1.0 + float(np.max(np.abs(x), initial=0.0))):
                    break
            else:
                raise NonConvergence(f"Fixed-point iteration stalled after {max_iter} steps (last step {step:.3e})")
            logger.debug(f"Fixed-point block converged in {it + 1} iterations")
            blocks.append(x)
        return AffineProfile(phi0=blocks[0], phi=blocks[1].reshape(op.n, op.d))

    def classify_knife_edge(self, op: DiscreteOperator) -> List[KnifeEdgeReport]:
        """
        Apply the Fredholm alternative to each block.

        A block is "unique" when I - T is invertible; otherwise "no_solution" when
        the least-squares residual stays away from zero, or "continuum" when it
        vanishes and the null space is nontrivial.
        """
        reports = []
        for block, T, f in (("intercept", op.T0, op.f0), ("slope", op.T1, op.f1)):
            A = np.eye(T.shape[0]) - T
            x, _, _, _ = scipy.linalg.lstsq(A, f, cond=self.spec_tol)
            residual = float(np.linalg.norm(A @ x - f))
            null_basis = scipy.linalg.null_space(A, rcond=self.spec_tol)
            null_dim = null_basis.shape[1]
            if null_dim == 0:
                status = "unique"
            elif residual > self.spec_tol * (1.0 + float(np.linalg.norm(f))):
                status = "no_solution"
            else:
                status = "continuum"
            logger.info(f"Knife-edge classification ({block}): {status}, null dim {null_dim}, residual {residual:.3e}")
            reports.append(KnifeEdgeReport(block=block, status=status, residual=residual,
                                           null_dim=null_dim, particular=x, null_basis=null_basis))
        return reports

    def solve_game(self, payoff: PayoffStructure, info: InformationStructure, grid: AgentGrid,
                   allow_ill_posed: bool = False):
        """
        Standardize, discretize, check and solve a game in one call.

        Returns:
            Tuple (std, op, wellposedness, profile)
        """
        std = standardize(info)
        op = build_operator(payoff, std, grid)
        wp = self.spectral_check(op)
        profile = self.solve_equilibrium(op, allow_ill_posed=allow_ill_posed, diagnostics=wp)
        return std, op, wp, profile

    def perturbation_study(self, payoff: PayoffStructure, info: InformationStructure, grid: AgentGrid,
                           deltas: Sequence[float], component: str = "w",
                           seed: int = DEFAULT_PERTURBATION_SEED) -> pd.DataFrame:
        """
        Re-solve the game along a fixed random perturbation direction.

        Args:
            payoff: Base payoff structure (must be well-posed)
            info: Information structure
            grid: Agent grid
            deltas: Perturbation sizes
            component: Which payoff part to perturb ("w", "b" or "c")
            seed: Seed of the perturbation direction, recorded in the table

        Returns:
            DataFrame with one row per delta: sup-norm changes and change/delta ratios
        """
        if component not in ("w", "b", "c"):
            raise ValueError(f"component must be 'w', 'b' or 'c', got {component!r}")
        std, base_op, _, base = self.solve_game(payoff, info, grid)
        shape = payoff.w.shape if component == "w" else payoff.b.shape
        direction = _unit_direction(shape, grid.n, seed)
        logger.info(f"Perturbation study on {component} with {len(deltas)} step sizes (seed {seed})")

        rows = []
        for delta in deltas:
            parts = {"b": payoff.b, "c": payoff.c, "w": payoff.w}
            parts[component] = parts[component] + delta * direction
            row = {"component": component, "seed": seed, "delta": float(delta)}
            try:
                op = build_operator(PayoffStructure(**parts), std, grid)
                prof = self.solve_equilibrium(op)
            except SingularSystem as exc:
                logger.warning(f"Perturbation delta={delta:g} hit a singular system: {exc}")
                row.update(status="singular", change_intercept=np.nan, change_slope=np.nan,
                           change=np.nan, ratio=np.nan)
                rows.append(row)
                continue
            d0 = float(np.max(np.abs(prof.phi0 - base.phi0), initial=0.0))
            d1 = float(np.max(np.abs(prof.phi - base.phi), initial=0.0))
            change = max(d0, d1)
            row.update(status="ok", change_intercept=d0, change_slope=d1, change=change,
                       ratio=change / delta if delta != 0 else np.nan)
            rows.append(row)
        return pd.DataFrame(rows)

    def grid_refinement_study(self, game_factory: Callable[[AgentGrid], Tuple[PayoffStructure, InformationStructure]],
                              sizes: Sequence[int]) -> pd.DataFrame:
        """
        Solve a game family on successively doubled grids.

        Each coarse agent k is compared with the mean of its two children
        2k and 2k+1 on the next grid.

        Args:
            game_factory: Builds (payoff, info) for a given grid
            sizes: Grid sizes, each twice the previous one

        Returns:
            DataFrame with columns n, n_fine, sup_diff
        """
        sizes = list(sizes)
        if any(b != 2 * a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"Grid sizes must double successively, got {sizes}")

        profiles = []
        for n in sizes:
            grid = AgentGrid.uniform(n)
            payoff, info = game_factory(grid)
            _, _, _, prof = self.solve_game(payoff, info, grid)
            profiles.append(prof)

        rows = []
        for (n, coarse), (n_fine, fine) in zip(zip(sizes, profiles), zip(sizes[1:], profiles[1:])):
            fine0 = 0.5 * (fine.phi0[0::2] + fine.phi0[1::2])
            fine1 = 0.5 * (fine.phi[0::2] + fine.phi[1::2])
            sup = max(float(np.max(np.abs(coarse.phi0 - fine0))), float(np.max(np.abs(coarse.phi - fine1))))
            logger.info(f"Grid refinement {n} -> {n_fine}: sup difference {sup:.3e}")
            rows.append({"n": n, "n_fine": n_fine, "sup_diff": sup})
        return pd.DataFrame(rows)
