"""
Core domain types for the LQG identification toolkit.
Holds the agent grid, payoff and information structures, standardized and
canonical signal models, affine profiles, and the joint-PSD validator.

Array conventions (n agents, signal dimension d):
    payoff.w            (n, n)
    info.K_point        (n, d, d)   own covariance K(i,i)
    info.K_kernel       (n, n, d, d) kernel K(i,j); [i, i] holds the a.e. extension
    info.K_theta        (n, d)
    profile.phi         (n, d)
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import *
from .errors import DimensionMismatch, NormalizationInfeasible, NotPSD, SingularOwnCovariance
from .logger import get_logger

logger = get_logger()


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    """Copy to a float array of the given rank and make it read-only."""
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must have {ndim} dimension(s), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def sym_root(matrices: np.ndarray, inverse: bool = False, pd_tol: float = PD_TOL) -> np.ndarray:
    """
    Symmetric square root (or inverse root) of a stack of symmetric matrices.

    Eigenvalues are clamped at pd_tol before taking the root.

    Args:
        matrices: Array of shape (..., k, k)
        inverse: Return M^{-1/2} instead of M^{1/2}

    Returns:
        Array with the same shape as the input
    """
    vals, vecs = np.linalg.eigh(matrices)
    vals = np.maximum(vals, pd_tol)
    power = -0.5 if inverse else 0.5
    return np.einsum("...ab,...b,...cb->...ac", vecs, vals ** power, vecs)


@dataclass(frozen=True)
class AgentGrid:
    """Uniform midpoint discretization of the agent interval [0, 1]."""

    n: int
    points: np.ndarray
    weight: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Grid needs at least one agent, got n={self.n}")
        points = _frozen(self.points, 1, "points")
        if points.shape != (self.n,):
            raise DimensionMismatch(f"Expected {self.n} grid points, got {points.shape[0]}")
        if np.any(points <= 0.0) or np.any(points >= 1.0):
            raise ValueError("Grid points must lie strictly inside (0, 1)")
        if np.any(np.diff(points) <= 0.0):
            raise ValueError("Grid points must be strictly increasing")
        if not np.isclose(self.weight * self.n, 1.0, rtol=0.0, atol=1e-14):
            raise ValueError(f"Quadrature weight {self.weight} does not sum to one over {self.n} agents")
        object.__setattr__(self, "points", points)

    @classmethod
    def uniform(cls, n: int) -> "AgentGrid":
        return cls(n=n, points=(np.arange(1, n + 1) - 0.5) / n, weight=1.0 / n)


@dataclass(frozen=True)
class PayoffStructure:
    """Payoff profile (b, c, w) on the grid."""

    b: np.ndarray
    c: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        b = _frozen(self.b, 1, "b")
        c = _frozen(self.c, 1, "c")
        w = _frozen(self.w, 2, "w")
        n = b.shape[0]
        if c.shape != (n,) or w.shape != (n, n):
            raise DimensionMismatch(f"Payoff shapes disagree: b {b.shape}, c {c.shape}, w {w.shape}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @classmethod
    def constant(cls, n: int, b: float, c: float, w: float) -> "PayoffStructure":
        return cls(b=np.full(n, b), c=np.full(n, c), w=np.full((n, n), w))


@dataclass(frozen=True)
class InformationStructure:
    """
    Joint Gaussian law of the state and all agents' signals.

    K_point carries the own covariances used for standardization and
    conditioning; K_kernel carries the cross-covariance kernel whose diagonal
    is only ever seen by quadrature sums.
    """

    d: int
    mu_theta: float
    var_theta: float
    m: np.ndarray
    K_point: np.ndarray
    K_kernel: np.ndarray
    K_theta: np.ndarray
    psd_tol: float = PSD_TOL

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"Signal dimension must be positive, got {self.d}")
        if not self.var_theta > 0.0:
            raise ValueError(f"var_theta must be positive, got {self.var_theta}")
        m = _frozen(self.m, 2, "m")
        K_point = _frozen(self.K_point, 3, "K_point")
        K_kernel = _frozen(self.K_kernel, 4, "K_kernel")
        K_theta = _frozen(self.K_theta, 2, "K_theta")
        n, d = m.shape[0], self.d
        expected = {
            "m": (m.shape, (n, d)),
            "K_point": (K_point.shape, (n, d, d)),
            "K_kernel": (K_kernel.shape, (n, n, d, d)),
            "K_theta": (K_theta.shape, (n, d)),
        }
        for name, (got, want) in expected.items():
            if got != want:
                raise DimensionMismatch(f"{name} has shape {got}, expected {want}")

        scale = 1.0 + float(np.max(np.abs(K_kernel), initial=0.0))
        if not np.allclose(K_point, K_point.transpose(0, 2, 1), atol=1e-12 * scale, rtol=0.0):
            raise ValueError("K_point blocks must be symmetric")
        if not np.allclose(K_kernel, K_kernel.transpose(1, 0, 3, 2), atol=1e-12 * scale, rtol=0.0):
            raise ValueError("K_kernel must satisfy K(i,j) = K(j,i)^T")

        # Per-agent Schur bound var_theta - K_theta^T K^{-1} K_theta >= -psd_tol
        vals, vecs = np.linalg.eigh(K_point)
        proj = np.einsum("iab,ia->ib", vecs, K_theta)
        safe = np.where(vals > PD_TOL, vals, np.inf)
        explained = np.sum(proj ** 2 / safe, axis=1)
        slack = self.var_theta - explained
        worst = int(np.argmin(slack))
        if slack[worst] < -self.psd_tol:
            raise NotPSD(
                f"Agent {worst} explains more state variance ({explained[worst]:.6g}) than var_theta "
                f"({self.var_theta:.6g})",
                min_eigenvalue=float(slack[worst]),
            )

        object.__setattr__(self, "m", m)
        object.__setattr__(self, "K_point", K_point)
        object.__setattr__(self, "K_kernel", K_kernel)
        object.__setattr__(self, "K_theta", K_theta)

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def sigma_theta(self) -> float:
        return float(np.sqrt(self.var_theta))

    def pointwise_block(self, idx: Sequence[int]) -> np.ndarray:
        """Covariance of S(N) with own covariances on the diagonal blocks."""
        return self.cross_block(idx, idx)

    def cross_block(self, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
        """Cov(S(rows), S(cols)); an agent present on both sides gets K_point."""
        return _pointwise_blocks(self.K_kernel, self.K_point, rows, cols)


def _pointwise_blocks(kernel: np.ndarray, point: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    blocks = np.array(kernel[np.ix_(rows, cols)])
    r, c = np.nonzero(rows[:, None] == cols[None, :])
    blocks[r, c] = point[rows[r]]
    d = point.shape[-1]
    return blocks.transpose(0, 2, 1, 3).reshape(len(rows) * d, len(cols) * d)


@dataclass(frozen=True)
class StandardizedInfo:
    """Standardized kernels P(i,j), P_theta(i) and the roots K(i,i)^{-1/2}."""

    P_kernel: np.ndarray
    P_theta: np.ndarray
    root_inv: np.ndarray
    mu_theta: float
    var_theta: float

    def __post_init__(self):
        object.__setattr__(self, "P_kernel", _frozen(self.P_kernel, 4, "P_kernel"))
        object.__setattr__(self, "P_theta", _frozen(self.P_theta, 2, "P_theta"))
        object.__setattr__(self, "root_inv", _frozen(self.root_inv, 3, "root_inv"))

    @property
    def n(self) -> int:
        return self.P_theta.shape[0]

    @property
    def d(self) -> int:
        return self.P_theta.shape[1]

    @property
    def sigma_theta(self) -> float:
        return float(np.sqrt(self.var_theta))

    def as_information(self) -> InformationStructure:
        """The standardized signals viewed as an information structure."""
        n, d = self.n, self.d
        return InformationStructure(
            d=d,
            mu_theta=self.mu_theta,
            var_theta=self.var_theta,
            m=np.zeros((n, d)),
            K_point=np.broadcast_to(np.eye(d), (n, d, d)),
            K_kernel=self.P_kernel,
            K_theta=self.sigma_theta * self.P_theta,
        )

    def restrict(self, idx: Sequence[int]) -> "StandardizedInfo":
        idx = np.asarray(idx, dtype=int)
        return StandardizedInfo(
            P_kernel=self.P_kernel[np.ix_(idx, idx)],
            P_theta=self.P_theta[idx],
            root_inv=self.root_inv[idx],
            mu_theta=self.mu_theta,
            var_theta=self.var_theta,
        )


@dataclass(frozen=True)
class CanonicalInfo:
    """
    Canonical signals S*(i) = h(i) theta + eps(i) with Var(S*(i)) = 1.

    g holds pointwise values (diagonal 1 - h^2 var_theta); g_kernel_diag is the
    kernel extension of g on the diagonal, zero for independent noise.
    """

    h: np.ndarray
    g: np.ndarray
    var_theta: float
    g_kernel_diag: Optional[np.ndarray] = None

    def __post_init__(self):
        h = _frozen(self.h, 1, "h")
        g = _frozen(self.g, 2, "g")
        n = h.shape[0]
        if g.shape != (n, n):
            raise DimensionMismatch(f"g has shape {g.shape}, expected {(n, n)}")
        if not np.allclose(g, g.T, atol=1e-12, rtol=0.0):
            raise ValueError("g must be symmetric")
        gap = np.abs(h ** 2 * self.var_theta + np.diag(g) - 1.0)
        if np.max(gap, initial=0.0) > NORMALIZATION_TOL:
            raise NormalizationInfeasible(
                f"Unit-variance normalization off by {np.max(gap):.3g} at agent {int(np.argmax(gap))}"
            )
        kdiag = np.zeros(n) if self.g_kernel_diag is None else self.g_kernel_diag
        kdiag = _frozen(kdiag, 1, "g_kernel_diag")
        if kdiag.shape != (n,):
            raise DimensionMismatch(f"g_kernel_diag has shape {kdiag.shape}, expected {(n,)}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "g_kernel_diag", kdiag)

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def signal_cov(self) -> np.ndarray:
        """Pointwise covariance matrix of S*(.) over the whole grid."""
        return self.var_theta * np.outer(self.h, self.h) + self.g

    def joint_covariance(self, idx: Sequence[int]) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        return _joint_matrix(
            self.var_theta,
            self.var_theta * self.h[idx],
            self.signal_cov()[np.ix_(idx, idx)],
        )


@dataclass(frozen=True)
class AffineProfile:
    """Intercepts phi0(i) and slope vectors phi(i) on standardized signals."""

    phi0: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        phi0 = _frozen(self.phi0, 1, "phi0")
        phi = _frozen(self.phi, 2, "phi")
        if phi.shape[0] != phi0.shape[0]:
            raise DimensionMismatch(f"phi0 has {phi0.shape[0]} agents, phi has {phi.shape[0]}")
        object.__setattr__(self, "phi0", phi0)
        object.__setattr__(self, "phi", phi)

    @property
    def n(self) -> int:
        return self.phi0.shape[0]

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    def slope_norms(self) -> np.ndarray:
        return np.linalg.norm(self.phi, axis=1)

    def restrict(self, idx: Sequence[int]) -> "AffineProfile":
        idx = np.asarray(idx, dtype=int)
        return AffineProfile(phi0=self.phi0[idx], phi=self.phi[idx])

    def stacked(self) -> np.ndarray:
        """Unknown vector ordering used by the discretized operator."""
        return np.concatenate([self.phi0, self.phi.reshape(-1)])


@dataclass
class PSDReport:
    """Outcome of a joint positive-semidefiniteness check."""

    passed: bool
    min_eigenvalue: float
    checked: int
    failures: List[Tuple[Tuple[int, ...], float]] = field(default_factory=list)

    def summary(self) -> str:
        status = "pass" if self.passed else f"FAIL ({len(self.failures)} subsets)"
        return f"PSD check {status}: {self.checked} subsets, min eigenvalue {self.min_eigenvalue:.3e}"


def _joint_matrix(var_theta: float, cov_theta: np.ndarray, cov_signals: np.ndarray) -> np.ndarray:
    k = cov_signals.shape[0]
    joint = np.empty((k + 1, k + 1))
    joint[0, 0] = var_theta
    joint[0, 1:] = cov_theta
    joint[1:, 0] = cov_theta
    joint[1:, 1:] = cov_signals
    return joint


def _min_eig(matrix: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0])


def joint_covariance(info: InformationStructure, idx: Sequence[int]) -> np.ndarray:
    """
    Joint covariance of (theta, S(N)) with pointwise diagonal blocks.

    Args:
        info: Information structure
        idx: Agent indices of the subset N

    Returns:
        Matrix of size 1 + |N| d
    """
    idx = np.asarray(idx, dtype=int)
    return _joint_matrix(info.var_theta, info.K_theta[idx].reshape(-1), info.pointwise_block(idx))


def team_covariance(info: InformationStructure, team: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Return (K(N), K_theta(N)) for a team."""
    team = np.asarray(team, dtype=int)
    return info.pointwise_block(team), info.K_theta[team].reshape(-1)


def default_subsets(n: int, seed: int = DEFAULT_SEED) -> List[Tuple[int, ...]]:
    """All singletons, all adjacent pairs and PSD_RANDOM_SUBSETS random subsets."""
    subsets = [(i,) for i in range(n)]
    subsets += [(i, i + 1) for i in range(n - 1)]
    if n >= 2:
        rng = np.random.default_rng(seed)
        top = min(PSD_MAX_SUBSET, n)
        for _ in range(PSD_RANDOM_SUBSETS):
            size = int(rng.integers(2, top + 1))
            subsets.append(tuple(sorted(rng.choice(n, size=size, replace=False).tolist())))
    return subsets


def _check_subsets(joint_of, subsets: Iterable[Sequence[int]], psd_tol: float) -> PSDReport:
    failures = []
    worst = np.inf
    checked = 0
    for subset in subsets:
        lam = _min_eig(joint_of(subset))
        worst = min(worst, lam)
        checked += 1
        if lam < -psd_tol:
            failures.append((tuple(int(i) for i in subset), lam))
    return PSDReport(passed=not failures, min_eigenvalue=float(worst), checked=checked, failures=failures)


def validate_joint_psd(
    info: InformationStructure,
    subsets: Optional[Sequence[Sequence[int]]] = None,
    full: bool = False,
    psd_tol: float = PSD_TOL,
    seed: int = DEFAULT_SEED,
) -> PSDReport:
    """
    Check that the joint (state + signals) covariance is PSD on agent subsets.

    Args:
        info: Information structure to check
        subsets: Agent-index sets; defaults to default_subsets
        full: Check the full n*d+1 matrix instead of subsets
        psd_tol: Accepted negativity of the minimum eigenvalue

    Returns:
        PSDReport listing the failing subsets
    """
    if full:
        subsets = [tuple(range(info.n))]
    elif subsets is None:
        subsets = default_subsets(info.n, seed)
    else:
        if len(subsets) == 0:
            raise ValueError("At least one subset is required")
        too_big = [s for s in subsets if len(s) > MAX_VALIDATION_SUBSET]
        if too_big:
            raise ValueError(f"Subsets larger than {MAX_VALIDATION_SUBSET} agents: {too_big[:3]}")
        if any(len(s) == 0 for s in subsets):
            raise ValueError("Subsets must be nonempty")

    report = _check_subsets(lambda s: joint_covariance(info, s), subsets, psd_tol)
    if report.passed:
        logger.debug(report.summary())
    else:
        logger.warning(report.summary())
    return report


def make_canonical_info(
    h,
    g_offdiag,
    var_theta: float,
    g_kernel_diag=None,
    seed: int = DEFAULT_SEED,
    psd_tol: float = PSD_TOL,
) -> CanonicalInfo:
    """
    Build a canonical structure, forcing g(i,i) = 1 - h(i)^2 var_theta.

    Args:
        h: Exposure vector
        g_offdiag: Symmetric idiosyncratic kernel with zero diagonal
        var_theta: Prior state variance
        g_kernel_diag: Kernel-diagonal extension of g (defaults to zero)
        seed: Seed for the random validation subsets

    Returns:
        Validated CanonicalInfo
    """
    if not var_theta > 0.0:
        raise ValueError(f"var_theta must be positive, got {var_theta}")
    h = np.asarray(h, dtype=float)
    g_off = np.asarray(g_offdiag, dtype=float)
    n = h.shape[0]
    if g_off.shape != (n, n):
        raise DimensionMismatch(f"g_offdiag has shape {g_off.shape}, expected {(n, n)}")
    if np.any(np.diag(g_off) != 0.0):
        raise ValueError("g_offdiag must have a zero diagonal")

    explained = h ** 2 * var_theta
    bad = np.nonzero(explained > 1.0 + 1e-12)[0]
    if bad.size:
        i = int(bad[0])
        raise NormalizationInfeasible(f"h({i})^2 * var_theta = {explained[i]:.6g} exceeds 1")

    g = g_off + np.diag(np.clip(1.0 - explained, 0.0, None))
    canon = CanonicalInfo(h=h, g=g, var_theta=var_theta, g_kernel_diag=g_kernel_diag)

    report = _check_subsets(canon.joint_covariance, default_subsets(n, seed), psd_tol)
    if not report.passed:
        subset, lam = report.failures[0]
        raise NotPSD(f"Canonical joint covariance not PSD on subset {subset} (min eigenvalue {lam:.3e})", lam)
    return canon


def canonical_to_info(c: CanonicalInfo, grid: AgentGrid, mu_theta: float = 0.0) -> InformationStructure:
    """Expand a canonical structure into covariance blocks with d = 1."""
    if grid.n != c.n:
        raise DimensionMismatch(f"Grid has {grid.n} agents, canonical structure has {c.n}")
    n = c.n
    kernel = c.var_theta * np.outer(c.h, c.h) + c.g
    kernel[np.diag_indices(n)] = c.var_theta * c.h ** 2 + c.g_kernel_diag
    return InformationStructure(
        d=1,
        mu_theta=mu_theta,
        var_theta=c.var_theta,
        m=(c.h * mu_theta)[:, None],
        K_point=np.ones((n, 1, 1)),
        K_kernel=kernel[:, :, None, None],
        K_theta=(c.h * c.var_theta)[:, None],
    )


def standardize(info: InformationStructure, pd_tol: float = PD_TOL, psd_tol: float = PSD_TOL) -> StandardizedInfo:
    """
    Standardize covariance blocks by the agents' own covariances.

    Args:
        info: Information structure with positive-definite K_point
        pd_tol: Smallest admissible own-covariance eigenvalue

    Returns:
        StandardizedInfo with P(i,j) = K(i,i)^{-1/2} K(i,j) K(j,j)^{-1/2}
    """
    vals = np.linalg.eigvalsh(info.K_point)
    low = vals[:, 0]
    if np.min(low) < pd_tol:
        i = int(np.argmin(low))
        raise SingularOwnCovariance(f"K({i},{i}) has eigenvalue {low[i]:.3e} below {pd_tol:g}")

    root_inv = sym_root(info.K_point, inverse=True, pd_tol=pd_tol)
    P_kernel = np.einsum("iab,ijbc,jcd->ijad", root_inv, info.K_kernel, root_inv)
    P_theta = np.einsum("iab,ib->ia", root_inv, info.K_theta) / info.sigma_theta

    norms = np.sum(P_theta ** 2, axis=1)
    if np.max(norms) > 1.0 + psd_tol:
        i = int(np.argmax(norms))
        raise NotPSD(f"|P_theta({i})|^2 = {norms[i]:.6g} exceeds 1")
    op_norms = np.linalg.norm(P_kernel, ord=2, axis=(2, 3))
    if np.max(op_norms) > 1.0 + psd_tol:
        i, j = np.unravel_index(int(np.argmax(op_norms)), op_norms.shape)
        raise NotPSD(f"|P({i},{j})| = {op_norms[i, j]:.6g} exceeds 1")

    logger.debug(f"Standardized {info.n} agents with d={info.d}")
    return StandardizedInfo(
        P_kernel=P_kernel,
        P_theta=P_theta,
        root_inv=root_inv,
        mu_theta=info.mu_theta,
        var_theta=info.var_theta,
    )
