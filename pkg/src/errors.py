"""
Exception types for the LQG identification toolkit.
Each failure mode of a stage gets its own class so the pipeline can map it to an exit code.
"""


class LQGError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(LQGError):
    """Scenario file could not be turned into valid model inputs."""

    def __init__(self, field: str, problem: str):
        self.field = field
        self.problem = problem
        super().__init__(f"{field}: {problem}")


# Model construction

class NormalizationInfeasible(LQGError, ValueError):
    """h(i)^2 * var_theta exceeds one, so no unit-variance noise exists."""


class NotPSD(LQGError):
    """A joint covariance matrix has an eigenvalue below -psd_tol."""

    def __init__(self, message: str, min_eigenvalue: float = float("nan")):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class SingularOwnCovariance(LQGError):
    """An agent's own signal covariance is not positive definite."""


class DimensionMismatch(LQGError, ValueError):
    """Arrays disagree with the grid size or signal dimension."""


# Equilibrium

class SingularSystem(LQGError):
    """One lies in the spectrum of the discretized operator."""

    def __init__(self, message: str, diagnostics=None):
        self.diagnostics = diagnostics
        super().__init__(message)


class NonConvergence(LQGError):
    """Fixed-point iteration did not reach the requested tolerance."""


class ConditionWarning(UserWarning):
    """The linear system was solved despite failing the spectral check."""


# Canonicalization and identification

class ZeroSlope(LQGError):
    """Some agent's equilibrium slope vanishes."""


class DegenerateStates(LQGError, ValueError):
    """The two conditioning states coincide."""


class ZeroVariance(LQGError):
    """Some agent's action variance vanishes."""


class InconsistentInput(LQGError):
    """Observed moments are not generated by any canonical structure."""

    def __init__(self, message: str, stage: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class ZeroExposure(LQGError):
    """Exposure vanishes somewhere, so the slope sign cannot be recovered."""


class SingularTeamCovariance(LQGError):
    """A team covariance block is singular beyond pd_tol."""


# Variance reduction

class DegenerateActions(LQGError):
    """The transformed action covariance of a team is singular."""


class ZeroVector(LQGError, ValueError):
    """A cosine was requested for a zero vector."""
