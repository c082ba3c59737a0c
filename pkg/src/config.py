"""
Configuration parameters for the LQG identification toolkit.
Contains numerical tolerances, sampling limits and output settings.
"""

from dataclasses import dataclass, fields, replace

# Numerical Tolerances
PSD_TOL = 1e-8  # minimum eigenvalue accepted for joint covariance checks
PD_TOL = 1e-10  # eigenvalue floor for own covariances and team blocks
RESIDUAL_TOL = 1e-10  # relative residual accepted from the dense solve
SPEC_TOL = 1e-8  # eigenvalue distance to 1 flagged as a knife-edge
PROPORTIONAL_TOL = 1e-8  # relative least-squares residual for slope proportionality
NORMALIZATION_TOL = 1e-10  # unit-variance check on canonical structures
ZERO_EXPOSURE_TOL = 1e-10  # |h| below this leaves the slope sign unrecoverable
DEGENERATE_STATE_TOL = 1e-12  # minimum separation of the two conditioning states
INTERCEPT_BRANCH_TOL = 1e-10  # conditioning state treated as equal to the prior mean
SLOPE_CLAMP_TOL = 1e-9  # negative |h|^2 noise clamped to zero below this

# Subset Sampling
PSD_RANDOM_SUBSETS = 64  # random subsets added to singletons and adjacent pairs
PSD_MAX_SUBSET = 6  # largest random subset drawn for PSD validation
MAX_VALIDATION_SUBSET = 12  # largest caller-supplied validation subset
MAX_TEAM_SIZE = 12  # largest team accepted by the uncertainty routines
MAX_SAMPLE_SUBSET = 2000  # largest agent subset the sampler will draw

# Defaults
DEFAULT_GRID_SIZE = 100
DEFAULT_SEED = 20240601
DEFAULT_THETA_BARS = (0.0, 1.0)
DEFAULT_PERTURBATION_SEED = 7
FIXED_POINT_DAMPING = 0.8
FIXED_POINT_MAX_ITER = 10000
TAX_RESOLUTION = 1e-6
TAX_PRESCAN_POINTS = 1001
TAX_GRID_STEP = 0.01
TAX_SWEEP_H = (0.3, 0.6, 0.9)
ROUNDTRIP_H_TOL = 1e-8
ROUNDTRIP_TAU_TOL = 1e-5

# Output Configuration
OUTPUT_DIR = "outputs"
CSV_ENCODING = "ascii"
CSV_FLOAT_FORMAT = "%.17g"
CSV_LINE_TERMINATOR = "\n"
RNG_ALGORITHM = "PCG64"

EQUILIBRIUM_FILE = "equilibrium.csv"
SPECTRUM_FILE = "spectrum.csv"
IDENTIFIED_FILE = "identified.csv"
IDENTIFIED_G_FILE = "identified_g.csv"
UNCERTAINTY_FILE = "uncertainty.csv"
GAP_FILE = "gap.csv"
TAX_SWEEP_FILE = "tax_sweep.csv"
ROUNDTRIP_FILE = "roundtrip.csv"
RUN_META_FILE = "run_meta.json"

# Exit Codes
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_WELL_POSEDNESS = 2
EXIT_IDENTIFICATION = 3


@dataclass(frozen=True)
class Tolerances:
    """Tolerances a scenario may override."""

    psd_tol: float = PSD_TOL
    pd_tol: float = PD_TOL
    residual_tol: float = RESIDUAL_TOL
    spec_tol: float = SPEC_TOL
    proportional_tol: float = PROPORTIONAL_TOL

    @classmethod
    def names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    def override(self, **changes) -> "Tolerances":
        unknown = set(changes) - set(self.names())
        if unknown:
            raise KeyError(f"Unknown tolerance(s): {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in changes.items()})

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.names()}


DEFAULT_TOLERANCES = Tolerances()
