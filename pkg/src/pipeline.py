"""
Main pipeline module for the LQG identification toolkit.
Orchestrates the solve, identify, variance, tax-sweep and roundtrip workflows.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .canonical import canonicalize
from .config import *
from .core import canonical_to_info, standardize
from .equilibrium import EquilibriumSolver, build_operator
from .errors import (ConfigError, DegenerateActions, DegenerateStates, DimensionMismatch, InconsistentInput,
                     NonConvergence, NormalizationInfeasible, NotPSD, SingularOwnCovariance, SingularSystem,
                     SingularTeamCovariance, ZeroExposure, ZeroSlope, ZeroVariance, ZeroVector)
from .identification import higher_order_uncertainty, identify, nested_projection_oracle, resolve_signs_positive
from .logger import get_logger
from .market import MarketScenario, policy_roundtrip, revenue_sweep
from .outcome import condition_on_state, empirical_conditional, outcome_moments
from .outputs_writer import OutputsWriter
from .scenario import ScenarioConfig, TeamPath
from .variance import ActionMap, cosine_ratio, gap_report

logger = get_logger()

COMMANDS = ("solve", "identify", "variance", "tax-sweep", "roundtrip")

CONFIG_ERRORS = (ConfigError, NotPSD, NormalizationInfeasible, SingularOwnCovariance, DimensionMismatch)
WELL_POSEDNESS_ERRORS = (SingularSystem, NonConvergence)
IDENTIFICATION_ERRORS = (DegenerateStates, ZeroVariance, InconsistentInput, ZeroExposure, ZeroSlope,
                         SingularTeamCovariance, DegenerateActions, ZeroVector)


def format_team(team: Sequence[int]) -> str:
    return ",".join(str(i) for i in team)


def format_path(path: TeamPath) -> str:
    return ";".join(format_team(team) for team in path)


class LQGPipeline:
    """Main pipeline running one command of the toolkit against a scenario."""

    def __init__(self, config: ScenarioConfig, output_dir: str = OUTPUT_DIR, draws: Optional[int] = None,
                 positive: Optional[bool] = None, theta_bars: Optional[Tuple[float, float]] = None,
                 teams: Optional[List[TeamPath]] = None, taus: Optional[Sequence[float]] = None):
        self.config = config
        self.output_dir = output_dir
        self.draws = config.draws if draws is None else draws
        self.positive = config.positive if positive is None else positive
        self.theta_bars = config.theta_bars if theta_bars is None else theta_bars
        self.teams = config.teams if teams is None else teams
        self.taus = config.sweep_taus if taus is None else tuple(taus)

        tol = config.tolerances
        self.solver = EquilibriumSolver(spec_tol=tol.spec_tol, residual_tol=tol.residual_tol)
        self.outputs_writer = OutputsWriter(output_dir)

        # Pipeline state
        self.command = None
        self.grid = None
        self.payoff = None
        self.info = None
        self.std = None
        self.operator = None
        self.wellposedness = None
        self.profile = None
        self.files: Dict[str, str] = {}
        self.statistics: Dict[str, Any] = {}

    def run(self, command: str) -> Dict[str, Any]:
        """
        Execute one command and map its failures onto exit codes.

        Returns:
            Dictionary with status, exit_code, files and statistics
        """
        if command not in COMMANDS:
            raise ValueError(f"Unknown command {command!r}")
        self.command = command
        logger.info(f"Starting LQG pipeline: {command}")
        logger.info("=" * 60)

        runner = {
            "solve": self.run_solve,
            "identify": self.run_identify,
            "variance": self.run_variance,
            "tax-sweep": self.run_tax_sweep,
            "roundtrip": self.run_roundtrip,
        }[command]
        try:
            runner()
            self._write_meta()
        except CONFIG_ERRORS as e:
            logger.error(f"Configuration error: {e}")
            return self._create_error_result(str(e), EXIT_CONFIG)
        except WELL_POSEDNESS_ERRORS as e:
            logger.error(f"Well-posedness failure: {e}")
            self._write_meta()
            return self._create_error_result(str(e), EXIT_WELL_POSEDNESS)
        except IDENTIFICATION_ERRORS as e:
            logger.error(f"{type(e).__name__}: {e}")
            self._write_meta()
            return self._create_error_result(f"{type(e).__name__}: {e}", EXIT_IDENTIFICATION)

        logger.info("=" * 60)
        logger.info(f"Pipeline completed successfully: {command}")
        return self._create_success_result()

    def _prepare(self):
        logger.info("Step 1: Building grid, payoff and information structure...")
        self.grid = self.config.build_grid()
        self.payoff = self.config.build_payoff(self.grid)
        self.info = self.config.build_info(self.grid)

    def _solve(self):
        """Standardize, discretize and solve; the spectrum is written before solving."""
        self._prepare()
        tol = self.config.tolerances
        logger.info("Step 2: Standardizing signals and discretizing the equilibrium equation...")
        self.std = standardize(self.info, pd_tol=tol.pd_tol, psd_tol=tol.psd_tol)
        self.operator = build_operator(self.payoff, self.std, self.grid)

        logger.info("Step 3: Spectral well-posedness check...")
        self.wellposedness = self.solver.spectral_check(self.operator)
        self.files["spectrum"] = str(self.outputs_writer.write_spectrum(self.wellposedness))
        self.statistics["dist_to_one"] = self.wellposedness.dist_to_one

        logger.info("Step 4: Solving for the equilibrium profile...")
        self.profile = self.solver.solve_equilibrium(self.operator, diagnostics=self.wellposedness)
        self.statistics["residual"] = self.operator.residual_norm(self.profile)

    def run_solve(self):
        self._solve()
        logger.info("Step 5: Writing equilibrium.csv...")
        self.files["equilibrium"] = str(self.outputs_writer.write_equilibrium(self.profile))
        self.statistics.update(n=self.profile.n, d=self.profile.d)

    def run_identify(self):
        """Identify the canonical structure from exact or sampled conditional distributions."""
        self._solve()
        logger.info("Step 5: Computing conditional action distributions...")
        moments = outcome_moments(self.std, self.profile)
        if self.draws == 1:
            raise ConfigError("identify.draws", "at least two draws are needed for a sample covariance")
        if self.draws > 0:
            seeds = np.random.SeedSequence(self.config.seed).spawn(2)
            logger.info(f"Sampling {self.draws} draws per conditioning state")
            conditionals = [empirical_conditional(moments, tb, self.draws, seed=s)
                            for tb, s in zip(self.theta_bars, seeds)]
        else:
            conditionals = [condition_on_state(moments, tb) for tb in self.theta_bars]

        logger.info("Step 6: Identifying the canonical structure...")
        idc = identify(conditionals[0], conditionals[1], (self.info.mu_theta, self.info.var_theta),
                       pd_tol=self.config.tolerances.pd_tol)
        signed = resolve_signs_positive(idc) if self.positive else None

        logger.info("Step 7: Writing identified.csv and identified_g.csv...")
        agents, pairs = self.outputs_writer.write_identified(idc, signed)
        self.files.update(identified=str(agents), identified_g=str(pairs))
        self.statistics.update(n=idc.n, draws=self.draws, abs_h_min=float(idc.abs_h.min()),
                               abs_h_max=float(idc.abs_h.max()))

    def run_variance(self):
        """Higher-order uncertainty along team paths and the signal/action gap per team."""
        if not self.teams:
            raise ConfigError("variance.teams", "no team paths given (use [variance] teams or --teams)")
        largest = max(i for path in self.teams for team in path for i in team)
        if largest >= self.config.n:
            raise ConfigError("variance.teams", f"agent {largest} is outside the grid of {self.config.n} agents")
        self._solve()
        tol = self.config.tolerances

        logger.info("Step 5: Canonicalizing the equilibrium...")
        canon, _ = canonicalize(self.std, self.profile, pd_tol=tol.pd_tol)
        canon_info = canonical_to_info(canon, self.grid, self.info.mu_theta)
        moments = outcome_moments(self.std, self.profile)
        idc = identify(condition_on_state(moments, self.theta_bars[0]),
                       condition_on_state(moments, self.theta_bars[1]),
                       (self.info.mu_theta, self.info.var_theta), pd_tol=tol.pd_tol)

        logger.info(f"Step 6: Higher-order uncertainty along {len(self.teams)} team paths...")
        rows = []
        for path in self.teams:
            identified = higher_order_uncertainty(idc, None, path, pd_tol=tol.pd_tol)
            oracle = nested_projection_oracle(canon_info, path, pd_tol=tol.pd_tol)
            rows.append({"path": format_path(path), "R_identified": identified, "R_oracle": oracle,
                         "abs_diff": abs(identified - oracle)})
        uncertainty = pd.DataFrame(rows, columns=["path", "R_identified", "R_oracle", "abs_diff"])

        logger.info("Step 7: Signal- and action-based variance reduction per team...")
        std_info = self.std.as_information()
        amap = ActionMap.from_profile(self.profile)
        teams = list(dict.fromkeys(tuple(team) for path in self.teams for team in path))
        rows = []
        for team in teams:
            report = gap_report(std_info, amap, team, pd_tol=tol.pd_tol, proportional_tol=tol.proportional_tol)
            cos2 = cosine_ratio(self.std, self.profile, team[0], pd_tol=tol.pd_tol)[1] if len(team) == 1 else np.nan
            rows.append({"team": format_team(team), "r_signal": report.r_signal, "r_action": report.r_action,
                         "gap": report.gap, "ssr": report.ssr, "proportional": report.proportional,
                         "cos2": cos2})
        gap = pd.DataFrame(rows, columns=["team", "r_signal", "r_action", "gap", "ssr", "proportional", "cos2"])

        logger.info("Step 8: Writing uncertainty.csv and gap.csv...")
        self.files["uncertainty"] = str(self.outputs_writer.write_uncertainty(uncertainty))
        self.files["gap"] = str(self.outputs_writer.write_gap(gap))
        self.statistics.update(paths=len(self.teams), teams=len(teams),
                               max_abs_diff=float(uncertainty["abs_diff"].max()),
                               max_gap=float(gap["gap"].max()))

    def run_tax_sweep(self):
        logger.info(f"Step 1: Sweeping {len(self.taus)} tax rates for h in {list(self.config.sweep_h)}...")
        if not self.taus:
            raise ConfigError("tax_sweep", "empty tax grid")
        frame = revenue_sweep(self.config.sweep_h, self.taus, n=self.config.n, solver=self.solver)
        logger.info("Step 2: Writing tax_sweep.csv...")
        self.files["tax_sweep"] = str(self.outputs_writer.write_tax_sweep(frame))
        self.statistics.update(rows=len(frame), h_values=len(self.config.sweep_h))

    def run_roundtrip(self):
        """Observe at the current tax, identify h and compare the implied optimal tax with the truth."""
        tau, h = self.config.market_parameters()
        scenario = MarketScenario(tau=tau, h=h, grid=self.config.build_grid())
        logger.info(f"Step 1: Round trip at tau={tau:g}, h={h:g}...")
        report = policy_roundtrip(scenario, theta_bars=self.theta_bars, solver=self.solver)
        if not report.passed:
            logger.warning(f"Round trip outside tolerance: h error {report.h_error:.3e}, "
                           f"tau error {report.tau_error:.3e}")
        logger.info("Step 2: Writing roundtrip.csv...")
        self.files["roundtrip"] = str(self.outputs_writer.write_roundtrip(report.as_dict()))
        self.statistics.update(report.as_dict())

    def _write_meta(self):
        meta = {
            "version": __version__,
            "command": self.command,
            "scenario": Path(self.config.source).name,
            "seed": self.config.seed,
            "n": self.config.n,
            "draws": self.draws,
            "rng": RNG_ALGORITHM,
            "tolerances": self.config.tolerances.as_dict(),
        }
        self.files["run_meta"] = str(self.outputs_writer.write_run_meta(meta))

    def _create_success_result(self) -> Dict[str, Any]:
        """Create success result dictionary."""
        return {
            'status': 'success',
            'command': self.command,
            'exit_code': EXIT_OK,
            'timestamp': datetime.now().isoformat(),
            'files': dict(self.files),
            'statistics': dict(self.statistics),
        }

    def _create_error_result(self, error_message: str, exit_code: int) -> Dict[str, Any]:
        """Create error result dictionary."""
        return {
            'status': 'error',
            'command': self.command,
            'exit_code': exit_code,
            'timestamp': datetime.now().isoformat(),
            'error': error_message,
            'files': dict(self.files) or None,
            'statistics': dict(self.statistics) or None,
        }

    def get_pipeline_summary(self) -> str:
        """
        Get a human-readable summary of the pipeline execution.

        Returns:
            Formatted summary string
        """
        if self.command is None:
            return "Pipeline not yet executed."

        lines = [f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}" for k, v in sorted(self.statistics.items())]
        files = [f"- {name}: {path}" for name, path in sorted(self.files.items())]
        return "\n".join([
            f"LQG {self.command} summary",
            "=" * 40,
            f"Scenario: {Path(self.config.source).name} (n={self.config.n}, seed={self.config.seed})",
            "",
            *lines,
            "",
            "Output Files:",
            *files,
        ])
