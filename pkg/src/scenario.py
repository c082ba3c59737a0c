"""
Scenario loading module for the LQG identification toolkit.
Reads TOML scenario files and the CSV tables they reference, and turns them
into validated grids, payoffs and information structures.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .config import *
from .core import AgentGrid, CanonicalInfo, InformationStructure, PayoffStructure, canonical_to_info, make_canonical_info
from .errors import ConfigError, LQGError
from .logger import get_logger
from .market import market_payoff

logger = get_logger()

PAYOFF_FAMILIES = ("market", "constant", "tabulated")
INFO_FAMILIES = ("canonical", "tabulated")

VECTOR_COLUMNS = ["value"]
K_POINT_COLUMNS = ["i", "a", "b", "value"]
K_KERNEL_COLUMNS = ["i", "j", "a", "b", "value"]
K_THETA_COLUMNS = ["i", "a", "value"]

TeamPath = List[List[int]]


@dataclass
class ScenarioConfig:
    """Validated contents of a scenario file."""

    source: Path
    seed: int
    n: int
    mu_theta: float
    var_theta: float
    payoff: Dict[str, Any]
    info: Dict[str, Any]
    tolerances: Tolerances = DEFAULT_TOLERANCES
    theta_bars: Tuple[float, float] = DEFAULT_THETA_BARS
    draws: int = 0
    positive: bool = False
    teams: List[TeamPath] = field(default_factory=list)
    sweep_h: Tuple[float, ...] = TAX_SWEEP_H
    sweep_taus: Tuple[float, ...] = ()

    @property
    def base_dir(self) -> Path:
        return self.source.parent

    def build_grid(self) -> AgentGrid:
        return AgentGrid.uniform(self.n)

    def build_payoff(self, grid: AgentGrid) -> PayoffStructure:
        """Payoff structure on the grid."""
        spec = self.payoff
        family = spec["family"]
        try:
            if family == "market":
                return market_payoff(spec["tau"], grid.n)
            if family == "constant":
                return PayoffStructure.constant(grid.n, b=spec["b"], c=spec["c"], w=spec["w"])
            b = _read_vector(self.base_dir / spec["b"], grid.n, "payoff.b")
            c = _read_vector(self.base_dir / spec["c"], grid.n, "payoff.c")
            w = _read_matrix(self.base_dir / spec["w"], grid.n, "payoff.w")
            return PayoffStructure(b=b, c=c, w=w)
        except ConfigError:
            raise
        except (LQGError, ValueError) as exc:
            raise ConfigError("payoff", str(exc)) from exc

    def build_canonical(self, grid: AgentGrid) -> CanonicalInfo:
        """Canonical structure of a canonical-family scenario."""
        spec = self.info
        if spec["family"] != "canonical":
            raise ConfigError("info.family", "a canonical structure is required for this command")
        h = spec["h"]
        if isinstance(h, str):
            h = _read_vector(self.base_dir / h, grid.n, "info.h")
        else:
            h = np.broadcast_to(np.asarray(h, dtype=float), (grid.n,))
            if h.shape != (grid.n,):
                raise ConfigError("info.h", f"expected a scalar or {grid.n} values")
        g = spec.get("g", "iid")
        if g == "iid":
            g_off = np.zeros((grid.n, grid.n))
        else:
            g_off = _read_matrix(self.base_dir / g, grid.n, "info.g")
            np.fill_diagonal(g_off, 0.0)
        kdiag = spec.get("g_kernel_diag")
        if isinstance(kdiag, str):
            kdiag = _read_vector(self.base_dir / kdiag, grid.n, "info.g_kernel_diag")
        try:
            return make_canonical_info(h, g_off, self.var_theta, g_kernel_diag=kdiag, seed=self.seed,
                                       psd_tol=self.tolerances.psd_tol)
        except (LQGError, ValueError) as exc:
            raise ConfigError("info", str(exc)) from exc

    def build_info(self, grid: AgentGrid) -> InformationStructure:
        """Information structure on the grid."""
        if self.info["family"] == "canonical":
            return canonical_to_info(self.build_canonical(grid), grid, self.mu_theta)
        try:
            return _read_tabulated_info(self, grid)
        except ConfigError:
            raise
        except (LQGError, ValueError) as exc:
            raise ConfigError("info", str(exc)) from exc

    def market_parameters(self) -> Tuple[float, float]:
        """(tau, h) of a symmetric market scenario."""
        if self.payoff["family"] != "market":
            raise ConfigError("payoff.family", "the market family is required for this command")
        h = self.info.get("h") if self.info["family"] == "canonical" else None
        if not isinstance(h, (int, float)) or self.info.get("g", "iid") != "iid":
            raise ConfigError("info.h", "a scalar exposure with i.i.d. noise is required for this command")
        if self.mu_theta != 0.0 or self.var_theta != 1.0:
            raise ConfigError("prior", "market scenarios use mu_theta = 0 and var_theta = 1")
        return float(self.payoff["tau"]), float(h)


class ScenarioLoader:
    """Handles loading and validation of scenario files."""

    def __init__(self, path):
        self.path = Path(path)

    def load(self, n_override: Optional[int] = None, seed_override: Optional[int] = None) -> ScenarioConfig:
        """
        Parse and validate the scenario file.

        Args:
            n_override: Grid size from the command line
            seed_override: Seed from the command line

        Returns:
            ScenarioConfig
        """
        if not self.path.exists():
            raise ConfigError(str(self.path), "file not found")
        logger.info(f"Loading scenario from {self.path.name}")
        try:
            with open(self.path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(self.path), f"invalid TOML: {exc}") from exc

        known = {"seed", "grid", "prior", "payoff", "info", "identify", "variance", "tax_sweep", "tolerances"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section or key")

        seed = _int(raw.get("seed", DEFAULT_SEED), "seed") if seed_override is None else seed_override
        grid = _table(raw, "grid")
        n = _int(grid.get("n", DEFAULT_GRID_SIZE), "grid.n") if n_override is None else n_override
        if n < 1:
            raise ConfigError("grid.n", f"must be a positive integer, got {n}")

        prior = _table(raw, "prior")
        mu_theta = _float(prior.get("mu_theta", 0.0), "prior.mu_theta")
        var_theta = _float(prior.get("var_theta", 1.0), "prior.var_theta")
        if var_theta <= 0.0:
            raise ConfigError("prior.var_theta", f"must be positive, got {var_theta}")

        payoff = self._payoff_spec(_table(raw, "payoff", required=True))
        info = self._info_spec(_table(raw, "info", required=True))
        tolerances = self._tolerances(_table(raw, "tolerances"))

        identify = _table(raw, "identify")
        theta_bars = identify.get("theta_bars", list(DEFAULT_THETA_BARS))
        if not isinstance(theta_bars, list) or len(theta_bars) != 2:
            raise ConfigError("identify.theta_bars", "expected a list of two numbers")
        theta_bars = (_float(theta_bars[0], "identify.theta_bars"), _float(theta_bars[1], "identify.theta_bars"))
        draws = _int(identify.get("draws", 0), "identify.draws")
        positive = bool(identify.get("positive", False))

        variance = _table(raw, "variance")
        teams = [parse_team_path(p, f"variance.teams[{k}]") for k, p in enumerate(variance.get("teams", []))]

        sweep = _table(raw, "tax_sweep")
        sweep_h = tuple(_float(h, "tax_sweep.h") for h in sweep.get("h", list(TAX_SWEEP_H)))
        taus = tau_grid(
            _float(sweep.get("tau_start", 0.0), "tax_sweep.tau_start"),
            _float(sweep.get("tau_stop", 1.0), "tax_sweep.tau_stop"),
            _float(sweep.get("tau_step", TAX_GRID_STEP), "tax_sweep.tau_step"),
        )

        config = ScenarioConfig(
            source=self.path, seed=seed, n=n, mu_theta=mu_theta, var_theta=var_theta,
            payoff=payoff, info=info, tolerances=tolerances, theta_bars=theta_bars, draws=draws,
            positive=positive, teams=teams, sweep_h=sweep_h, sweep_taus=taus,
        )
        if n_override is not None and "tabulated" in (payoff["family"], info["family"]):
            raise ConfigError("grid.n", "cannot override the grid size of tabulated inputs")
        logger.info(f"Scenario: n={n}, payoff={payoff['family']}, info={info['family']}, seed={seed}")
        return config

    @staticmethod
    def _payoff_spec(spec: Dict[str, Any]) -> Dict[str, Any]:
        family = spec.get("family")
        if family not in PAYOFF_FAMILIES:
            raise ConfigError("payoff.family", f"expected one of {PAYOFF_FAMILIES}, got {family!r}")
        if family == "market":
            tau = _float(_require(spec, "tau", "payoff"), "payoff.tau")
            if not 0.0 <= tau <= 1.0:
                raise ConfigError("payoff.tau", f"must lie in [0, 1], got {tau}")
            return {"family": family, "tau": tau}
        if family == "constant":
            return {"family": family, **{k: _float(_require(spec, k, "payoff"), f"payoff.{k}") for k in ("b", "c", "w")}}
        return {"family": family, **{k: _str(_require(spec, k, "payoff"), f"payoff.{k}") for k in ("b", "c", "w")}}

    @staticmethod
    def _info_spec(spec: Dict[str, Any]) -> Dict[str, Any]:
        family = spec.get("family")
        if family not in INFO_FAMILIES:
            raise ConfigError("info.family", f"expected one of {INFO_FAMILIES}, got {family!r}")
        if family == "canonical":
            h = _require(spec, "h", "info")
            if isinstance(h, list):
                h = [_float(v, "info.h") for v in h]
            elif not isinstance(h, str):
                h = _float(h, "info.h")
            g = spec.get("g", "iid")
            if not isinstance(g, str):
                raise ConfigError("info.g", "expected 'iid' or a CSV path")
            out = {"family": family, "h": h, "g": g}
            if "g_kernel_diag" in spec:
                out["g_kernel_diag"] = _str(spec["g_kernel_diag"], "info.g_kernel_diag")
            return out
        d = _int(_require(spec, "d", "info"), "info.d")
        if d < 1:
            raise ConfigError("info.d", f"must be positive, got {d}")
        out = {"family": family, "d": d}
        for key in ("K_point", "K_kernel", "K_theta"):
            out[key] = _str(_require(spec, key, "info"), f"info.{key}")
        if "m" in spec:
            out["m"] = _str(spec["m"], "info.m")
        return out

    @staticmethod
    def _tolerances(spec: Dict[str, Any]) -> Tolerances:
        try:
            return DEFAULT_TOLERANCES.override(**{k: _float(v, f"tolerances.{k}") for k, v in spec.items()})
        except KeyError as exc:
            raise ConfigError("tolerances", str(exc.args[0])) from exc


def tau_grid(start: float, stop: float, step: float) -> Tuple[float, ...]:
    """Inclusive tax grid start:step:stop inside [0, 1]."""
    if step <= 0.0:
        raise ConfigError("tax_sweep.tau_step", f"must be positive, got {step}")
    if not 0.0 <= start <= stop <= 1.0:
        raise ConfigError("tax_sweep", f"need 0 <= tau_start <= tau_stop <= 1, got {start}, {stop}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    taus = np.round(start + step * np.arange(count), 12)
    return tuple(float(t) for t in np.clip(taus, 0.0, 1.0))


def parse_team_path(path, where: str) -> TeamPath:
    """A path is a list of teams; a bare team [0, 1] is read as a one-team path."""
    if not isinstance(path, list) or not path:
        raise ConfigError(where, "expected a nonempty list")
    if all(isinstance(x, int) for x in path):
        path = [path]
    teams = []
    for team in path:
        if not isinstance(team, list) or not team or not all(isinstance(x, int) and x >= 0 for x in team):
            raise ConfigError(where, "each team must be a nonempty list of agent indices")
        if len(team) > MAX_TEAM_SIZE:
            raise ConfigError(where, f"teams are limited to {MAX_TEAM_SIZE} agents, got {len(team)}")
        teams.append([int(x) for x in team])
    return teams


def read_teams_file(path) -> List[TeamPath]:
    """
    Read team paths from a text file.

    One path per line; teams are separated by ';' and agents by ',' or
    whitespace. Blank lines and lines starting with '#' are skipped.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "teams file not found")
    paths = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            teams = [[int(tok) for tok in chunk.replace(",", " ").split()] for chunk in line.split(";")]
        except ValueError as exc:
            raise ConfigError(f"{path.name}:{lineno}", f"bad agent index ({exc})") from exc
        paths.append(parse_team_path(teams, f"{path.name}:{lineno}"))
    if not paths:
        raise ConfigError(str(path), "no team paths found")
    return paths


def _table(raw: Dict[str, Any], name: str, required: bool = False) -> Dict[str, Any]:
    value = raw.get(name)
    if value is None:
        if required:
            raise ConfigError(name, "missing section")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(name, "expected a table")
    return value


def _require(spec: Dict[str, Any], key: str, section: str):
    if key not in spec:
        raise ConfigError(f"{section}.{key}", "missing required field")
    return spec[key]


def _float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    return float(value)


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    return int(value)


def _str(value, where: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(where, f"expected a file path, got {value!r}")
    return value


def _load_csv(path: Path, columns: Sequence[str], where: str) -> pd.DataFrame:
    if not path.exists():
        raise ConfigError(where, f"file not found: {path}")
    df = pd.read_csv(path, encoding=CSV_ENCODING)
    missing = set(columns) - set(df.columns)
    if missing:
        raise ConfigError(where, f"missing required columns {sorted(missing)} in {path.name}")
    if df[list(columns)].isna().any().any():
        raise ConfigError(where, f"empty cells in {path.name}")
    return df


def _read_vector(path: Path, n: int, where: str) -> np.ndarray:
    df = _load_csv(path, VECTOR_COLUMNS, where)
    if len(df) != n:
        raise ConfigError(where, f"expected {n} rows, found {len(df)} in {path.name}")
    if "agent" in df.columns:
        df = df.sort_values("agent")
    return df["value"].to_numpy(dtype=float)


def _read_matrix(path: Path, n: int, where: str) -> np.ndarray:
    if not path.exists():
        raise ConfigError(where, f"file not found: {path}")
    matrix = pd.read_csv(path, header=None, encoding=CSV_ENCODING).to_numpy(dtype=float)
    if matrix.shape != (n, n):
        raise ConfigError(where, f"expected a {n}x{n} matrix, found {matrix.shape} in {path.name}")
    return matrix


def _fill_long(df: pd.DataFrame, shape: Tuple[int, ...], keys: Sequence[str], where: str) -> Tuple[np.ndarray, np.ndarray]:
    out = np.zeros(shape)
    seen = np.zeros(shape, dtype=bool)
    index = tuple(df[k].to_numpy(dtype=int) for k in keys)
    for axis, (k, size) in enumerate(zip(keys, shape)):
        if np.any(index[axis] < 0) or np.any(index[axis] >= size):
            raise ConfigError(where, f"column {k} out of range 0..{size - 1}")
    out[index] = df["value"].to_numpy(dtype=float)
    seen[index] = True
    return out, seen


def _read_tabulated_info(config: ScenarioConfig, grid: AgentGrid) -> InformationStructure:
    spec, n, base = config.info, grid.n, config.base_dir
    d = spec["d"]

    df = _load_csv(base / spec["K_point"], K_POINT_COLUMNS, "info.K_point")
    K_point, seen = _fill_long(df, (n, d, d), ("i", "a", "b"), "info.K_point")
    K_point = np.where(seen, K_point, K_point.transpose(0, 2, 1))

    df = _load_csv(base / spec["K_kernel"], K_KERNEL_COLUMNS, "info.K_kernel")
    K_kernel, seen = _fill_long(df, (n, n, d, d), ("i", "j", "a", "b"), "info.K_kernel")
    K_kernel = np.where(seen, K_kernel, K_kernel.transpose(1, 0, 3, 2))

    df = _load_csv(base / spec["K_theta"], K_THETA_COLUMNS, "info.K_theta")
    K_theta, _ = _fill_long(df, (n, d), ("i", "a"), "info.K_theta")

    m = np.zeros((n, d))
    if "m" in spec:
        df = _load_csv(base / spec["m"], K_THETA_COLUMNS, "info.m")
        m, _ = _fill_long(df, (n, d), ("i", "a"), "info.m")

    logger.info(f"Loaded tabulated information structure: n={n}, d={d}")
    return InformationStructure(d=d, mu_theta=config.mu_theta, var_theta=config.var_theta, m=m,
                                K_point=K_point, K_kernel=K_kernel, K_theta=K_theta,
                                psd_tol=config.tolerances.psd_tol)
