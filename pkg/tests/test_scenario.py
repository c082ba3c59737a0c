import numpy as np
import pandas as pd
import pytest

from src.config import DEFAULT_TOLERANCES
from src.core import canonical_to_info
from src.errors import ConfigError
from src.generators import random_canonical
from src.scenario import ScenarioLoader, parse_team_path, read_teams_file, tau_grid

TABULATED = """
seed = 3

[grid]
n = 4

[prior]
mu_theta = 0.5
var_theta = 1.0

[payoff]
family = "constant"
b = 1.0
c = 0.2
w = -0.5

[info]
family = "tabulated"
d = 1
K_point = "k_point.csv"
K_kernel = "k_kernel.csv"
K_theta = "k_theta.csv"
"""


def _write(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _minimal(extra=""):
    return '[payoff]\nfamily = "market"\ntau = 0.5\n\n[info]\nfamily = "canonical"\nh = 0.8\n' + extra


def test_load_market_scenario(scenarios_dir):
    config = ScenarioLoader(scenarios_dir / "market.toml").load()
    assert config.n == 100 and config.seed == 20240601
    assert config.market_parameters() == (0.5, 0.8)
    assert config.positive
    assert config.teams[2] == [[0], [1]]
    assert config.teams[0] == [[0]]
    assert len(config.sweep_taus) == 21
    assert config.tolerances == DEFAULT_TOLERANCES


def test_overrides_apply(scenarios_dir):
    config = ScenarioLoader(scenarios_dir / "market.toml").load(n_override=10, seed_override=4)
    assert (config.n, config.seed) == (10, 4)
    assert config.build_grid().n == 10


def test_market_info_matches_canonical(scenarios_dir):
    config = ScenarioLoader(scenarios_dir / "market.toml").load(n_override=6)
    grid = config.build_grid()
    info = config.build_info(grid)
    np.testing.assert_allclose(info.K_theta, 0.8)
    np.testing.assert_allclose(config.build_payoff(grid).w, -0.5)


@pytest.mark.parametrize("text, field", [
    (_minimal("\n[extras]\nx = 1\n"), "extras"),
    (_minimal("\n[tolerances]\nfoo = 1e-3\n"), "tolerances"),
    (_minimal("\n[prior]\nvar_theta = 0.0\n"), "prior.var_theta"),
    ('[payoff]\nfamily = "market"\ntau = 1.5\n[info]\nfamily = "canonical"\nh = 0.8\n', "payoff.tau"),
    ('[payoff]\nfamily = "quadratic"\n[info]\nfamily = "canonical"\nh = 0.8\n', "payoff.family"),
    ('[payoff]\nfamily = "market"\ntau = 0.5\n', "info"),
    (_minimal("\n[identify]\ntheta_bars = [0.0]\n"), "identify.theta_bars"),
])
def test_invalid_scenarios(tmp_path, text, field):
    with pytest.raises(ConfigError) as excinfo:
        ScenarioLoader(_write(tmp_path, text)).load()
    assert excinfo.value.field == field


def test_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioLoader(_write(tmp_path, "[grid\nn = 3")).load()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioLoader(tmp_path / "absent.toml").load()


def test_tolerance_override(tmp_path):
    config = ScenarioLoader(_write(tmp_path, _minimal("\n[tolerances]\npd_tol = 1e-8\n"))).load()
    assert config.tolerances.pd_tol == 1e-8
    assert config.tolerances.psd_tol == DEFAULT_TOLERANCES.psd_tol


def test_infeasible_exposure_is_config_error(tmp_path):
    config = ScenarioLoader(_write(tmp_path, _minimal().replace("0.8", "1.2"))).load()
    with pytest.raises(ConfigError):
        config.build_info(config.build_grid())


def _write_tabulated(tmp_path, info):
    n = info.n
    rows = [{"i": i, "a": 0, "b": 0, "value": info.K_point[i, 0, 0]} for i in range(n)]
    pd.DataFrame(rows).to_csv(tmp_path / "k_point.csv", index=False)
    rows = [{"i": i, "j": j, "a": 0, "b": 0, "value": info.K_kernel[i, j, 0, 0]} for i in range(n) for j in range(n)]
    pd.DataFrame(rows).to_csv(tmp_path / "k_kernel.csv", index=False)
    rows = [{"i": i, "a": 0, "value": info.K_theta[i, 0]} for i in range(n)]
    pd.DataFrame(rows).to_csv(tmp_path / "k_theta.csv", index=False)


def test_tabulated_information(tmp_path):
    config = ScenarioLoader(_write(tmp_path, TABULATED)).load()
    grid = config.build_grid()
    expected = canonical_to_info(random_canonical(4, seed=5, var_theta=1.0), grid, 0.5)
    _write_tabulated(tmp_path, expected)
    info = config.build_info(grid)
    assert info.mu_theta == 0.5
    np.testing.assert_allclose(info.K_point, expected.K_point)
    np.testing.assert_allclose(info.K_kernel, expected.K_kernel)
    np.testing.assert_allclose(info.K_theta, expected.K_theta)


def test_tabulated_grid_cannot_be_overridden(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioLoader(_write(tmp_path, TABULATED)).load(n_override=8)


def test_tabulated_missing_column(tmp_path):
    config = ScenarioLoader(_write(tmp_path, TABULATED)).load()
    grid = config.build_grid()
    _write_tabulated(tmp_path, canonical_to_info(random_canonical(4, seed=5, var_theta=1.0), grid))
    pd.DataFrame({"i": range(4), "value": 0.1}).to_csv(tmp_path / "k_theta.csv", index=False)
    with pytest.raises(ConfigError):
        config.build_info(grid)


def test_market_parameters_need_market_family(tmp_path):
    text = _minimal().replace('family = "market"\ntau = 0.5', 'family = "constant"\nb = 1.0\nc = 0.0\nw = 0.0')
    with pytest.raises(ConfigError):
        ScenarioLoader(_write(tmp_path, text)).load().market_parameters()


def test_tau_grid():
    assert tau_grid(0.0, 1.0, 0.25) == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert len(tau_grid(0.0, 1.0, 0.05)) == 21
    with pytest.raises(ConfigError):
        tau_grid(0.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        tau_grid(0.5, 0.2, 0.1)


def test_read_teams_file(tmp_path, scenarios_dir):
    paths = read_teams_file(scenarios_dir / "teams.txt")
    assert paths == [[[0]], [[0, 1]], [[0], [1]], [[0, 1], [2], [3]]]
    bad = tmp_path / "teams.txt"
    bad.write_text("0, x\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_teams_file(bad)


def test_team_paths_checked():
    assert parse_team_path([2, 3], "t") == [[2, 3]]
    with pytest.raises(ConfigError):
        parse_team_path([], "t")
    with pytest.raises(ConfigError):
        parse_team_path([[0], [-1]], "t")
    with pytest.raises(ConfigError):
        parse_team_path([list(range(20))], "t")
