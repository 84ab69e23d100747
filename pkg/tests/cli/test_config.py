"""
Tests for run configuration layering and validation.
"""
import pytest

from services.config import ENV_PREFIX, RunConfig, env_overrides, load_run_config, read_config_file
from services.errors import ConfigError


@pytest.fixture
def settings_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(
        "# slice settings\n"
        "alpha = 0.1\n"
        "mu = 0.2   # trailing comment\n"
        "\n"
        "n-alpha = 7\n",
        encoding="utf-8",
    )
    return path


class TestReadConfigFile:
    """Tests for the flat key = value format."""

    def test_parses_keys_and_comments(self, settings_file):
        """Comments and blank lines should be skipped; dashes become underscores."""
        assert read_config_file(settings_file) == {"alpha": "0.1", "mu": "0.2", "n_alpha": "7"}

    def test_missing_file(self, tmp_path):
        """A missing file should be a configuration error."""
        with pytest.raises(ConfigError):
            read_config_file(tmp_path / "absent.conf")

    def test_malformed_line(self, tmp_path):
        """A line without '=' should be rejected with its line number."""
        path = tmp_path / "bad.conf"
        path.write_text("alpha = 0.5\nmu 0.1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=":2:"):
            read_config_file(path)


class TestLayering:
    """Tests for file < environment < command line precedence."""

    def test_precedence(self, settings_file):
        """Later sources should override earlier ones key by key."""
        environ = {f"{ENV_PREFIX}ALPHA": "0.3", f"{ENV_PREFIX}N_ALPHA": "9"}
        config = load_run_config({"alpha": 0.5, "mu": None}, settings_file, environ)
        assert config.alpha == 0.5
        assert config.mu == 0.2
        assert config.n_alpha == 9

    def test_env_reads_known_keys_only(self):
        """Only FLIPSCOPE_<KEY> for known keys should be picked up."""
        environ = {f"{ENV_PREFIX}GAMMA": "1.5", f"{ENV_PREFIX}UNKNOWN": "1", "GAMMA": "3"}
        assert env_overrides(environ) == {"gamma": "1.5"}

    def test_defaults(self):
        """Without any source the model defaults should apply."""
        config = load_run_config(environ={})
        assert config.alpha is None
        assert config.fixed_params()["c"] == -2.0
        assert config.detectors == ["split"]


class TestValidation:
    """Tests for rejected configurations."""

    def test_unknown_key(self, tmp_path):
        """Unknown keys should be rejected."""
        path = tmp_path / "run.conf"
        path.write_text("alpah = 0.5\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="alpah"):
            load_run_config(config_path=path, environ={})

    def test_inverted_range(self):
        """alpha_min above alpha_max should be rejected."""
        with pytest.raises(ConfigError):
            load_run_config({"alpha_min": 0.7, "alpha_max": 0.3}, environ={})

    def test_tolerance_bounds(self):
        """Integrator tolerances should stay within [1e-14, 1e-3]."""
        with pytest.raises(ConfigError):
            load_run_config({"rel_tol": 0.1}, environ={})

    def test_loops_bounded(self):
        """Loop counts should be between 1 and 16."""
        with pytest.raises(ConfigError):
            load_run_config({"loops": 17}, environ={})

    def test_detectors_split_on_commas(self):
        """A comma-separated detector list should become a list."""
        config = load_run_config(environ={f"{ENV_PREFIX}DETECTORS": "split, zeta-change"})
        assert config.detectors == ["split", "zeta-change"]


class TestRunConfig:
    """Tests for RunConfig helpers."""

    def test_require(self):
        """require should name every missing key."""
        with pytest.raises(ConfigError, match="alpha, mu"):
            RunConfig().require("alpha", "mu")

    def test_params(self):
        """params should combine alpha and mu with the fixed parameters."""
        p = RunConfig(alpha=0.5, mu=-0.001, gamma=1.5).params()
        assert (p.alpha, p.mu, p.gamma) == (0.5, -0.001, 1.5)

    def test_params_override(self):
        """Explicit alpha and mu should win over the configured ones."""
        assert RunConfig(alpha=0.5, mu=0.0).params(mu=0.002).mu == 0.002

    def test_integrator(self):
        """integrator should carry the configured tolerances."""
        cfg = RunConfig(rel_tol=1e-9, t_max=10.0).integrator()
        assert cfg.rel_tol == 1e-9
        assert cfg.t_max == 10.0
