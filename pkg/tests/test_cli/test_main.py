"""Tests for CLI main module."""

import pytest
from click.testing import CliRunner

from quasi_slab.cli.main import cli, get_version

COMMANDS = ["simulate", "fit-regression", "fit-ggm", "fit-spca", "diagnose", "benchmark"]


class TestCLIMain:
    """Test main CLI functionality."""

    @pytest.fixture
    def runner(self):
        """Create a CLI runner."""
        return CliRunner()

    def test_cli_help(self, runner):
        """Test that --help displays help message."""
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        assert "quasi-slab" in result.output
        assert "spike-and-slab" in result.output

    def test_cli_version(self, runner):
        """Test that --version displays version."""
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert "quasi-slab" in result.output

    def test_get_version(self):
        """Test version extraction from pyproject.toml."""
        version = get_version()
        assert isinstance(version, str)
        assert version

    @pytest.mark.parametrize(
        "command, blurb",
        [
            ("simulate", "Generate a synthetic data set"),
            ("fit-regression", "sparse linear regression"),
            ("fit-ggm", "neighbourhood selection"),
            ("fit-spca", "sparse leading principal component"),
            ("diagnose", "known truth"),
            ("benchmark", "replication study"),
        ],
    )
    def test_command_exists(self, runner, command, blurb):
        result = runner.invoke(cli, [command, "--help"])
        assert result.exit_code == 0
        assert blurb in result.output

    def test_common_options_on_commands(self, runner):
        """Every command takes the shared experiment and output options."""
        for command in COMMANDS:
            result = runner.invoke(cli, [command, "--help"])
            for option in ["--config", "--seed", "--out", "--verbose", "--yes", "--dry-run", "--json"]:
                assert option in result.output, f"{command} lacks {option}"

    def test_out_is_required(self, runner):
        result = runner.invoke(cli, ["simulate"])
        assert result.exit_code == 2
        assert "--out" in result.output

    def test_unknown_method_rejected_by_click(self, runner, tmp_path):
        result = runner.invoke(cli, ["fit-regression", "--out", str(tmp_path), "--method", "gibbs"])
        assert result.exit_code == 2

    def test_benchmark_studies(self, runner):
        result = runner.invoke(cli, ["benchmark", "--help"])
        for study in ["costs", "regression", "spca"]:
            assert study in result.output
