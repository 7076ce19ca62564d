"""Tests for CLI output utilities."""

import json
import logging

import click
import numpy as np
import pytest
from click.testing import CliRunner

from quasi_slab.cli.output import (
    OutputHandler,
    configure_logging,
    confirm,
    echo,
    error,
    info,
    print_json,
    success,
    warning,
)


@pytest.fixture
def package_logger():
    logger = logging.getLogger("quasi_slab")
    handlers, level, propagate = list(logger.handlers), logger.level, logger.propagate
    yield logger
    logger.handlers[:] = handlers
    logger.setLevel(level)
    logger.propagate = propagate


class TestOutputFormatting:
    """Test output formatting functions."""

    @pytest.mark.parametrize(
        "func, symbol",
        [(success, "✓"), (error, "✗"), (warning, "⚠"), (info, "ℹ")],
    )
    def test_message(self, func, symbol):
        @click.command()
        def test_cmd():
            func("Test message")

        result = CliRunner().invoke(test_cmd)
        assert "Test message" in result.output
        assert symbol in result.output or "[" in result.output

    def test_print_json_numpy(self):
        """Arrays and numpy scalars come out as plain JSON."""

        @click.command()
        def test_cmd():
            print_json({"probs": np.array([0.25, 0.75]), "p": np.int64(2), "name": "mcmc"})

        result = CliRunner().invoke(test_cmd)
        assert json.loads(result.stdout) == {"probs": [0.25, 0.75], "p": 2, "name": "mcmc"}

    def test_confirm_with_yes_flag(self):
        """Test confirm skips prompt when yes_flag is True."""
        assert confirm("Overwrite?", yes_flag=True) is True

    @pytest.mark.parametrize("answer, expected", [("y\n", "True"), ("n\n", "False")])
    def test_confirm_prompts(self, answer, expected):
        @click.command()
        def test_cmd():
            echo(f"Result: {confirm('Overwrite?')}")

        result = CliRunner().invoke(test_cmd, input=answer)
        assert f"Result: {expected}" in result.output


class TestLogging:
    """Test routing of package log records to the styled helpers."""

    def test_verbose_shows_info(self, package_logger):
        @click.command()
        def test_cmd():
            configure_logging(verbose=True)
            logging.getLogger("quasi_slab.core.sampler").info("chain finished")

        result = CliRunner().invoke(test_cmd)
        assert "chain finished" in result.output

    def test_quiet_hides_info_but_shows_warnings(self, package_logger):
        @click.command()
        def test_cmd():
            configure_logging(verbose=False)
            log = logging.getLogger("quasi_slab.core.rundir")
            log.info("hidden detail")
            log.warning("manifest unreadable")

        result = CliRunner().invoke(test_cmd)
        assert "hidden detail" not in result.output
        assert "manifest unreadable" in result.output

    def test_single_handler(self, package_logger):
        configure_logging(verbose=False)
        configure_logging(verbose=True)
        handlers = [h for h in package_logger.handlers if isinstance(h, OutputHandler)]
        assert len(handlers) == 1
        assert package_logger.level == logging.INFO
        assert package_logger.propagate is False
