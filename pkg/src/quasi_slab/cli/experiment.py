"""Config resolution, run-directory setup and data loading shared by the commands."""

from pathlib import Path

import click
import numpy as np

from quasi_slab.cli.output import confirm, echo, info, print_json
from quasi_slab.core.config import ConfigError, ExperimentConfig, load_config
from quasi_slab.core.io import read_matrix, read_vector
from quasi_slab.core.rundir import RunDir


def resolve_config(
    config_path: str | None,
    seed: int | None,
    p_dim: int | None,
    n_obs: int | None,
    n_iter: int | None,
    method: str | None,
    workers: int | None,
    mode: str | None = None,
) -> ExperimentConfig:
    """Config file (or defaults) with the command-line overrides applied.

    A smaller --p also shrinks s_star and cap so they stay within range.
    """
    cfg = load_config(
        Path(config_path) if config_path else None,
        seed=seed,
        n=n_obs,
        n_iter=n_iter,
        method=method,
        workers=workers,
        mode=mode,
    )
    return cfg if p_dim is None else with_dimension(cfg, p_dim)


def with_dimension(cfg: ExperimentConfig, p: int, **overrides) -> ExperimentConfig:
    if p < 1:
        raise ConfigError(f"p must be >= 1, got {p}")
    cap = None if cfg.cap is None else min(cfg.cap, p)
    return cfg.with_overrides(p=p, s_star=min(cfg.s_star, p), cap=cap, **overrides)


def report_dry_run(
    command: str, cfg: ExperimentConfig, out: str, artifacts: list[str], json_output: bool
) -> None:
    plan = {
        "command": command,
        "out": out,
        "config": cfg.resolved().to_dict(),
        "config_hash": cfg.config_hash(),
        "artifacts": artifacts,
    }
    if json_output:
        print_json(plan)
        return
    info(f"[DRY RUN] {command} would write to {out} (config {cfg.config_hash()})")
    for key, value in plan["config"].items():
        echo(f"  {key}: {value}")
    echo("  artifacts: " + ", ".join(artifacts))


def open_run(out: str, command: str, cfg: ExperimentConfig, yes: bool) -> RunDir:
    """RunDir at ``out`` with a fresh manifest; asks before reusing a populated directory.

    Raises:
        click.Abort: If the user declines to overwrite.
    """
    run = RunDir(Path(out))
    if run.is_populated():
        if not confirm(f"{out} already contains files. Overwrite?", yes_flag=yes):
            raise click.Abort()
    run.start(command, cfg)
    return run


def read_optional_vector(path: Path) -> np.ndarray | None:
    return read_vector(path) if path.exists() else None


def load_regression_data(data_dir: str) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """(X, y, θ⋆ or None) from a ``simulate`` run directory.

    Raises:
        ConfigError: If X.csv or y.csv is missing or their sizes disagree.
    """
    root = Path(data_dir)
    for name in ("X.csv", "y.csv"):
        if not (root / name).exists():
            raise ConfigError(f"{root} has no {name}")
    X = read_matrix(root / "X.csv")
    y = read_vector(root / "y.csv")
    if X.shape[0] != y.shape[0]:
        raise ConfigError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    return X, y, read_optional_vector(root / "theta_star.csv")


def load_matrix_data(data_dir: str, name: str) -> tuple[np.ndarray, np.ndarray | None]:
    """(matrix, θ⋆ or None) from a ``simulate`` run directory."""
    root = Path(data_dir)
    if not (root / name).exists():
        raise ConfigError(f"{root} has no {name}")
    return read_matrix(root / name), read_optional_vector(root / "theta_star.csv")


def match_data(cfg: ExperimentConfig, n: int, p: int) -> ExperimentConfig:
    """Config whose ``n`` and ``p`` match data loaded from disk."""
    if cfg.n == n and cfg.p == p:
        return cfg
    return with_dimension(cfg, p, n=n)
