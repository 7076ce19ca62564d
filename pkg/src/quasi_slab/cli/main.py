"""Main CLI entry point for quasi-slab."""

from importlib import metadata
from pathlib import Path
from typing import Optional

import click

from quasi_slab.cli.decorators import common_options, experiment_options, handle_errors
from quasi_slab.cli.experiment import resolve_config


def get_version() -> str:
    """Installed package version, else the version in pyproject.toml."""
    try:
        return metadata.version("quasi-slab")
    except metadata.PackageNotFoundError:
        pass

    import tomllib

    package_root = Path(__file__).parent.parent.parent.parent
    pyproject_path = package_root / "pyproject.toml"
    if pyproject_path.exists():
        with open(pyproject_path, "rb") as f:
            data = tomllib.load(f)
            return data.get("project", {}).get("version", "unknown")

    return "unknown"


@click.group()
@click.version_option(version=get_version(), prog_name="quasi-slab")
@click.pass_context
def cli(ctx):
    """
    quasi-slab: Quasi-Bayesian spike-and-slab inference.

    Simulate data, fit sparse regressions, graphical models and sparse
    principal components by Metropolized-Gibbs sampling or coordinate-ascent
    variational inference, and run diagnostics and cost benchmarks. Every
    command writes its artifacts and a manifest.json to the --out directory.
    """
    ctx.ensure_object(dict)


data_option = click.option(
    "--data",
    type=click.Path(exists=True, file_okay=False),
    default=None,
    help="Directory written by 'simulate'; simulates from the config when omitted",
)


@cli.command()
@click.option(
    "--mode",
    type=click.Choice(["regression", "ggm", "spca"]),
    default=None,
    help="Kind of data set (overrides config)",
)
@experiment_options
@common_options
@handle_errors
@click.pass_context
def simulate(
    ctx,
    mode: Optional[str],
    config_path: Optional[str],
    seed: Optional[int],
    out: str,
    p_dim: Optional[int],
    n_obs: Optional[int],
    n_iter: Optional[int],
    method: Optional[str],
    workers: Optional[int],
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
):
    """Generate a synthetic data set."""
    from quasi_slab.cli.simulate import simulate_command

    cfg = resolve_config(config_path, seed, p_dim, n_obs, n_iter, method, workers, mode=mode)
    simulate_command(ctx, cfg, out, verbose, yes, dry_run, json_output)


@cli.command("fit-regression")
@data_option
@experiment_options
@common_options
@handle_errors
@click.pass_context
def fit_regression(
    ctx,
    data: Optional[str],
    config_path: Optional[str],
    seed: Optional[int],
    out: str,
    p_dim: Optional[int],
    n_obs: Optional[int],
    n_iter: Optional[int],
    method: Optional[str],
    workers: Optional[int],
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
):
    """Fit a sparse linear regression quasi-posterior."""
    from quasi_slab.cli.fit import fit_regression_command

    cfg = resolve_config(
        config_path, seed, p_dim, n_obs, n_iter, method, workers, mode="regression"
    )
    fit_regression_command(ctx, cfg, out, data, verbose, yes, dry_run, json_output)


@cli.command("fit-ggm")
@click.option(
    "--edge-rule",
    type=click.Choice(["max", "min", "mean"]),
    default=None,
    help="How directed inclusions combine into edges (overrides config)",
)
@data_option
@experiment_options
@common_options
@handle_errors
@click.pass_context
def fit_ggm(
    ctx,
    edge_rule: Optional[str],
    data: Optional[str],
    config_path: Optional[str],
    seed: Optional[int],
    out: str,
    p_dim: Optional[int],
    n_obs: Optional[int],
    n_iter: Optional[int],
    method: Optional[str],
    workers: Optional[int],
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
):
    """Estimate a Gaussian graphical model by neighbourhood selection."""
    from quasi_slab.cli.fit import fit_ggm_command

    cfg = resolve_config(config_path, seed, p_dim, n_obs, n_iter, method, workers, mode="ggm")
    cfg = cfg.with_overrides(edge_rule=edge_rule)
    fit_ggm_command(ctx, cfg, out, data, verbose, yes, dry_run, json_output)


@cli.command("fit-spca")
@click.option("--cap", type=click.IntRange(min=1), default=None, help="Maximal model size (overrides config)")
@data_option
@experiment_options
@common_options
@handle_errors
@click.pass_context
def fit_spca(
    ctx,
    cap: Optional[int],
    data: Optional[str],
    config_path: Optional[str],
    seed: Optional[int],
    out: str,
    p_dim: Optional[int],
    n_obs: Optional[int],
    n_iter: Optional[int],
    method: Optional[str],
    workers: Optional[int],
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
):
    """Estimate a sparse leading principal component."""
    from quasi_slab.cli.fit import fit_spca_command

    cfg = resolve_config(config_path, seed, p_dim, n_obs, n_iter, method, workers, mode="spca")
    cfg = cfg.with_overrides(cap=cap)
    fit_spca_command(ctx, cfg, out, data, verbose, yes, dry_run, json_output)


@cli.command()
@data_option
@experiment_options
@common_options
@handle_errors
@click.pass_context
def diagnose(
    ctx,
    data: Optional[str],
    config_path: Optional[str],
    seed: Optional[int],
    out: str,
    p_dim: Optional[int],
    n_obs: Optional[int],
    n_iter: Optional[int],
    method: Optional[str],
    workers: Optional[int],
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
):
    """Check a regression fit against its known truth."""
    from quasi_slab.cli.diagnose import diagnose_command

    cfg = resolve_config(
        config_path, seed, p_dim, n_obs, n_iter, method, workers, mode="regression"
    )
    diagnose_command(ctx, cfg, out, data, verbose, yes, dry_run, json_output)


@cli.command()
@click.option(
    "--study",
    type=click.Choice(["costs", "regression", "spca"]),
    default="costs",
    show_default=True,
    help="Which study to run",
)
@experiment_options
@common_options
@handle_errors
@click.pass_context
def benchmark(
    ctx,
    study: str,
    config_path: Optional[str],
    seed: Optional[int],
    out: str,
    p_dim: Optional[int],
    n_obs: Optional[int],
    n_iter: Optional[int],
    method: Optional[str],
    workers: Optional[int],
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
):
    """Time the samplers or run a replication study."""
    from quasi_slab.cli.benchmark import benchmark_command

    mode = {"costs": "benchmark", "regression": "regression", "spca": "spca"}[study]
    cfg = resolve_config(config_path, seed, p_dim, n_obs, n_iter, method, workers, mode=mode)
    benchmark_command(ctx, cfg, out, study, verbose, yes, dry_run, json_output)


def main():
    """Main entry point for the CLI."""
    cli(obj={})


if __name__ == "__main__":
    main()
