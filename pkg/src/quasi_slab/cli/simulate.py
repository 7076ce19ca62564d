"""Generate synthetic data sets."""

import click

from quasi_slab.cli.experiment import open_run, report_dry_run
from quasi_slab.cli.output import echo, print_json, success
from quasi_slab.core.config import ExperimentConfig
from quasi_slab.core.sampler import make_rng
from quasi_slab.core.simulate import simulate_ggm, simulate_regression, simulate_spiked

ARTIFACTS = {
    "regression": ["X.csv", "y.csv", "theta_star.csv"],
    "benchmark": ["X.csv", "y.csv", "theta_star.csv"],
    "ggm": ["Z.csv", "theta_star.csv"],
    "spca": ["X.csv", "theta_star.csv"],
}


def simulate_command(
    ctx: click.Context,
    cfg: ExperimentConfig,
    out: str,
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
) -> None:
    """Simulate the data set described by ``cfg.mode`` into ``out``.

    regression: X with AR(ψ) rows, y = Xθ⋆ + ε. ggm: Z = [y, X] from the same
    design. spca: spiked-covariance rows with the default sparse direction.
    """
    artifacts = ARTIFACTS[cfg.mode]
    if dry_run:
        report_dry_run("simulate", cfg, out, artifacts, json_output)
        return

    run = open_run(out, "simulate", cfg, yes)
    rng = make_rng(cfg.seed)
    if cfg.mode == "spca":
        X, theta_star = simulate_spiked(cfg, rng)
        run.write_matrix("X.csv", X)
    elif cfg.mode == "ggm":
        Z, theta_star = simulate_ggm(cfg, rng)
        run.write_matrix("Z.csv", Z, columns=[f"z{j}" for j in range(Z.shape[1])])
    else:
        X, y, theta_star = simulate_regression(cfg, rng)
        run.write_matrix("X.csv", X)
        run.write_matrix("y.csv", y, columns=["y"])
    run.write_matrix("theta_star.csv", theta_star, columns=["theta_star"])
    run.finish()

    if json_output:
        print_json({"out": out, "mode": cfg.mode, "artifacts": artifacts, "config_hash": cfg.config_hash()})
        return
    success(f"Simulated {cfg.mode} data (n={cfg.n}, p={cfg.p}) into {out}")
    if verbose:
        echo("  artifacts: " + ", ".join(artifacts))
