"""Fit regression, graphical-model and sparse PCA quasi-posteriors."""

import click
import numpy as np

from quasi_slab.cli.experiment import (
    load_matrix_data,
    load_regression_data,
    match_data,
    open_run,
    report_dry_run,
)
from quasi_slab.cli.output import echo, print_json, success
from quasi_slab.core.config import ConfigError, ExperimentConfig
from quasi_slab.core.diagnostics import selection_report
from quasi_slab.core.ggm import fit_ggm, fit_regression
from quasi_slab.core.model import BinaryModel, GaussianRegressionQL
from quasi_slab.core.sampler import make_rng
from quasi_slab.core.simulate import simulate_ggm, simulate_regression, simulate_spiked
from quasi_slab.core.spca import fit_spca


def _selection(trace, theta_star, threshold: float) -> dict | None:
    if trace is None or theta_star is None:
        return None
    return selection_report(trace, BinaryModel(theta_star != 0), threshold).to_dict()


def fit_regression_command(
    ctx: click.Context,
    cfg: ExperimentConfig,
    out: str,
    data: str | None,
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
) -> None:
    """Fit y on X with ``cfg.method``; simulate from ``cfg`` when no data directory is given."""
    artifacts = ["summary.json"] + (["trace.csv"] if cfg.method == "mcmc" else [])
    if dry_run:
        report_dry_run("fit-regression", cfg, out, artifacts, json_output)
        return

    if data:
        X, y, theta_star = load_regression_data(data)
        cfg = match_data(cfg, X.shape[0], X.shape[1])
    else:
        X, y, theta_star = simulate_regression(cfg, make_rng(cfg.seed))

    run = open_run(out, "fit-regression", cfg, yes)
    ql = GaussianRegressionQL(X, y, sigma2=cfg.sigma2)
    summary = fit_regression(ql, cfg.prior(), cfg.fit_settings(keep_trace=True), cfg.method)

    document = summary.to_dict()
    document["selection"] = _selection(summary.trace, theta_star, cfg.threshold)
    if summary.trace is not None:
        run.write_trace("trace.csv", summary.trace)
    run.write_json("summary.json", document)
    run.finish()

    if json_output:
        print_json(document)
        return
    selected = np.flatnonzero(summary.inclusion_probs > cfg.threshold)
    success(f"Fitted regression with {cfg.method} (n={ql.n}, p={ql.p}) into {out}")
    echo(f"  selected ({cfg.threshold:g} threshold): {selected.tolist()}")
    if verbose:
        for key, value in summary.diagnostics.items():
            echo(f"  {key}: {value:g}")


def fit_ggm_command(
    ctx: click.Context,
    cfg: ExperimentConfig,
    out: str,
    data: str | None,
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
) -> None:
    """Neighbourhood selection over the columns of Z."""
    artifacts = ["edge_probs.csv", "adjacency.csv", "precision.csv", "summary.json"]
    if dry_run:
        report_dry_run("fit-ggm", cfg, out, artifacts, json_output)
        return

    if data:
        Z, _ = load_matrix_data(data, "Z.csv")
        if Z.shape[1] < 2:
            raise ConfigError("Z must have at least two columns")
        cfg = match_data(cfg, Z.shape[0], Z.shape[1] - 1)
    else:
        Z, _ = simulate_ggm(cfg, make_rng(cfg.seed))

    run = open_run(out, "fit-ggm", cfg, yes)
    fit = fit_ggm(
        Z,
        settings=cfg.fit_settings(),
        method=cfg.method,
        workers=cfg.workers,
        edge_rule=cfg.edge_rule,
    )
    names = [f"z{j}" for j in range(Z.shape[1])]
    adjacency = fit.adjacency(cfg.threshold)
    run.write_matrix("edge_probs.csv", fit.edge_probs, columns=names)
    run.write_matrix("adjacency.csv", adjacency.astype(float), columns=names)
    run.write_matrix("precision.csv", fit.precision_estimate, columns=names)
    document = {
        "method": cfg.method,
        "edge_rule": fit.edge_rule,
        "threshold": cfg.threshold,
        "edges": [list(e) for e in fit.edges(cfg.threshold)],
        "nodes": [node.diagnostics for node in fit.node_fits],
    }
    run.write_json("summary.json", document)
    run.finish()

    if json_output:
        print_json(document)
        return
    success(f"Fitted graph over {Z.shape[1]} variables into {out}")
    echo(f"  edges ({cfg.threshold:g} threshold): {len(document['edges'])}")
    if verbose:
        for i, j in document["edges"]:
            echo(f"  {i} -- {j}: {fit.edge_probs[i, j]:.3f}")


def fit_spca_command(
    ctx: click.Context,
    cfg: ExperimentConfig,
    out: str,
    data: str | None,
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
) -> None:
    """Sparse leading principal component of X by ``cfg.method``; ``cfg.cap`` is required."""
    if cfg.cap is None:
        raise ConfigError("fit-spca requires a maximal model size: set 'cap' in the config or pass --cap")
    artifacts = ["trace.csv", "summary.json"] if cfg.method == "mcmc" else ["summary.json"]
    if dry_run:
        report_dry_run("fit-spca", cfg, out, artifacts, json_output)
        return

    if data:
        X, theta_star = load_matrix_data(data, "X.csv")
        cfg = match_data(cfg, X.shape[0], X.shape[1])
    else:
        X, theta_star = simulate_spiked(cfg, make_rng(cfg.seed))

    run = open_run(out, "fit-spca", cfg, yes)
    fit = fit_spca(
        X,
        cfg.prior(),
        sigma2=cfg.sigma2,
        config=cfg.sampler_config(),
        theta_star=theta_star,
        lasso_lambda=cfg.lasso_lambda,
        method=cfg.method,
        template_size=cfg.template_size,
        cavi_max_iter=cfg.cavi_max_iter,
        cavi_tol=cfg.cavi_tol,
    )
    document = {
        "method": fit.method,
        "v1": fit.v1,
        "sign": fit.sign,
        "inclusion_probs": fit.inclusion_probs,
        "mean_direction": fit.mean_direction(),
        "mean_projection_error": fit.mean_projection_error,
    }
    if fit.trace is not None:
        run.write_trace("trace.csv", fit.trace, full_theta=True)
    run.write_json("summary.json", document)
    run.finish()

    if json_output:
        print_json(document)
        return
    support = np.flatnonzero(fit.inclusion_probs > cfg.threshold)
    success(f"Fitted sparse PCA by {fit.method} (n={X.shape[0]}, p={X.shape[1]}, cap={cfg.cap}) into {out}")
    echo(f"  support ({cfg.threshold:g} threshold): {support.tolist()}")
    if fit.mean_projection_error is not None:
        echo(f"  mean projection error: {fit.mean_projection_error:.4f}")
