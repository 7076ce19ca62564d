"""Diagnostics of a regression fit against its known truth."""

import click
import numpy as np

from quasi_slab.cli.experiment import load_regression_data, match_data, open_run, report_dry_run
from quasi_slab.cli.output import echo, print_json, success, warning
from quasi_slab.core.config import ConfigError, ExperimentConfig
from quasi_slab.core.diagnostics import (
    MAX_ENUMERATION_P,
    DiagnosticsError,
    bvm_limit_from_fit,
    contraction_epsilon,
    enumerate_exact,
    kl_to_bvm,
    selection_report,
)
from quasi_slab.core.ggm import fit_regression
from quasi_slab.core.model import BinaryModel, GaussianRegressionQL
from quasi_slab.core.sampler import derive_seed, make_rng
from quasi_slab.core.simulate import simulate_regression
from quasi_slab.core.varapprox import SparsityTemplate, build_template, zeta_gap


def _contraction(ql: GaussianRegressionQL, theta_star: np.ndarray, sbar: int) -> float | None:
    """ε with v̲ from the Gram block of δ⋆ completed to s̄+s⋆ and ρ̄ = ‖∇ℓ(θ⋆)‖∞."""
    s_star = int(np.count_nonzero(theta_star))
    size = min(ql.p, sbar + s_star)
    tmpl = build_template(ql, size, seed_support=np.flatnonzero(theta_star))
    block = ql.gram_block(tmpl.support) / ql.n
    vmin = float(np.linalg.eigvalsh(block)[0]) if tmpl.size else 0.0
    rho_bar = float(np.max(np.abs(ql.gradient(theta_star, np.arange(ql.p)))))
    if vmin <= 0 or rho_bar <= 0 or s_star == 0:
        return None
    return contraction_epsilon(ql.n, sbar, s_star, ql.sigma2, vmin, rho_bar)


def diagnose_command(
    ctx: click.Context,
    cfg: ExperimentConfig,
    out: str,
    data: str | None,
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
) -> None:
    """Selection metrics, KL to the limit, ζ gaps, contraction rate and, for small p, exact enumeration."""
    artifacts = ["diagnostics.json", "trace.csv"]
    if dry_run:
        report_dry_run("diagnose", cfg, out, artifacts, json_output)
        return

    if data:
        X, y, theta_star = load_regression_data(data)
        if theta_star is None:
            raise ConfigError(f"{data} has no theta_star.csv; diagnostics need the truth")
        cfg = match_data(cfg, X.shape[0], X.shape[1])
    else:
        X, y, theta_star = simulate_regression(cfg, make_rng(cfg.seed))

    run = open_run(out, "diagnose", cfg, yes)
    ql = GaussianRegressionQL(X, y, sigma2=cfg.sigma2)
    prior = cfg.prior()
    truth = BinaryModel(theta_star != 0)
    summary = fit_regression(ql, prior, cfg.fit_settings(keep_trace=True), "mcmc")
    trace = summary.trace

    document: dict = {
        "selection": selection_report(trace, truth, cfg.threshold).to_dict(),
        "acceptance_rate": float(np.mean(trace.acceptance_rates())),
        "seconds_per_iteration": trace.timing.mean,
    }

    limit = bvm_limit_from_fit(ql, truth, prior)
    try:
        kl = kl_to_bvm(trace, limit, prior, ql, seed=derive_seed(cfg.seed, 1))
        document["kl_to_limit"] = {
            "value": kl.value,
            "stderr": kl.stderr,
            "tv_bound": kl.tv_bound,
            "visits": kl.n_visits,
        }
    except DiagnosticsError as e:
        warning(f"KL to the limit unavailable: {e}")
        document["kl_to_limit"] = None

    gamma = 1.0 / prior.rho0
    templates = {
        "skinny": SparsityTemplate.skinny(ql.p),
        "midsize": build_template(ql, cfg.template_size, seed_support=truth.active),
    }
    document["zeta"] = {
        name: zeta_gap(limit.info, gamma, tmpl, truth) for name, tmpl in templates.items()
    }

    sbar = cfg.cap if cfg.cap is not None else max(1, int(np.count_nonzero(theta_star)))
    document["contraction_epsilon"] = _contraction(ql, theta_star, sbar)

    if ql.p <= MAX_ENUMERATION_P:
        exact = enumerate_exact(prior, ql)
        document["exact"] = {
            "inclusion_probs": exact.inclusion_probs,
            "prob_true_model": exact.prob_of(truth),
            "max_inclusion_error": float(
                np.max(np.abs(exact.inclusion_probs - summary.inclusion_probs))
            ),
        }

    run.write_trace("trace.csv", trace)
    run.write_json("diagnostics.json", document)
    run.finish()

    if json_output:
        print_json(document)
        return
    selection = document["selection"]
    success(f"Diagnostics written to {out}")
    echo(f"  P(delta = delta*): {selection['prob_true_model']:.3f}")
    echo(f"  FDR {selection['fdr']:.3f}, FNR {selection['fnr']:.3f}")
    if document["kl_to_limit"] is not None:
        kl_doc = document["kl_to_limit"]
        echo(f"  KL to limit: {kl_doc['value']:.4f} ± {kl_doc['stderr']:.4f}")
    echo(f"  zeta skinny {document['zeta']['skinny']:.4f}, midsize {document['zeta']['midsize']:.4f}")
