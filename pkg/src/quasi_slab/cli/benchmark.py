"""Cost benchmarks and replication studies."""

import click

from quasi_slab.cli.experiment import open_run, report_dry_run
from quasi_slab.cli.output import echo, print_json, success
from quasi_slab.core.config import ExperimentConfig
from quasi_slab.core.harness import (
    BENCHMARK_METHODS,
    HarnessError,
    method_exponent,
    regression_replication,
    replicate,
    run_benchmark,
    spca_regimes,
)
from quasi_slab.core.io import format_table

STUDIES = ("costs", "regression", "spca")


def _costs(run, cfg: ExperimentConfig) -> dict:
    rows = run_benchmark(cfg)
    run.write_text("costs.csv", format_table([r.to_dict() for r in rows]), kind="table")
    exponents = {}
    if len(set(cfg.p_grid)) > 1:
        for method in BENCHMARK_METHODS:
            exponents[method] = method_exponent(rows, method)
    return {"rows": [r.to_dict() for r in rows], "per_iteration_exponent": exponents}


def _regression(run, cfg: ExperimentConfig) -> dict:
    results = replicate(regression_replication, cfg)
    rows = []
    for r, res in enumerate(results):
        row = {
            "replication": r,
            "seed": res.seed,
            "method": res.summary.method,
            "variance_0": float(res.summary.variances[0]),
            "variance_1": float(res.summary.variances[1]) if res.summary.p > 1 else float("nan"),
        }
        if res.selection is not None:
            row.update(
                {
                    "prob_true_model": res.selection.prob_true_model,
                    "fdr": res.selection.fdr,
                    "fnr": res.selection.fnr,
                    "median_model_size": res.selection.median_model_size,
                }
            )
        rows.append(row)
    run.write_text("replications.csv", format_table(rows), kind="table")
    return {"rows": rows}


def _spca(run, cfg: ExperimentConfig) -> dict:
    results = spca_regimes(cfg)
    rows = [
        {"vartheta": r.vartheta, "n": r.n, "mean_error": r.mean_error, "stderr": r.stderr}
        for r in results
    ]
    run.write_text("regimes.csv", format_table(rows), kind="table")
    return {"regimes": [r.to_dict() for r in results]}


def benchmark_command(
    ctx: click.Context,
    cfg: ExperimentConfig,
    out: str,
    study: str,
    verbose: bool,
    yes: bool,
    dry_run: bool,
    json_output: bool,
) -> None:
    """Run one study and write its CSV table plus summary.json.

    costs: MCMC, full-VA and midsize-VA timings over ``cfg.p_grid``.
    regression: ``cfg.replications`` simulated regressions fitted with ``cfg.method``.
    spca: projection error over the four (ϑ, n) sparse PCA regimes.
    """
    if study not in STUDIES:
        raise HarnessError(f"unknown study {study!r}; expected one of {', '.join(STUDIES)}")
    table = {"costs": "costs.csv", "regression": "replications.csv", "spca": "regimes.csv"}[study]
    if dry_run:
        report_dry_run(f"benchmark {study}", cfg, out, [table, "summary.json"], json_output)
        return

    run = open_run(out, f"benchmark {study}", cfg, yes)
    runner = {"costs": _costs, "regression": _regression, "spca": _spca}[study]
    document = runner(run, cfg)
    run.write_json("summary.json", document)
    run.finish()

    if json_output:
        print_json(document)
        return
    success(f"Benchmark study '{study}' written to {out}")
    if study == "costs":
        for row in document["rows"]:
            echo(f"  p={row['p']:>6} {row['method']:>8}: {row['total_seconds']:.3f}s")
    elif verbose:
        echo(f"  table: {table}")
