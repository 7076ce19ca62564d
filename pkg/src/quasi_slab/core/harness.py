"""Benchmark and replication harness for the simulation studies."""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from .config import ConfigError, ExperimentConfig
from .diagnostics import PosteriorSummary, SelectionReport, selection_report
from .ggm import fit_regression
from .model import BinaryModel, GaussianRegressionQL
from .sampler import (
    SamplerConfig,
    derive_seed,
    lasso_init,
    make_rng,
    run_chain,
    truncate_to_cap,
)
from .simulate import simulate_regression, simulate_spiked
from .spca import fit_spca
from .varapprox import SparsityTemplate, build_template, init_variational, run_cavi

logger = logging.getLogger(__name__)

BENCHMARK_METHODS: tuple[str, ...] = ("mcmc", "full", "midsize")
VA_BENCHMARK_ITERATIONS = 50
MIDSIZE_BENCHMARK_SIZE = 100
SPCA_REGIMES: tuple[tuple[float, int], ...] = ((20.0, 1000), (20.0, 100), (5.0, 1000), (5.0, 100))


class HarnessError(Exception):
    """Raised when a benchmark or replication cannot run."""

    pass


@dataclass
class CostRow:
    """Wall-clock cost of one method at one dimension."""

    p: int
    method: str
    iterations: int
    total_seconds: float

    @property
    def per_iteration(self) -> float:
        return self.total_seconds / self.iterations

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": self.p,
            "method": self.method,
            "iterations": self.iterations,
            "total_seconds": self.total_seconds,
            "per_iteration": self.per_iteration,
        }


def _config_at(cfg: ExperimentConfig, p: int) -> ExperimentConfig:
    return replace(
        cfg,
        mode="benchmark",
        p=p,
        s_star=min(cfg.s_star, p),
        cap=None if cfg.cap is None else min(cfg.cap, p),
        template_size=min(cfg.template_size, p),
    )


def run_benchmark(
    cfg: ExperimentConfig,
    methods: tuple[str, ...] = BENCHMARK_METHODS,
    mcmc_iterations: int | None = None,
    va_iterations: int = VA_BENCHMARK_ITERATIONS,
    midsize_size: int = MIDSIZE_BENCHMARK_SIZE,
) -> list[CostRow]:
    """Time p MCMC iterations, full-VA and midsize-VA iterations over ``cfg.p_grid``.

    Data simulation, Gram precomputation and the lasso warm start are not
    timed. VA runs use a zero tolerance so exactly ``va_iterations`` sweeps run.
    """
    unknown = set(methods) - set(BENCHMARK_METHODS)
    if unknown:
        raise HarnessError(f"unknown benchmark methods: {', '.join(sorted(unknown))}")

    rows: list[CostRow] = []
    for p in cfg.p_grid:
        sub = _config_at(cfg, p)
        X, y, _ = simulate_regression(sub, make_rng(cfg.seed, p))
        ql = GaussianRegressionQL(X, y, sigma2=cfg.sigma2)
        prior = sub.prior()
        warm = lasso_init(ql, cfg.lasso_lambda)

        for method in methods:
            if method == "mcmc":
                n_iter = mcmc_iterations or p
                sampler = SamplerConfig(
                    n_iter=n_iter,
                    seed=derive_seed(cfg.seed, p),
                    burn_in=0,
                    lazy_half=cfg.lazy_half,
                    cap=sub.cap,
                )
                init = truncate_to_cap(warm, sampler.effective_cap(prior))
                start = time.perf_counter()
                run_chain(prior, ql, init, sampler)
                elapsed = time.perf_counter() - start
            else:
                if method == "full":
                    tmpl = SparsityTemplate.full(p)
                else:
                    tmpl = build_template(ql, min(midsize_size, p), warm.delta.active)
                va_prior = replace(prior, cap=None)
                init = init_variational(ql, va_prior, tmpl, warm)
                start = time.perf_counter()
                run_cavi(va_prior, ql, tmpl, init, max_iter=va_iterations, tol=0.0)
                elapsed = time.perf_counter() - start
                n_iter = va_iterations
            row = CostRow(p=p, method=method, iterations=n_iter, total_seconds=elapsed)
            logger.info(
                f"Benchmark p={p} {method}: {elapsed:.3f}s over {n_iter} iterations"
            )
            rows.append(row)
    return rows


def fit_cost_exponent(ps, costs) -> float:
    """Least-squares slope of log(cost) on log(p).

    Raises:
        HarnessError: With fewer than two distinct p or a non-positive cost.
    """
    ps = np.asarray(ps, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if ps.shape != costs.shape or ps.ndim != 1:
        raise HarnessError("ps and costs must be 1-d arrays of equal length")
    if np.unique(ps).size < 2:
        raise HarnessError("need at least two distinct dimensions to fit an exponent")
    if np.any(ps <= 0) or np.any(costs <= 0):
        raise HarnessError("dimensions and costs must be positive")
    slope, _ = np.polyfit(np.log(ps), np.log(costs), 1)
    return float(slope)


def method_exponent(rows: list[CostRow], method: str = "mcmc") -> float:
    """Cost exponent of ``method``'s per-iteration time across the benchmark grid."""
    picked = [r for r in rows if r.method == method]
    return fit_cost_exponent([r.p for r in picked], [r.per_iteration for r in picked])


def replicate(
    task: Callable[[ExperimentConfig], Any],
    cfg: ExperimentConfig,
    workers: int | None = None,
) -> list[Any]:
    """Run ``task`` on ``cfg.replications`` copies of ``cfg`` with spawned seeds.

    Replication r runs with seed derive_seed(cfg.seed, r); results are ordered
    by r whatever the completion order. ``task`` must be picklable when
    ``workers`` > 1.

    Raises:
        HarnessError: Naming the failing replication.
    """
    workers = cfg.workers if workers is None else workers
    configs = [
        replace(cfg, seed=derive_seed(cfg.seed, r)) for r in range(cfg.replications)
    ]
    logger.info(f"Running {len(configs)} replications on {workers} worker(s)")

    results: list[Any] = []
    if workers <= 1:
        for r, sub in enumerate(configs):
            try:
                results.append(task(sub))
            except Exception as e:
                raise HarnessError(f"replication {r} failed: {e}") from e
        return results

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task, sub) for sub in configs]
        for r, future in enumerate(futures):
            try:
                results.append(future.result())
            except Exception as e:
                raise HarnessError(f"replication {r} failed: {e}") from e
    return results


@dataclass
class RegressionReplicate:
    seed: int
    theta_star: np.ndarray
    summary: PosteriorSummary
    selection: SelectionReport | None


def regression_replication(cfg: ExperimentConfig) -> RegressionReplicate:
    """Simulate one regression data set and fit it with ``cfg.method``."""
    X, y, theta_star = simulate_regression(cfg, make_rng(cfg.seed))
    ql = GaussianRegressionQL(X, y, sigma2=cfg.sigma2)
    settings = cfg.fit_settings(keep_trace=cfg.method == "mcmc")
    summary = fit_regression(ql, cfg.prior(), settings, cfg.method)
    selection = None
    if summary.trace is not None:
        selection = selection_report(
            summary.trace, BinaryModel(theta_star != 0), threshold=cfg.threshold
        )
        summary.trace = None
    return RegressionReplicate(cfg.seed, theta_star, summary, selection)


def spca_replication(cfg: ExperimentConfig) -> float:
    """Mean projection error of one simulated sparse PCA data set fitted with ``cfg.method``."""
    if cfg.cap is None:
        raise ConfigError("sparse PCA replications need a cap")
    X, theta_star = simulate_spiked(cfg, make_rng(cfg.seed))
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
    return fit.mean_projection_error


@dataclass
class RegimeResult:
    vartheta: float
    n: int
    mean_error: float
    stderr: float
    errors: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "vartheta": self.vartheta,
            "n": self.n,
            "mean_error": self.mean_error,
            "stderr": self.stderr,
            "errors": list(self.errors),
        }


def spca_regimes(
    cfg: ExperimentConfig,
    regimes: tuple[tuple[float, int], ...] = SPCA_REGIMES,
) -> list[RegimeResult]:
    """Mean projection error over ``cfg.replications`` for each (ϑ, n) regime."""
    if cfg.cap is None:
        raise ConfigError("sparse PCA regimes need a cap")
    results = []
    for vartheta, n in regimes:
        sub = replace(cfg, mode="spca", vartheta=vartheta, n=n)
        errors = np.array(replicate(spca_replication, sub), dtype=float)
        stderr = float(errors.std(ddof=1) / math.sqrt(errors.size)) if errors.size > 1 else 0.0
        results.append(
            RegimeResult(vartheta, n, float(errors.mean()), stderr, errors.tolist())
        )
        logger.info(
            f"SPCA regime vartheta={vartheta}, n={n}: mean error {errors.mean():.4f} ± {stderr:.4f}"
        )
    return results
