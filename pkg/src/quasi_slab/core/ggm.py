"""Gaussian graphical model estimation by quasi-Bayesian neighborhood selection.

Each variable is regressed on all others under the spike-and-slab regression
quasi-posterior; the per-node inclusion probabilities are combined into edge
probabilities and the posterior means into a precision-matrix estimate.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .diagnostics import PosteriorSummary, summarize_trace, summarize_variational
from .model import GaussianRegressionQL, PriorSpec
from .sampler import SamplerConfig, derive_seed, lasso_init, run_chain, truncate_to_cap
from .varapprox import (
    SparsityTemplate,
    build_template,
    init_variational,
    run_cavi,
)

logger = logging.getLogger(__name__)

Method = Literal["mcmc", "skinny", "midsize", "full"]
EdgeRule = Literal["max", "min", "mean"]

METHODS: tuple[str, ...] = ("mcmc", "skinny", "midsize", "full")
EDGE_RULES: tuple[str, ...] = ("max", "min", "mean")


class GgmError(Exception):
    """Raised when a node regression or the graph assembly fails."""

    pass


@dataclass
class FitSettings:
    """Settings shared by the regression fits (MCMC and CAVI).

    Unset rho1/rho0 resolve to sqrt(log p / n) and 4n.
    """

    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    sigma2: float = 1.0
    u: float = 2.0
    rho1: float | None = None
    rho0: float | None = None
    cap: int | None = None
    cavi_max_iter: int = 50
    cavi_tol: float = 1e-8
    template_size: int = 100
    lasso_lambda: float | None = None
    keep_trace: bool = False

    def prior_for(self, p: int, n: int) -> PriorSpec:
        rho1 = self.rho1 if self.rho1 is not None else math.sqrt(math.log(max(p, 2)) / n)
        rho0 = self.rho0 if self.rho0 is not None else 4.0 * n
        return PriorSpec(rho0=rho0, rho1=rho1, u=self.u, p=p, cap=self.cap)


def fit_regression(
    ql: GaussianRegressionQL,
    prior: PriorSpec,
    settings: FitSettings,
    method: str,
    template: SparsityTemplate | None = None,
) -> PosteriorSummary:
    """Fit the regression quasi-posterior by MCMC or by one of the CAVI families.

    All methods start from the lasso warm start. The midsize template defaults
    to the lasso support completed to ``settings.template_size`` coordinates.
    """
    if method not in METHODS:
        raise GgmError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")

    warm = lasso_init(ql, settings.lasso_lambda)
    if method == "mcmc":
        cap = settings.sampler.effective_cap(prior)
        trace = run_chain(prior, ql, truncate_to_cap(warm, cap), settings.sampler)
        return summarize_trace(trace, method="mcmc", keep_trace=settings.keep_trace)

    if template is None:
        if method == "skinny":
            template = SparsityTemplate.skinny(ql.p)
        elif method == "full":
            template = SparsityTemplate.full(ql.p)
        else:
            template = build_template(
                ql, settings.template_size, seed_support=warm.delta.active
            )
    init = init_variational(ql, prior, template, warm)
    state = run_cavi(
        prior,
        ql,
        template,
        init,
        max_iter=settings.cavi_max_iter,
        tol=settings.cavi_tol,
    )
    return summarize_variational(state, method)


def split_node(Z: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Y^(j), X^(j), indices of the predictor columns)."""
    others = np.delete(np.arange(Z.shape[1]), j)
    return Z[:, j], Z[:, others], others


def node_regression(
    Z,
    j: int,
    prior: PriorSpec | None = None,
    settings: FitSettings | None = None,
    method: str = "mcmc",
) -> PosteriorSummary:
    """Regress column ``j`` (0-based) of Z on the remaining columns.

    Args:
        Z: (n, p+1) data matrix.
        j: Node index.
        prior: Prior on the p regression coefficients; defaults from ``settings``.
        settings: Fit settings; the node's chain seed is derived from
            ``settings.sampler.seed`` and ``j``.
        method: One of mcmc, skinny, midsize, full.

    Raises:
        GgmError: On bad indices, n < 2, or a constant response column.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] < 2:
        raise GgmError(f"Z must be an n x (p+1) matrix with p >= 1, got shape {Z.shape}")
    n, width = Z.shape
    if n < 2:
        raise GgmError(f"need at least 2 observations, got n={n}")
    if not (0 <= j < width):
        raise GgmError(f"node index {j} out of range for {width} variables")

    settings = settings or FitSettings()
    y, X, _ = split_node(Z, j)
    if np.ptp(y) == 0:
        raise GgmError(f"column {j} is constant; cannot regress it on the others")

    p = width - 1
    if prior is None:
        prior = settings.prior_for(p, n)
    elif prior.p != p:
        raise GgmError(f"prior has p={prior.p}, node regressions have p={p}")

    node_settings = replace(
        settings,
        sampler=replace(settings.sampler, seed=derive_seed(settings.sampler.seed, j)),
    )
    ql = GaussianRegressionQL(X, y, sigma2=settings.sigma2)
    return fit_regression(ql, prior, node_settings, method)


def _node_task(args) -> PosteriorSummary:
    Z, j, prior, settings, method = args
    return node_regression(Z, j, prior, settings, method)


@dataclass
class GgmFit:
    """Assembled graph estimate."""

    node_fits: list[PosteriorSummary]
    edge_probs: np.ndarray
    directed_probs: np.ndarray
    precision_estimate: np.ndarray
    edge_rule: str

    def adjacency(self, threshold: float = 0.5) -> np.ndarray:
        return self.edge_probs > threshold

    def edges(self, threshold: float = 0.5) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(np.triu(self.adjacency(threshold), k=1))
        return list(zip(rows.tolist(), cols.tolist()))


def combine_edges(directed: np.ndarray, rule: str) -> np.ndarray:
    """Symmetric edge probabilities from directed inclusion probabilities."""
    if rule == "max":
        edges = np.maximum(directed, directed.T)
    elif rule == "min":
        edges = np.minimum(directed, directed.T)
    elif rule == "mean":
        edges = 0.5 * (directed + directed.T)
    else:
        raise GgmError(f"unknown edge rule {rule!r}; expected one of {', '.join(EDGE_RULES)}")
    np.fill_diagonal(edges, 0.0)
    return edges


def fit_ggm(
    Z,
    prior: PriorSpec | None = None,
    settings: FitSettings | None = None,
    method: str = "mcmc",
    workers: int = 1,
    edge_rule: str = "max",
    diag_precision=None,
) -> GgmFit:
    """Run one node regression per variable and assemble the graph.

    Per-node seeds depend only on the master seed and the node index, so the
    result does not depend on ``workers`` or completion order.

    Args:
        diag_precision: Known [ϑ⋆]_jj values; defaults to ones.

    Raises:
        GgmError: Naming the failing node.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise GgmError(f"Z must be a 2-d matrix, got shape {Z.shape}")
    if edge_rule not in EDGE_RULES:
        raise GgmError(f"unknown edge rule {edge_rule!r}")
    settings = settings or FitSettings()
    width = Z.shape[1]
    tasks = [(Z, j, prior, settings, method) for j in range(width)]

    logger.info(f"Fitting {width} node regressions with method={method}, workers={workers}")
    node_fits: list[PosteriorSummary] = []
    if workers <= 1:
        for j, task in enumerate(tasks):
            try:
                node_fits.append(_node_task(task))
            except Exception as e:
                raise GgmError(f"node {j} failed: {e}") from e
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_node_task, task) for task in tasks]
            for j, future in enumerate(futures):
                try:
                    node_fits.append(future.result())
                except Exception as e:
                    raise GgmError(f"node {j} failed: {e}") from e

    if diag_precision is None:
        diag = np.ones(width)
    else:
        diag = np.asarray(diag_precision, dtype=float)
        if diag.shape != (width,):
            raise GgmError(f"diag_precision must have length {width}")

    directed = np.zeros((width, width))
    precision = np.diag(diag)
    for j, fit in enumerate(node_fits):
        others = np.delete(np.arange(width), j)
        directed[j, others] = fit.inclusion_probs
        precision[others, j] = -diag[j] * fit.means
    precision = 0.5 * (precision + precision.T)

    return GgmFit(
        node_fits=node_fits,
        edge_probs=combine_edges(directed, edge_rule),
        directed_probs=directed,
        precision_estimate=precision,
        edge_rule=edge_rule,
    )
