"""Diagnostics for spike-and-slab quasi-posteriors.

Includes the Bernstein-von Mises limit of the regression quasi-posterior and a
Monte Carlo estimate of its KL divergence to the sampled posterior, closed-form
Gaussian KL, the linear-model contraction rate, model-selection summaries,
and an exact enumeration oracle for small p.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .model import (
    NEG_INF,
    BinaryModel,
    GaussianRegressionQL,
    NumericalError,
    PriorSpec,
)
from .sampler import Trace, make_rng
from .varapprox import VariationalState

logger = logging.getLogger(__name__)

MAX_ENUMERATION_P = 20
DEFAULT_KL_DRAWS = 10_000
DEFAULT_SELECTION_THRESHOLD = 0.5
_KL_BATCHES = 20


class DiagnosticsError(Exception):
    """Raised when a diagnostic cannot be computed from its inputs."""

    pass


class DiagnosticsNumericalError(DiagnosticsError, NumericalError):
    """Raised on non-positive-definite or rank-deficient inputs."""

    pass


@dataclass
class BvmLimit:
    """Limit distribution: point mass on δ⋆, [θ]_δ⋆ ~ N(θ̂⋆, info⁻¹), spike elsewhere."""

    delta_star: BinaryModel
    theta_hat: np.ndarray
    info: np.ndarray
    rho0: float

    def __post_init__(self):
        s = self.delta_star.active_count
        self.theta_hat = np.asarray(self.theta_hat, dtype=float)
        self.info = np.asarray(self.info, dtype=float).reshape(s, s)
        if self.theta_hat.shape != (s,):
            raise DiagnosticsError(f"theta_hat must have length {s}")
        if s and not np.allclose(self.info, self.info.T):
            raise DiagnosticsError("info must be symmetric")

    @property
    def p(self) -> int:
        return self.delta_star.p

    def covariance(self) -> np.ndarray:
        """info⁻¹, the limit covariance of [θ]_δ⋆."""
        s = self.info.shape[0]
        if s == 0:
            return np.zeros((0, 0))
        return scipy.linalg.cho_solve(_cho_factor(self.info, "info"), np.eye(s))

    def sample_active(self, n_draws: int, rng: np.random.Generator) -> np.ndarray:
        """(n_draws, s⋆) draws of [θ]_δ⋆."""
        s = self.info.shape[0]
        if s == 0:
            return np.zeros((n_draws, 0))
        L = _cholesky(self.info, "info")
        z = rng.standard_normal((s, n_draws))
        noise = scipy.linalg.solve_triangular(L.T, z, lower=False)
        return (self.theta_hat[:, None] + noise).T

    def sample(self, n_draws: int, rng: np.random.Generator) -> np.ndarray:
        """(n_draws, p) draws of θ from the limit distribution."""
        draws = rng.standard_normal((n_draws, self.p)) / math.sqrt(self.rho0)
        draws[:, self.delta_star.active] = self.sample_active(n_draws, rng)
        return draws


@dataclass
class KlEstimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    n_visits: int
    n_draws: int

    @property
    def tv_bound(self) -> float:
        return pinsker_tv_bound(self.value)


@dataclass
class SelectionReport:
    """Model-selection summary of a trace against a known true model."""

    inclusion_probs: np.ndarray
    mode_model: BinaryModel
    median_model: BinaryModel
    prob_true_model: float
    fdr: float
    fnr: float
    median_model_size: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "inclusion_probs": self.inclusion_probs.tolist(),
            "mode_model": self.mode_model.active.tolist(),
            "median_model": self.median_model.active.tolist(),
            "prob_true_model": self.prob_true_model,
            "fdr": self.fdr,
            "fnr": self.fnr,
            "median_model_size": self.median_model_size,
        }


@dataclass
class PosteriorSummary:
    """Per-coordinate summary of a fitted quasi-posterior.

    ``means``/``variances`` describe θ_δ (the sparsified coefficient);
    ``cond_means``/``cond_variances`` describe θ_j given δ_j = 1 (NaN if never
    included).
    """

    method: str
    inclusion_probs: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    cond_means: np.ndarray
    cond_variances: np.ndarray
    diagnostics: dict[str, float] = field(default_factory=dict)
    trace: Trace | None = None

    @property
    def p(self) -> int:
        return self.inclusion_probs.shape[0]

    def to_dict(self) -> dict[str, Any]:
        def clean(arr: np.ndarray) -> list:
            return [None if not math.isfinite(v) else float(v) for v in arr]

        return {
            "method": self.method,
            "inclusion_probs": clean(self.inclusion_probs),
            "means": clean(self.means),
            "variances": clean(self.variances),
            "cond_means": clean(self.cond_means),
            "cond_variances": clean(self.cond_variances),
            "diagnostics": dict(self.diagnostics),
        }


@dataclass
class ExactPosterior:
    """Exact posterior over Δ for small p."""

    models: np.ndarray  # (2^p, p) bool
    log_weights: np.ndarray  # unnormalized log Π(δ|z)
    probs: np.ndarray  # normalized
    inclusion_probs: np.ndarray

    def prob_of(self, delta: BinaryModel) -> float:
        index = int(np.dot(delta.bits.astype(np.int64), 1 << np.arange(delta.p)))
        return float(self.probs[index])


def _cholesky(matrix: np.ndarray, name: str) -> np.ndarray:
    try:
        return scipy.linalg.cholesky(matrix, lower=True)
    except np.linalg.LinAlgError as e:
        raise DiagnosticsNumericalError(f"{name} is not positive definite") from e


def _cho_factor(matrix: np.ndarray, name: str):
    try:
        return scipy.linalg.cho_factor(matrix, lower=True)
    except np.linalg.LinAlgError as e:
        raise DiagnosticsNumericalError(f"{name} is not positive definite") from e


def gaussian_kl(mu1, S1, mu2, S2) -> float:
    """KL(N(mu1, S1) ‖ N(mu2, S2)) in closed form.

    Raises:
        DiagnosticsError: On mismatched dimensions.
        DiagnosticsNumericalError: If S1 or S2 is not positive definite.
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    S1 = np.atleast_2d(np.asarray(S1, dtype=float))
    S2 = np.atleast_2d(np.asarray(S2, dtype=float))
    k = mu1.shape[0]
    if mu2.shape != (k,) or S1.shape != (k, k) or S2.shape != (k, k):
        raise DiagnosticsError("gaussian_kl arguments have inconsistent dimensions")

    f1 = _cho_factor(S1, "S1")
    f2 = _cho_factor(S2, "S2")
    diff = mu2 - mu1
    mahalanobis = float(diff @ scipy.linalg.cho_solve(f2, diff))
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(f1[0]))))
    logdet2 = 2.0 * float(np.sum(np.log(np.diag(f2[0]))))
    trace = float(np.trace(scipy.linalg.cho_solve(f2, S1)))
    return max(0.0, 0.5 * (mahalanobis + logdet2 - logdet1 + trace - k))


def pinsker_tv_bound(kl: float) -> float:
    """Total-variation bound sqrt(KL/2)."""
    return math.sqrt(max(kl, 0.0) / 2.0)


def bvm_limit_from_fit(
    ql: GaussianRegressionQL, delta_star: BinaryModel, prior: PriorSpec
) -> BvmLimit:
    """Limit distribution with θ̂⋆ the OLS fit on δ⋆ and info = X_δ⋆'X_δ⋆/σ².

    Raises:
        DiagnosticsNumericalError: If X_δ⋆ is rank deficient.
    """
    if delta_star.p != ql.p:
        raise DiagnosticsError(
            f"delta_star has length {delta_star.p}, likelihood has p={ql.p}"
        )
    active = delta_star.active
    if active.size == 0:
        return BvmLimit(delta_star.copy(), np.zeros(0), np.zeros((0, 0)), prior.rho0)
    if np.linalg.matrix_rank(ql.X[:, active]) < active.size:
        raise DiagnosticsNumericalError(
            f"X restricted to delta_star {active.tolist()} is rank deficient"
        )
    gram = ql.gram_block(active)
    factor = _cho_factor(gram, "X_delta'X_delta")
    theta_hat = scipy.linalg.cho_solve(factor, ql.xty[active])
    return BvmLimit(delta_star.copy(), theta_hat, gram / ql.sigma2, prior.rho0)


def _neg_remainder(
    values: np.ndarray,
    limit: BvmLimit,
    prior: PriorSpec,
    ql: GaussianRegressionQL,
) -> np.ndarray:
    """−R(δ⋆, θ) for rows of active-block values.

    R = ℓ(θ_δ) − ρ₁‖θ_δ‖²/2 − ℓ(θ̂) + ρ₁‖θ̂‖²/2 + ½(θ − θ̂)'info(θ − θ̂), so that
    dΠ⋆/dΠ ∝ exp(−R) on δ = δ⋆.
    """
    active = limit.delta_star.active
    if active.size == 0:
        return np.zeros(values.shape[0])
    gram = ql.gram_block(active)
    xty = ql.xty[active]

    def loglik(v: np.ndarray) -> np.ndarray:
        quad = np.einsum("ij,jk,ik->i", v, gram, v)
        return -(ql.y_sq_norm - 2.0 * v @ xty + quad) / (2.0 * ql.sigma2)

    hat = limit.theta_hat[None, :]
    diff = values - hat
    remainder = (
        loglik(values)
        - loglik(hat)[0]
        - 0.5 * prior.rho1 * (np.sum(values**2, axis=1) - float(limit.theta_hat @ limit.theta_hat))
        + 0.5 * np.einsum("ij,jk,ik->i", diff, limit.info, diff)
    )
    return -remainder


def _batch_means_variance(values: np.ndarray) -> float:
    """Variance of the sample mean, by batch means when long enough."""
    m = values.shape[0]
    if m < 2 * _KL_BATCHES:
        return float(np.var(values, ddof=1) / m) if m > 1 else 0.0
    size = m // _KL_BATCHES
    batches = values[: size * _KL_BATCHES].reshape(_KL_BATCHES, size).mean(axis=1)
    return float(np.var(batches, ddof=1) / _KL_BATCHES)


def kl_to_bvm(
    trace: Trace,
    limit: BvmLimit,
    prior: PriorSpec,
    ql: GaussianRegressionQL,
    n_draws: int = DEFAULT_KL_DRAWS,
    seed: int = 0,
) -> KlEstimate:
    """Estimate KL(Π⋆ ‖ Π) between the limit and the sampled quasi-posterior.

    KL = E_Π⋆[−R] − log E_Π[e^{−R} 1{δ = δ⋆}]: the first term uses analytic
    draws from the limit, the second the trace. The standard error combines
    the i.i.d. draw variance and a batch-means variance of the trace term.

    Raises:
        DiagnosticsError: If the trace never visits δ⋆.
    """
    if len(trace) == 0:
        raise DiagnosticsError("trace is empty")
    target = limit.delta_star.bits
    visits = np.all(trace.delta_samples == target[None, :], axis=1)
    n_visits = int(visits.sum())
    if n_visits == 0:
        raise DiagnosticsError(
            "the trace never visits delta_star; run a longer chain or check delta_star"
        )

    rng = make_rng(seed)
    active = limit.delta_star.active
    draws = limit.sample_active(n_draws, rng)
    first = _neg_remainder(draws, limit, prior, ql)

    m = len(trace)
    log_w = np.full(m, NEG_INF)
    log_w[visits] = _neg_remainder(
        trace.theta_samples[visits][:, active], limit, prior, ql
    )
    log_z = float(logsumexp(log_w)) - math.log(m)

    value = float(first.mean()) - log_z
    scaled = np.exp(log_w - log_w.max())
    rel_var = _batch_means_variance(scaled) / float(scaled.mean()) ** 2
    var_first = float(np.var(first, ddof=1)) / n_draws if n_draws > 1 else 0.0
    stderr = math.sqrt(var_first + rel_var)
    logger.info(
        f"KL to the limit: {value:.4f} ± {stderr:.4f} ({n_visits}/{m} visits of delta_star)"
    )
    return KlEstimate(value=value, stderr=stderr, n_visits=n_visits, n_draws=n_draws)


def contraction_epsilon(
    n: int, sbar: int, sstar: int, sigma2: float, vmin: float, rho_bar: float
) -> float:
    """Linear-model contraction rate ε = 2σ²(s̄+s⋆)^{1/2} ρ̄ / (n v̲(s̄+s⋆))."""
    for name, value in (
        ("n", n),
        ("sbar", sbar),
        ("sstar", sstar),
        ("sigma2", sigma2),
        ("vmin", vmin),
        ("rho_bar", rho_bar),
    ):
        if not value > 0:
            raise DiagnosticsError(f"{name} must be positive, got {value}")
    return 2.0 * sigma2 * math.sqrt(sbar + sstar) * rho_bar / (n * vmin)


def _log_marginal(
    prior: PriorSpec, ql: GaussianRegressionQL, active: np.ndarray
) -> float:
    """log ∫ Π(δ, dθ|z) with θ integrated out analytically (up to a global constant)."""
    s = active.size
    value = s * prior.log_q + (prior.p - s) * prior.log_one_minus_q
    value -= 0.5 * ql.y_sq_norm / ql.sigma2
    if s == 0:
        return value
    precision = ql.gram_block(active) / ql.sigma2 + prior.rho1 * np.eye(s)
    b = ql.xty[active] / ql.sigma2
    factor = scipy.linalg.cho_factor(precision, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    value += 0.5 * s * math.log(prior.rho1) - 0.5 * logdet
    value += 0.5 * float(b @ scipy.linalg.cho_solve(factor, b))
    return value


def enumerate_exact(prior: PriorSpec, ql: GaussianRegressionQL) -> ExactPosterior:
    """Exact Π(δ|z) over all 2^p models by integrating θ out of the quasi-posterior.

    Inactive coordinates integrate to exactly one; the active block is a
    Gaussian integral. Models index the table by Σ_j δ_j 2^j.

    Raises:
        DiagnosticsError: If p > 20 or the slab is flat.
    """
    p = prior.p
    if p > MAX_ENUMERATION_P:
        raise DiagnosticsError(
            f"exact enumeration is limited to p <= {MAX_ENUMERATION_P}, got p={p}"
        )
    if ql.p != p:
        raise DiagnosticsError(f"prior has p={p}, likelihood has p={ql.p}")
    if prior.rho1 <= 0:
        raise DiagnosticsError("exact enumeration requires a proper slab (rho1 > 0)")

    n_models = 1 << p
    models = np.zeros((n_models, p), dtype=bool)
    log_weights = np.empty(n_models)
    for index, bits in enumerate(itertools.product((False, True), repeat=p)):
        row = np.array(bits[::-1], dtype=bool)
        models[index] = row
        active = np.flatnonzero(row)
        if not prior.allows(active.size):
            log_weights[index] = NEG_INF
        else:
            log_weights[index] = _log_marginal(prior, ql, active)

    probs = np.exp(log_weights - logsumexp(log_weights))
    inclusion = probs @ models
    return ExactPosterior(
        models=models, log_weights=log_weights, probs=probs, inclusion_probs=inclusion
    )


def selection_report(
    trace: Trace,
    truth: BinaryModel,
    threshold: float = DEFAULT_SELECTION_THRESHOLD,
) -> SelectionReport:
    """Inclusion probabilities, P(δ = truth), and FDR/FNR of the median-probability model.

    FDR is 0 when nothing is selected and FNR is 0 when the truth is empty.
    """
    if len(trace) == 0:
        raise DiagnosticsError("trace is empty")
    if truth.p != trace.p:
        raise DiagnosticsError(f"truth has length {truth.p}, trace has p={trace.p}")

    samples = trace.delta_samples
    inclusion = samples.mean(axis=0)
    prob_true = float(np.mean(np.all(samples == truth.bits[None, :], axis=1)))

    unique, counts = np.unique(samples, axis=0, return_counts=True)
    mode = BinaryModel(unique[int(np.argmax(counts))])

    selected = inclusion > threshold
    true_bits = truth.bits
    false_pos = int(np.sum(selected & ~true_bits))
    false_neg = int(np.sum(~selected & true_bits))
    n_selected = int(selected.sum())
    n_true = int(true_bits.sum())

    return SelectionReport(
        inclusion_probs=inclusion,
        mode_model=mode,
        median_model=BinaryModel(selected),
        prob_true_model=prob_true,
        fdr=false_pos / n_selected if n_selected else 0.0,
        fnr=false_neg / n_true if n_true else 0.0,
        median_model_size=float(np.median(samples.sum(axis=1))),
    )


def summarize_trace(trace: Trace, method: str = "mcmc", keep_trace: bool = False) -> PosteriorSummary:
    """PosteriorSummary of a chain's stored samples."""
    if len(trace) == 0:
        raise DiagnosticsError("trace is empty")
    deltas = trace.delta_samples
    thetas = trace.theta_samples
    sparse = np.where(deltas, thetas, 0.0)

    counts = deltas.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond_means = np.where(counts > 0, sparse.sum(axis=0) / counts, np.nan)
        cond_sq = np.where(counts > 0, (sparse**2).sum(axis=0) / counts, np.nan)
    cond_vars = cond_sq - cond_means**2

    return PosteriorSummary(
        method=method,
        inclusion_probs=deltas.mean(axis=0),
        means=sparse.mean(axis=0),
        variances=sparse.var(axis=0),
        cond_means=cond_means,
        cond_variances=np.where(np.isnan(cond_vars), np.nan, np.maximum(cond_vars, 0.0)),
        diagnostics={
            "n_samples": float(len(trace)),
            "median_model_size": float(np.median(deltas.sum(axis=1))),
            "mean_acceptance_rate": float(np.mean(trace.acceptance_rates())),
            "seconds": trace.timing.total,
        },
        trace=trace if keep_trace else None,
    )


def summarize_variational(state: VariationalState, method: str) -> PosteriorSummary:
    """PosteriorSummary of a variational fit: θ_δ moments under Q."""
    a, m, cd = state.alpha, state.mu, state.cov_diag
    return PosteriorSummary(
        method=method,
        inclusion_probs=a.copy(),
        means=a * m,
        variances=a * (m * m + cd) - (a * m) ** 2,
        cond_means=m.copy(),
        cond_variances=cd.copy(),
        diagnostics={
            "iterations": float(state.iterations),
            "converged": float(state.converged),
            "elbo": float(state.elbo) if state.elbo is not None else math.nan,
            "template_size": float(state.support.size),
        },
    )
