"""Metropolized-Gibbs sampling of spike-and-slab quasi-posteriors.

A chain alternates two steps. First θ is refreshed given δ: inactive
coordinates are drawn from the spike, active coordinates by an exact
conjugate draw (Gaussian regression) or by a user-supplied MCMC kernel.
Then δ is swept coordinate by coordinate with independent Metropolis
flips driven by a Ber(0.5) proposal.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
import scipy.linalg

from .model import (
    NEG_INF,
    BinaryModel,
    GaussianRegressionQL,
    ModelState,
    NumericalError,
    PriorSpec,
    QuasiLikelihood,
    loglik_coordinate_delta,
)

logger = logging.getLogger(__name__)

DEFAULT_LASSO_TOL = 1e-7
DEFAULT_LASSO_MAX_SWEEPS = 10_000


class SamplerError(Exception):
    """Raised when a sampler is misconfigured or started outside the prior support."""

    pass


class SamplerNumericalError(SamplerError, NumericalError):
    """Raised when a factorization or solver inside the sampler fails."""

    pass


class InnerKernel(Protocol):
    """MCMC kernel on R^s leaving u ↦ exp(ℓ((u,0)_δ) − ρ₁‖u‖²/2) invariant."""

    def __call__(
        self,
        active: np.ndarray,
        u: np.ndarray,
        log_target: Callable[[np.ndarray], float],
        rng: np.random.Generator,
    ) -> np.ndarray: ...


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 stream derived from a master seed and optional stream keys.

    Streams for different keys are statistically independent, so per-node or
    per-replication chains can run in any order and still reproduce.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit seed of the sub-stream (seed, *keys), e.g. one per GGM node."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


@dataclass
class SamplerConfig:
    """Run-length and δ-update settings for a chain.

    Attributes:
        n_iter: Number of iterations (θ step + δ sweep).
        seed: Master seed of the chain's random stream.
        burn_in: Leading iterations discarded from the trace.
        thin: Keep one iteration out of ``thin`` after burn-in.
        lazy_half: Accept flips with probability min(1, A)/2 instead of min(1, A).
        cap: Optional maximal model size s̄; combined with the prior cap (the
            smaller one wins).
    """

    n_iter: int = 5000
    seed: int = 0
    burn_in: int = 0
    thin: int = 1
    lazy_half: bool = True
    cap: int | None = None

    def __post_init__(self):
        if self.n_iter < 1:
            raise SamplerError(f"n_iter must be >= 1, got {self.n_iter}")
        if not (0 <= self.burn_in < self.n_iter):
            raise SamplerError(
                f"burn_in must satisfy 0 <= burn_in < n_iter, got {self.burn_in}"
            )
        if self.thin < 1:
            raise SamplerError(f"thin must be >= 1, got {self.thin}")
        if not (0 <= self.seed < 2**64):
            raise SamplerError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.cap is not None and self.cap < 1:
            raise SamplerError(f"cap must be >= 1, got {self.cap}")

    @property
    def n_stored(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    @property
    def flip_scale(self) -> float:
        return 0.5 if self.lazy_half else 1.0

    def effective_cap(self, prior: PriorSpec) -> int | None:
        caps = [c for c in (self.cap, prior.cap) if c is not None]
        return min(caps) if caps else None


@dataclass
class TimingStats:
    """Wall-clock statistics of the iterations of a chain, in seconds."""

    total: float
    mean: float
    std: float
    max: float

    @classmethod
    def from_durations(cls, durations: np.ndarray) -> "TimingStats":
        if durations.size == 0:
            return cls(0.0, 0.0, 0.0, 0.0)
        return cls(
            total=float(durations.sum()),
            mean=float(durations.mean()),
            std=float(durations.std()),
            max=float(durations.max()),
        )


@dataclass
class Trace:
    """Post burn-in, thinned output of a chain."""

    delta_samples: np.ndarray  # (m, p) bool
    theta_samples: np.ndarray  # (m, p) float
    iterations: np.ndarray  # (m,) 1-based iteration index of each stored sample
    model_sizes: np.ndarray  # (n_iter,) ‖δ‖₀ after every iteration
    acceptance_counts: np.ndarray  # (p,) accepted flips per coordinate
    proposal_counts: np.ndarray  # (p,) flip proposals per coordinate
    timing: TimingStats = field(default_factory=lambda: TimingStats(0.0, 0.0, 0.0, 0.0))

    def __len__(self) -> int:
        return self.delta_samples.shape[0]

    @property
    def p(self) -> int:
        return self.delta_samples.shape[1]

    def delta_at(self, i: int) -> BinaryModel:
        return BinaryModel(self.delta_samples[i])

    def stored_model_sizes(self) -> np.ndarray:
        return self.delta_samples.sum(axis=1)

    def inclusion_frequencies(self) -> np.ndarray:
        return self.delta_samples.mean(axis=0)

    def acceptance_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            rates = self.acceptance_counts / self.proposal_counts
        return np.where(self.proposal_counts > 0, rates, 0.0)

    def sparsified_thetas(self) -> np.ndarray:
        """θ_δ for every stored sample."""
        return np.where(self.delta_samples, self.theta_samples, 0.0)


def _half_log_precision_ratio(prior: PriorSpec) -> float:
    """½ log(ρ₁/ρ₀), −∞ under a flat slab."""
    if prior.rho1 == 0:
        return NEG_INF
    return 0.5 * (math.log(prior.rho1) - math.log(prior.rho0))


def flip_ratio(
    prior: PriorSpec, ql: QuasiLikelihood, state: ModelState, j: int
) -> float:
    """log A_j, the log acceptance ratio for switching δ_j from 0 to 1.

    Independent of the current value of δ_j.
    """
    theta_j = float(state.theta[j])
    log_a = (
        prior.log_q_ratio
        + _half_log_precision_ratio(prior)
        - 0.5 * (prior.rho1 - prior.rho0) * theta_j * theta_j
    )
    if log_a == NEG_INF:
        return NEG_INF
    return log_a + loglik_coordinate_delta(ql, state.delta, state.theta, j)


def _refresh_inactive(
    prior: PriorSpec, state: ModelState, rng: np.random.Generator
) -> np.ndarray:
    theta = state.theta.copy()
    inactive = np.flatnonzero(~state.delta.bits)
    theta[inactive] = rng.standard_normal(inactive.size) / math.sqrt(prior.rho0)
    return theta


def _cholesky_with_jitter(matrix: np.ndarray, delta: BinaryModel) -> np.ndarray:
    """Lower Cholesky factor, retrying once with a 1e-10·trace/s diagonal jitter."""
    try:
        return scipy.linalg.cholesky(matrix, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        s = matrix.shape[0]
        jitter = 1e-10 * float(np.trace(matrix)) / s
        logger.warning(
            f"Cholesky of the active block failed (s={s}); retrying with jitter {jitter:.3e}"
        )
        try:
            return scipy.linalg.cholesky(
                matrix + jitter * np.eye(s), lower=True, check_finite=False
            )
        except np.linalg.LinAlgError as e:
            raise SamplerNumericalError(
                f"active-set block is not positive definite for delta with "
                f"active set {delta.active.tolist()}"
            ) from e


def _draw_active_block(
    prior: PriorSpec,
    ql: GaussianRegressionQL,
    delta: BinaryModel,
    active: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact draw of [θ]_δ ~ N(m, Σ) for the Gaussian regression quasi-posterior.

    m = (X_δ'X_δ + σ²ρ₁I)⁻¹X_δ'y and Σ = σ²(X_δ'X_δ + σ²ρ₁I)⁻¹.
    """
    s = active.size
    precision = ql.gram_block(active) + ql.sigma2 * prior.rho1 * np.eye(s)
    L = _cholesky_with_jitter(precision, delta)
    w = scipy.linalg.solve_triangular(L, ql.xty[active], lower=True, check_finite=False)
    mean = scipy.linalg.solve_triangular(L.T, w, lower=False, check_finite=False)
    z = rng.standard_normal(s)
    noise = scipy.linalg.solve_triangular(L.T, z, lower=False, check_finite=False)
    return mean + math.sqrt(ql.sigma2) * noise


def conditional_moments(
    prior: PriorSpec, ql: GaussianRegressionQL, delta: BinaryModel
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of [θ]_δ given δ under the Gaussian regression quasi-posterior."""
    active = delta.active
    s = active.size
    precision = ql.gram_block(active) + ql.sigma2 * prior.rho1 * np.eye(s)
    factor = scipy.linalg.cho_factor(precision, lower=True)
    mean = scipy.linalg.cho_solve(factor, ql.xty[active])
    cov = ql.sigma2 * scipy.linalg.cho_solve(factor, np.eye(s))
    return mean, cov


def gaussian_conjugate_kernel(
    prior: PriorSpec, ql: GaussianRegressionQL
) -> InnerKernel:
    """Inner kernel performing the exact conditional draw of the active block."""

    def kernel(active, u, log_target, rng):
        delta = BinaryModel.from_indices(ql.p, active)
        return _draw_active_block(prior, ql, delta, active, rng)

    return kernel


@dataclass
class RandomWalkKernel:
    """Random-walk Metropolis on the active block, proposal sd 2.4·step/√s."""

    step: float = 1.0

    def __call__(self, active, u, log_target, rng):
        s = u.size
        if s == 0:
            return u
        proposal = u + (2.4 * self.step / math.sqrt(s)) * rng.standard_normal(s)
        log_ratio = log_target(proposal) - log_target(u)
        if math.log(rng.random()) < log_ratio:
            return proposal
        return u


def step_theta_generic(
    prior: PriorSpec,
    ql: QuasiLikelihood,
    state: ModelState,
    inner_kernel: InnerKernel,
    rng: np.random.Generator,
) -> ModelState:
    """Refresh inactive θ from the spike and advance the active block by ``inner_kernel``."""
    theta = _refresh_inactive(prior, state, rng)
    active = state.delta.active
    if active.size > 0:
        p = ql.dim

        def log_target(u: np.ndarray) -> float:
            padded = np.zeros(p)
            padded[active] = u
            return ql.loglik(padded) - 0.5 * prior.rho1 * float(u @ u)

        theta[active] = inner_kernel(active, theta[active].copy(), log_target, rng)
    return ModelState(state.delta.copy(), theta)


def step_theta_linear(
    prior: PriorSpec,
    ql: GaussianRegressionQL,
    state: ModelState,
    rng: np.random.Generator,
) -> ModelState:
    """Exact conditional draw of θ given δ for the Gaussian regression quasi-posterior.

    Costs one s×s Cholesky factorization plus O(s·p) work.

    Raises:
        SamplerNumericalError: If the active block is not positive definite
            even after jitter.
    """
    theta = _refresh_inactive(prior, state, rng)
    active = state.delta.active
    if active.size > 0:
        theta[active] = _draw_active_block(prior, ql, state.delta, active, rng)
    return ModelState(state.delta.copy(), theta)


def _flip_accepted(u: float, scale: float, log_ratio: float) -> bool:
    if log_ratio == NEG_INF:
        return False
    return u < scale * math.exp(min(0.0, log_ratio))


def _sweep_scalar(
    prior: PriorSpec,
    ql: QuasiLikelihood,
    state: ModelState,
    cap: int | None,
    scale: float,
    iota: np.ndarray,
    uniforms: np.ndarray,
) -> tuple[ModelState, np.ndarray, np.ndarray]:
    delta = state.delta.copy()
    current = ModelState(delta, state.theta)
    proposed = np.zeros(delta.p, dtype=bool)
    accepted = np.zeros(delta.p, dtype=bool)

    for j in range(delta.p):
        if not delta[j] and iota[j]:
            count = delta.active_count
            if cap is not None and count > cap:
                continue
            proposed[j] = True
            if cap is not None and count + 1 > cap:
                continue
            if _flip_accepted(uniforms[j], scale, flip_ratio(prior, ql, current, j)):
                delta.set(j, True)
                accepted[j] = True
        elif delta[j] and not iota[j]:
            proposed[j] = True
            log_a = flip_ratio(prior, ql, current, j)
            if _flip_accepted(uniforms[j], scale, -log_a):
                delta.set(j, False)
                accepted[j] = True

    return ModelState(delta, state.theta.copy()), proposed, accepted


def _sweep_gaussian(
    prior: PriorSpec,
    ql: GaussianRegressionQL,
    state: ModelState,
    cap: int | None,
    scale: float,
    iota: np.ndarray,
    uniforms: np.ndarray,
) -> tuple[ModelState, np.ndarray, np.ndarray]:
    """Sequential sweep evaluated in vectorized segments between accepted flips.

    Between two accepted flips every A_j depends on the same δ, so a whole
    segment is decided at once; after a flip at j the cross products are
    updated in O(p) and the sweep resumes at j + 1.
    """
    p = ql.p
    theta = state.theta
    bits = np.array(state.delta.bits, dtype=bool)
    count = int(bits.sum())
    proposed = np.zeros(p, dtype=bool)
    accepted = np.zeros(p, dtype=bool)

    log_prior_term = (
        prior.log_q_ratio
        + _half_log_precision_ratio(prior)
        - 0.5 * (prior.rho1 - prior.rho0) * theta * theta
    )
    active = np.flatnonzero(bits)
    fitted = ql.cross_products(active, theta[active])
    log_thresholds = np.log(np.maximum(uniforms, np.finfo(float).tiny)) - math.log(scale)

    start = 0
    while start < p:
        log_a = log_prior_term[start:] + ql.coordinate_deltas(
            bits[start:], theta[start:], fitted[start:], start
        )
        seg_bits = bits[start:]
        seg_iota = iota[start:]
        seg_thr = log_thresholds[start:]

        add = ~seg_bits & seg_iota
        if cap is not None and count > cap:
            add[:] = False
        remove = seg_bits & ~seg_iota

        if cap is not None and count + 1 > cap:
            add_ok = np.zeros_like(add)
        else:
            add_ok = add & (seg_thr < np.minimum(0.0, log_a))
        remove_ok = remove & (seg_thr < np.minimum(0.0, -log_a))
        flips = np.flatnonzero(add_ok | remove_ok)

        if flips.size == 0:
            proposed[start:] = add | remove
            break

        k = int(flips[0])
        j = start + k
        proposed[start : j + 1] = (add | remove)[: k + 1]
        accepted[j] = True
        if bits[j]:
            bits[j] = False
            count -= 1
            fitted -= theta[j] * ql.gram_column(j)
        else:
            bits[j] = True
            count += 1
            fitted += theta[j] * ql.gram_column(j)
        start = j + 1

    return ModelState(BinaryModel(bits), theta.copy()), proposed, accepted


def _sweep_delta(
    prior: PriorSpec,
    ql: QuasiLikelihood,
    state: ModelState,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> tuple[ModelState, np.ndarray, np.ndarray]:
    p = state.p
    iota = rng.random(p) < 0.5
    uniforms = rng.random(p)
    cap = config.effective_cap(prior)
    if isinstance(ql, GaussianRegressionQL):
        return _sweep_gaussian(
            prior, ql, state, cap, config.flip_scale, iota, uniforms
        )
    return _sweep_scalar(prior, ql, state, cap, config.flip_scale, iota, uniforms)


def step_delta(
    prior: PriorSpec,
    ql: QuasiLikelihood,
    state: ModelState,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> ModelState:
    """One sequential sweep j = 1..p of independent Metropolis flips of δ.

    At each j, ι ~ Ber(0.5) is drawn. If δ_j = 0 and ι = 1 the inclusion is
    accepted with probability h·min(1, A_j); if δ_j = 1 and ι = 0 the removal is
    accepted with probability h·min(1, 1/A_j); h = ½ when ``config.lazy_half``.
    Under a cap, inclusions are proposed only while ‖δ‖₀ ≤ s̄ and any move
    leaving the capped support is rejected.
    """
    new_state, _, _ = _sweep_delta(prior, ql, state, config, rng)
    return new_state


def run_chain(
    prior: PriorSpec,
    ql: QuasiLikelihood,
    init: ModelState,
    config: SamplerConfig,
    inner_kernel: InnerKernel | None = None,
) -> Trace:
    """Run the Metropolized-Gibbs sampler for ``config.n_iter`` iterations.

    Gaussian regression quasi-likelihoods use the exact conditional θ draw
    unless an ``inner_kernel`` is given; other quasi-likelihoods use
    ``inner_kernel`` or a random-walk Metropolis default. The output is fully
    determined by ``config.seed``.

    Raises:
        SamplerError: If ``init`` lies outside the prior support.
    """
    if init.p != prior.p or init.p != ql.dim:
        raise SamplerError(
            f"dimension mismatch: prior p={prior.p}, likelihood p={ql.dim}, init p={init.p}"
        )
    cap = config.effective_cap(prior)
    if cap is not None and init.delta.active_count > cap:
        raise SamplerError(
            f"initial model has {init.delta.active_count} active coordinates, above cap {cap}"
        )

    rng = make_rng(config.seed)
    exact = isinstance(ql, GaussianRegressionQL) and inner_kernel is None
    kernel = inner_kernel or RandomWalkKernel()

    p = init.p
    m = config.n_stored
    delta_samples = np.zeros((m, p), dtype=bool)
    theta_samples = np.zeros((m, p))
    iterations = np.zeros(m, dtype=np.int64)
    model_sizes = np.zeros(config.n_iter, dtype=np.int64)
    acceptance_counts = np.zeros(p, dtype=np.int64)
    proposal_counts = np.zeros(p, dtype=np.int64)
    durations = np.zeros(config.n_iter)

    logger.info(
        f"Starting chain: p={p}, n_iter={config.n_iter}, burn_in={config.burn_in}, "
        f"thin={config.thin}, cap={cap}, exact_theta_step={exact}"
    )

    state = init.copy()
    stored = 0
    for k in range(1, config.n_iter + 1):
        t0 = time.perf_counter()
        if exact:
            state = step_theta_linear(prior, ql, state, rng)
        else:
            state = step_theta_generic(prior, ql, state, kernel, rng)
        state, proposed, accepted = _sweep_delta(prior, ql, state, config, rng)
        durations[k - 1] = time.perf_counter() - t0

        proposal_counts += proposed
        acceptance_counts += accepted
        model_sizes[k - 1] = state.delta.active_count

        after = k - config.burn_in
        if after > 0 and after % config.thin == 0 and stored < m:
            delta_samples[stored] = state.delta.bits
            theta_samples[stored] = state.theta
            iterations[stored] = k
            stored += 1

    timing = TimingStats.from_durations(durations)
    logger.info(
        f"Chain finished: {stored} samples stored, {timing.total:.2f}s total, "
        f"median model size {float(np.median(model_sizes[config.burn_in:])):.1f}"
    )
    return Trace(
        delta_samples=delta_samples,
        theta_samples=theta_samples,
        iterations=iterations,
        model_sizes=model_sizes,
        acceptance_counts=acceptance_counts,
        proposal_counts=proposal_counts,
        timing=timing,
    )


def default_lasso_lambda(ql: GaussianRegressionQL) -> float:
    """Universal threshold σ·sqrt(2 log p / n)."""
    return math.sqrt(ql.sigma2) * math.sqrt(2.0 * math.log(max(ql.p, 2)) / ql.n)


def _soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def lasso_init(
    ql: GaussianRegressionQL,
    lam: float | None = None,
    tol: float = DEFAULT_LASSO_TOL,
    max_sweeps: int = DEFAULT_LASSO_MAX_SWEEPS,
) -> ModelState:
    """Lasso warm start: δ = support of the lasso solution, θ = its values.

    Solves min (1/2n)‖y − Xβ‖² + λ‖β‖₁ by cyclic coordinate descent, iterating
    over the current support between full sweeps, until the largest coefficient
    change of a full sweep falls below ``tol``.

    Raises:
        SamplerError: If ``lam`` is not positive.
        SamplerNumericalError: If no convergence after ``max_sweeps`` sweeps.
    """
    if lam is None:
        lam = default_lasso_lambda(ql)
    if not lam > 0:
        raise SamplerError(f"lasso lambda must be positive, got {lam}")

    X = ql.X
    norms = ql.col_sq_norms
    threshold = ql.n * lam
    beta = np.zeros(ql.p)
    resid = ql.y.copy()
    usable = np.flatnonzero(norms > 0)

    def sweep(indices) -> float:
        nonlocal resid
        largest = 0.0
        for j in indices:
            old = beta[j]
            x_j = X[:, j]
            rho = float(x_j @ resid) + norms[j] * old
            new = _soft_threshold(rho, threshold) / norms[j]
            change = new - old
            if change != 0.0:
                resid -= change * x_j
                beta[j] = new
                largest = max(largest, abs(change))
        return largest

    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        change = sweep(usable)
        sweeps += 1
        if change < tol:
            converged = True
            break
        support = np.flatnonzero(beta)
        while sweeps < max_sweeps:
            inner = sweep(support)
            sweeps += 1
            if inner < tol:
                break

    if not converged:
        raise SamplerNumericalError(
            f"lasso coordinate descent did not converge within {max_sweeps} sweeps"
        )

    delta = BinaryModel(beta != 0)
    logger.info(
        f"Lasso warm start: lambda={lam:.4g}, {delta.active_count} active, {sweeps} sweeps"
    )
    return ModelState(delta, beta)


def truncate_to_cap(state: ModelState, cap: int | None) -> ModelState:
    """Keep the ``cap`` largest |θ_j| of a warm start whose support exceeds ``cap``."""
    if cap is None or state.delta.active_count <= cap:
        return state
    active = state.delta.active
    keep = active[np.argsort(-np.abs(state.theta[active]), kind="stable")[:cap]]
    delta = BinaryModel.from_indices(state.p, keep)
    return ModelState(delta, np.where(delta.bits, state.theta, 0.0))
