"""Coordinate-ascent variational approximations of the regression quasi-posterior.

The variational family is a product of independent Bernoulli inclusions and a
Gaussian on θ whose covariance follows a sparsity pattern set by a template
δ^(i): full covariance on the template support, diagonal elsewhere. The empty
template gives the mean-field (skinny) approximation and the all-ones template
the full one.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import entr, expit

from .model import (
    BinaryModel,
    GaussianRegressionQL,
    ModelState,
    NumericalError,
    PriorSpec,
)

logger = logging.getLogger(__name__)

ALPHA_MIN = 1e-12
ALPHA_MAX = 1.0 - 1e-12
DEFAULT_MAX_ITER = 50
DEFAULT_TOL = 1e-8
INIT_COV_SCALE = 1e-3  # C starts at (c/n)·I
INIT_SUPPORT_ALPHA = 0.9
SWEEP_BLOCK = 128


class VariationalError(Exception):
    """Raised when variational inputs are inconsistent."""

    pass


class VariationalNumericalError(VariationalError, NumericalError):
    """Raised when a covariance block cannot be inverted."""

    pass


@dataclass
class SparsityTemplate:
    """Template δ^(i) defining the covariance pattern S of the variational family."""

    template: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.template)
        if arr.ndim != 1:
            raise VariationalError(f"template must be a 1-d vector, got shape {arr.shape}")
        self.template = arr.astype(bool)

    @classmethod
    def skinny(cls, p: int) -> "SparsityTemplate":
        return cls(np.zeros(p, dtype=bool))

    @classmethod
    def full(cls, p: int) -> "SparsityTemplate":
        return cls(np.ones(p, dtype=bool))

    @classmethod
    def from_indices(cls, p: int, indices) -> "SparsityTemplate":
        return cls(BinaryModel.from_indices(p, indices).bits)

    @property
    def p(self) -> int:
        return self.template.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.template)

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.template))

    def pattern(self) -> np.ndarray:
        """S with S_ii = 1 and S_ij = δ^(i)_i δ^(i)_j for i ≠ j."""
        t = self.template.astype(float)
        S = np.outer(t, t)
        np.fill_diagonal(S, 1.0)
        return S

    def contains(self, delta: BinaryModel) -> bool:
        return bool(np.all(self.template[delta.bits]))


@dataclass
class VariationalState:
    """Parameters (α, μ, C) of the variational family.

    C is stored as a dense block over the template support plus a diagonal for
    every coordinate; entries off the pattern are exactly zero.
    """

    alpha: np.ndarray
    mu: np.ndarray
    cov_diag: np.ndarray
    cov_block: np.ndarray
    support: np.ndarray
    iterations: int = 0
    converged: bool = False
    elbo_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.alpha = np.clip(np.asarray(self.alpha, dtype=float), ALPHA_MIN, ALPHA_MAX)
        self.mu = np.asarray(self.mu, dtype=float)
        self.cov_diag = np.asarray(self.cov_diag, dtype=float)
        self.support = np.asarray(self.support, dtype=int)
        self.cov_block = np.asarray(self.cov_block, dtype=float).reshape(
            self.support.size, self.support.size
        )
        p = self.alpha.shape[0]
        if self.mu.shape != (p,) or self.cov_diag.shape != (p,):
            raise VariationalError(
                f"alpha, mu and cov_diag must all have length {p}"
            )
        if np.any(self.cov_diag <= 0):
            raise VariationalError("covariance diagonal must be positive")

    @property
    def p(self) -> int:
        return self.alpha.shape[0]

    @property
    def elbo(self) -> float | None:
        return self.elbo_trace[-1] if self.elbo_trace else None

    def covariance(self) -> np.ndarray:
        """Dense p×p covariance C."""
        C = np.diag(self.cov_diag)
        if self.support.size:
            C[np.ix_(self.support, self.support)] = self.cov_block
        return C

    def copy(self) -> "VariationalState":
        return VariationalState(
            alpha=self.alpha.copy(),
            mu=self.mu.copy(),
            cov_diag=self.cov_diag.copy(),
            cov_block=self.cov_block.copy(),
            support=self.support.copy(),
            iterations=self.iterations,
            converged=self.converged,
            elbo_trace=list(self.elbo_trace),
        )


def _require_proper_slab(prior: PriorSpec) -> None:
    if prior.rho1 <= 0:
        raise VariationalError("variational updates require a proper slab (rho1 > 0)")


def _check_state(state: VariationalState, ql: GaussianRegressionQL) -> None:
    if state.p != ql.p:
        raise VariationalError(
            f"dimension mismatch: state has p={state.p}, likelihood has p={ql.p}"
        )


def _offdiag_block_weights(
    state: VariationalState, ql: GaussianRegressionQL
) -> np.ndarray:
    """C_ij⟨X_i, X_j⟩ over the template support with a zero diagonal."""
    if state.support.size == 0:
        return np.zeros((0, 0))
    weights = state.cov_block * ql.gram_block(state.support)
    np.fill_diagonal(weights, 0.0)
    return weights


def build_template(
    ql: GaussianRegressionQL, size: int, seed_support=None
) -> SparsityTemplate:
    """Midsize template: ``seed_support`` completed by the largest |corr(X_j, y)|.

    Args:
        ql: Regression quasi-likelihood.
        size: Target template size, clipped to [0, p].
        seed_support: Indices forced into the template (e.g. the lasso support).
    """
    size = max(0, min(int(size), ql.p))
    seeds = [] if seed_support is None else [int(j) for j in seed_support]
    chosen = list(dict.fromkeys(seeds))[:size]
    if len(chosen) < size:
        with np.errstate(invalid="ignore", divide="ignore"):
            score = np.abs(ql.xty) / np.sqrt(ql.col_sq_norms)
        score = np.nan_to_num(score, nan=0.0)
        order = np.argsort(-score, kind="stable")
        taken = set(chosen)
        for j in order:
            if len(chosen) >= size:
                break
            if int(j) not in taken:
                chosen.append(int(j))
                taken.add(int(j))
    return SparsityTemplate.from_indices(ql.p, chosen)


def init_variational(
    ql: GaussianRegressionQL,
    prior: PriorSpec,
    tmpl: SparsityTemplate,
    warm_start: ModelState | None = None,
    cov_scale: float = INIT_COV_SCALE,
) -> VariationalState:
    """Initial (α, μ, C): α = 0.9 on the warm-start support and q elsewhere,
    μ = warm-start θ_δ, C = (c/n)·I.
    """
    p = ql.p
    if tmpl.p != p:
        raise VariationalError(f"template has p={tmpl.p}, likelihood has p={p}")
    if warm_start is None:
        bits = np.zeros(p, dtype=bool)
        mu = np.zeros(p)
    else:
        bits = np.array(warm_start.delta.bits)
        mu = warm_start.theta_delta
    alpha = np.where(bits, INIT_SUPPORT_ALPHA, prior.q)
    scale = cov_scale / ql.n
    support = tmpl.support
    return VariationalState(
        alpha=alpha,
        mu=mu,
        cov_diag=np.full(p, scale),
        cov_block=scale * np.eye(support.size),
        support=support,
    )


def _blocks(p: int, size: int = SWEEP_BLOCK):
    for start in range(0, p, size):
        yield slice(start, min(start + size, p))


def _clamped_alpha(log_r: np.ndarray) -> np.ndarray:
    return np.clip(expit(-log_r), ALPHA_MIN, ALPHA_MAX)


def cavi_update_alpha(
    state: VariationalState, prior: PriorSpec, ql: GaussianRegressionQL
) -> VariationalState:
    """Sequential sweep of the inclusion probabilities α_j = 1/(1 + R_j).

    Each R_j uses the α values already updated in the same sweep. log R_j is
    computed directly and mapped through a sigmoid, so R_j never overflows.

    The sweep runs over consecutive blocks of coordinates. Inside a block,
    log R_j is affine in the new α_i of the earlier block members, so the
    sequential values are the unique fixed point of a strictly triangular map,
    reached after at most one pass per block member.
    """
    _require_proper_slab(prior)
    _check_state(state, ql)

    new = state.copy()
    alpha, mu = new.alpha, new.mu
    theta_sq = mu * mu + new.cov_diag
    norms = ql.col_sq_norms
    sigma2 = ql.sigma2
    inv_2s2 = 0.5 / sigma2
    base = -prior.log_q_ratio + 0.5 * (math.log(prior.rho0) - math.log(prior.rho1))
    base_terms = base + 0.5 * (prior.rho1 - prior.rho0) * theta_sq

    position = np.full(ql.p, -1)
    position[new.support] = np.arange(new.support.size)
    weights = _offdiag_block_weights(new, ql)

    resid = ql.y - ql.X @ (alpha * mu)
    for block in _blocks(ql.p):
        a_old = alpha[block].copy()
        mu_b = mu[block]
        norms_b = norms[block]
        inner = ql.Xt[block] @ resid + a_old * mu_b * norms_b

        k = position[block]
        in_tmpl = k >= 0
        s = np.zeros(k.size)
        coupling = np.outer(mu_b, mu_b) * ql.gram_slice(block)
        if np.any(in_tmpl):
            rows = k[in_tmpl]
            s[in_tmpl] = 2.0 * (weights[rows] @ alpha[new.support])
            coupling[np.ix_(in_tmpl, in_tmpl)] += weights[np.ix_(rows, rows)]
        coupling = np.tril(coupling, k=-1) / sigma2

        log_r = base_terms[block] + inv_2s2 * (
            theta_sq[block] * norms_b - 2.0 * mu_b * inner + s
        )
        a_new = _clamped_alpha(log_r)
        for _ in range(k.size):
            nxt = _clamped_alpha(log_r + coupling @ (a_new - a_old))
            if np.array_equal(nxt, a_new):
                break
            a_new = nxt

        alpha[block] = a_new
        resid -= ql.X[:, block] @ ((a_new - a_old) * mu_b)
    return new


def cavi_update_gaussian(
    state: VariationalState,
    prior: PriorSpec,
    ql: GaussianRegressionQL,
    tmpl: SparsityTemplate,
) -> VariationalState:
    """Update (μ, C) given freshly updated α.

    Coordinates outside the template get the diagonal update one at a time;
    the template block is then updated jointly by inverting
    [Λ + M/σ²] restricted to the template.

    Raises:
        VariationalNumericalError: If the template block is not positive definite.
    """
    _check_state(state, ql)
    if not np.array_equal(tmpl.support, state.support):
        raise VariationalError("state covariance support does not match the template")

    new = state.copy()
    alpha, mu, cov_diag = new.alpha, new.mu, new.cov_diag
    norms = ql.col_sq_norms
    sigma2 = ql.sigma2
    free = ~tmpl.template

    resid = ql.y - ql.X @ (alpha * mu)
    for block in _blocks(ql.p):
        f = free[block]
        if not np.any(f):
            continue
        a_b = alpha[block]
        c_b = 1.0 / ((prior.rho1 + norms[block] / sigma2) * a_b + prior.rho0 * (1.0 - a_b))
        w = np.where(f, c_b * a_b / sigma2, 0.0)
        inner = ql.Xt[block] @ resid + a_b * mu[block] * norms[block]
        # Gauss-Seidel over the free block members as a unit lower-triangular solve
        lower = np.tril(ql.gram_slice(block) * a_b, k=-1) * w[:, None]
        step = scipy.linalg.solve_triangular(
            lower,
            np.where(f, w * inner - mu[block], 0.0),
            lower=True,
            unit_diagonal=True,
            check_finite=False,
        )
        mu[block] += step
        cov_diag[block] = np.where(f, c_b, cov_diag[block])
        resid -= ql.X[:, block] @ (a_b * step)

    support = tmpl.support
    if support.size:
        a_t = alpha[support]
        y_tilde = resid + ql.X[:, support] @ (a_t * mu[support])
        gram = ql.gram_block(support)
        M = np.outer(a_t, a_t) * gram
        np.fill_diagonal(M, a_t * np.diag(gram))
        lam = a_t * prior.rho1 + prior.rho0 * (1.0 - a_t)
        precision = np.diag(lam) + M / sigma2
        try:
            factor = scipy.linalg.cho_factor(precision, lower=True)
        except np.linalg.LinAlgError as e:
            raise VariationalNumericalError(
                f"covariance block inversion failed for template of size {support.size}"
            ) from e
        block = scipy.linalg.cho_solve(factor, np.eye(support.size))
        block = 0.5 * (block + block.T)
        mu[support] = block @ (a_t * (ql.Xt[support] @ y_tilde)) / sigma2
        new.cov_block = block
        cov_diag[support] = np.diag(block)
    return new


def elbo(
    state: VariationalState, prior: PriorSpec, ql: GaussianRegressionQL
) -> float:
    """Evidence lower bound E_Q[log Π̃] + H(Q) of the unnormalized quasi-posterior."""
    _require_proper_slab(prior)
    _check_state(state, ql)
    a, m, cd = state.alpha, state.mu, state.cov_diag
    norms = ql.col_sq_norms
    p = ql.p

    log_rho1_2pi = math.log(prior.rho1 / (2.0 * math.pi))
    log_rho0_2pi = math.log(prior.rho0 / (2.0 * math.pi))
    second_moment = m * m + cd
    lam = a * prior.rho1 + (1.0 - a) * prior.rho0

    expected_log_weights = float(np.sum(a * prior.log_q + (1.0 - a) * prior.log_one_minus_q))
    expected_log_gauss = float(
        np.sum(0.5 * a * log_rho1_2pi + 0.5 * (1.0 - a) * log_rho0_2pi)
        - 0.5 * np.sum(lam * second_moment)
    )

    resid = ql.y - ql.X @ (a * m)
    quad = float(resid @ resid)
    quad += float(np.sum(a * (1.0 - a) * m * m * norms))
    quad += float(np.sum(a * cd * norms))
    if state.support.size:
        a_t = a[state.support]
        quad += float(a_t @ _offdiag_block_weights(state, ql) @ a_t)
    expected_loglik = -0.5 * quad / ql.sigma2

    entropy = float(np.sum(entr(a) + entr(1.0 - a)))
    entropy += 0.5 * p * (1.0 + math.log(2.0 * math.pi))
    out = np.ones(p, dtype=bool)
    out[state.support] = False
    entropy += 0.5 * float(np.sum(np.log(cd[out])))
    if state.support.size:
        sign, logdet = np.linalg.slogdet(state.cov_block)
        if sign <= 0:
            raise VariationalNumericalError("covariance block is not positive definite")
        entropy += 0.5 * logdet

    return expected_log_weights + expected_log_gauss + expected_loglik + entropy


def run_cavi(
    prior: PriorSpec,
    ql: GaussianRegressionQL,
    tmpl: SparsityTemplate,
    init: VariationalState,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    track_elbo: bool = False,
) -> VariationalState:
    """Alternate α and (μ, C) updates until max_iter or max|Δ(α, μ)| < tol.

    The returned state carries the iteration count, a convergence flag and the
    ELBO (after every iteration when ``track_elbo``, otherwise only the final one).
    """
    if max_iter < 1:
        raise VariationalError(f"max_iter must be >= 1, got {max_iter}")
    if prior.cap is not None:
        logger.warning("CAVI ignores the prior cap; using the uncapped inclusion weights")

    state = init.copy()
    state.elbo_trace = []
    if track_elbo:
        state.elbo_trace.append(elbo(state, prior, ql))

    for it in range(1, max_iter + 1):
        updated = cavi_update_alpha(state, prior, ql)
        updated = cavi_update_gaussian(updated, prior, ql, tmpl)
        change = max(
            float(np.max(np.abs(updated.alpha - state.alpha), initial=0.0)),
            float(np.max(np.abs(updated.mu - state.mu), initial=0.0)),
        )
        state = updated
        state.iterations = it
        if track_elbo:
            state.elbo_trace.append(elbo(state, prior, ql))
        if change < tol:
            state.converged = True
            break

    if not track_elbo:
        state.elbo_trace = [elbo(state, prior, ql)]
    if state.converged:
        logger.info(f"CAVI converged after {state.iterations} iterations (template size {tmpl.size})")
    else:
        logger.warning(
            f"CAVI stopped at max_iter={max_iter} without reaching tol={tol:g} "
            f"(template size {tmpl.size})"
        )
    return state


def sample_variational(
    state: VariationalState, n_draws: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Independent draws from Q: δ_j ~ Bernoulli(α_j) and θ ~ N(μ, C).

    Returns:
        (n_draws, p) boolean inclusions and (n_draws, p) coefficients.

    Raises:
        VariationalNumericalError: If the template block of C is not positive definite.
    """
    if n_draws < 1:
        raise VariationalError(f"n_draws must be >= 1, got {n_draws}")
    p = state.p
    deltas = rng.random((n_draws, p)) < state.alpha
    theta = state.mu + rng.standard_normal((n_draws, p)) * np.sqrt(state.cov_diag)
    if state.support.size:
        try:
            chol = scipy.linalg.cholesky(state.cov_block, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as e:
            raise VariationalNumericalError(
                "template covariance block is not positive definite"
            ) from e
        z = rng.standard_normal((n_draws, state.support.size))
        theta[:, state.support] = state.mu[state.support] + z @ chol.T
    return deltas, theta


def zeta_gap(
    info: np.ndarray,
    gamma: float,
    tmpl: SparsityTemplate,
    delta_star: BinaryModel,
) -> float:
    """Gaussian-KL penalty of restricting the limit precision to the pattern S.

    ζ = log(det Ī_γ / det(S·Ī_γ)) + Tr(Ī_γ⁻¹(S·Ī_γ)) − p, where Ī_γ carries
    ``info`` on δ⋆ and (1/γ)·I elsewhere. The off-support block is diagonal and
    untouched by the mask, so its contribution cancels and only the δ⋆ block
    is factorized.

    Raises:
        VariationalError: On inconsistent dimensions or gamma <= 0.
        VariationalNumericalError: If the masked matrix is not positive definite.
    """
    if not gamma > 0:
        raise VariationalError(f"gamma must be positive, got {gamma}")
    if tmpl.p != delta_star.p:
        raise VariationalError("template and delta_star have different lengths")
    info = np.asarray(info, dtype=float)
    active = delta_star.active
    s = active.size
    if info.shape != (s, s):
        raise VariationalError(f"info must be {s}x{s}, got shape {info.shape}")
    if s == 0:
        return 0.0
    if not np.allclose(info, info.T):
        raise VariationalError("info must be symmetric")

    masked = tmpl.pattern()[np.ix_(active, active)] * info
    if np.array_equal(masked, info):
        return 0.0

    try:
        full_factor = scipy.linalg.cho_factor(info, lower=True)
    except np.linalg.LinAlgError as e:
        raise VariationalNumericalError("info matrix is not positive definite") from e
    try:
        masked_factor = scipy.linalg.cho_factor(masked, lower=True)
    except np.linalg.LinAlgError as e:
        raise VariationalNumericalError(
            "masked information matrix is not positive definite; the pattern "
            "must preserve positive definiteness"
        ) from e

    logdet_full = 2.0 * float(np.sum(np.log(np.diag(full_factor[0]))))
    logdet_masked = 2.0 * float(np.sum(np.log(np.diag(masked_factor[0]))))
    trace = float(np.trace(scipy.linalg.cho_solve(full_factor, masked)))
    return max(0.0, logdet_full - logdet_masked + trace - s)
