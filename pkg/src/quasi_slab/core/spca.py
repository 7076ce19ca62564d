"""Sparse leading principal component through a spike-and-slab regression.

With X = UΛV' the leading right singular vector solves the least-squares
problem y = Xθ for y = Λ₁₁U₁, so a capped spike-and-slab regression on that
response yields a sparse estimate of the direction V₁.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .model import GaussianRegressionQL, ModelState, PriorSpec
from .sampler import (
    SamplerConfig,
    Trace,
    lasso_init,
    make_rng,
    run_chain,
    truncate_to_cap,
)
from .varapprox import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    SparsityTemplate,
    VariationalState,
    build_template,
    init_variational,
    run_cavi,
    sample_variational,
)

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-10
DEFAULT_DRAWS = 2000
SPCA_METHODS: tuple[str, ...] = ("mcmc", "skinny", "midsize", "full")


class SpcaError(Exception):
    """Raised when the sparse PCA inputs are unusable."""

    pass


@dataclass
class PcResponse:
    """Regression response built from the SVD of X.

    ``tied`` flags leading singular values equal within a relative 1e-10, in
    which case V₁ is not identified.
    """

    y: np.ndarray
    v1: np.ndarray
    singular_values: np.ndarray
    tied: bool


def pc_response(X) -> PcResponse:
    """y = Λ₁₁U₁ and V₁, with V₁'s largest-magnitude entry made positive.

    Raises:
        SpcaError: If X is not a 2-d matrix or is identically zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise SpcaError(f"X must be a non-empty 2-d matrix, got shape {X.shape}")
    if not np.any(X):
        raise SpcaError("X is identically zero; the leading direction is undefined")

    U, s, Vt = scipy.linalg.svd(X, full_matrices=False, check_finite=False)
    u1, v1 = U[:, 0].copy(), Vt[0].copy()
    if v1[np.argmax(np.abs(v1))] < 0:
        u1, v1 = -u1, -v1

    tied = s.size > 1 and (s[0] - s[1]) <= TIE_TOLERANCE * s[0]
    if tied:
        logger.warning(
            f"Leading singular values tie ({s[0]:.6g} vs {s[1]:.6g}); "
            "the first principal direction is ill-defined"
        )
    return PcResponse(y=s[0] * u1, v1=v1, singular_values=s, tied=bool(tied))


def projection_error(theta, theta_star) -> float:
    """‖θθ'/‖θ‖² − θ⋆θ⋆'/‖θ⋆‖²‖₂ = √(1 − cos²∠(θ, θ⋆)).

    Raises:
        SpcaError: If either vector is zero.
    """
    theta = np.asarray(theta, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if theta.shape != theta_star.shape:
        raise SpcaError(f"shape mismatch: {theta.shape} vs {theta_star.shape}")
    norm, norm_star = np.linalg.norm(theta), np.linalg.norm(theta_star)
    if norm == 0 or norm_star == 0:
        raise SpcaError("projection error is undefined for a zero vector")
    cosine = float(theta @ theta_star) / (norm * norm_star)
    return math.sqrt(max(0.0, 1.0 - cosine * cosine))


@dataclass
class SpcaFit:
    """Sparse PCA posterior output.

    ``directions`` hold unit-norm θ_δ directions, each sign-aligned with
    ``v1``: the stored chain samples for ``mcmc`` and independent draws from
    the fitted variational distribution otherwise. ``sign`` is the alignment of
    the raw mean direction.
    """

    method: str
    directions: np.ndarray
    inclusion_probs: np.ndarray
    v1: np.ndarray
    sign: int
    trace: Trace | None = None
    state: VariationalState | None = None
    proj_error_samples: np.ndarray | None = None

    def mean_direction(self) -> np.ndarray:
        mean = self.directions.mean(axis=0)
        norm = np.linalg.norm(mean)
        return mean / norm if norm > 0 else mean

    @property
    def mean_projection_error(self) -> float | None:
        if self.proj_error_samples is None:
            return None
        return float(self.proj_error_samples.mean())


def _normalize_samples(
    deltas: np.ndarray, thetas: np.ndarray, v1: np.ndarray
) -> tuple[np.ndarray, int]:
    # an empty δ keeps its full θ draw as the direction
    directions = np.where(deltas, thetas, 0.0)
    norms = np.linalg.norm(directions, axis=1)
    empty = norms == 0
    if np.any(empty):
        directions[empty] = thetas[empty]
        norms[empty] = np.linalg.norm(directions[empty], axis=1)
    if np.any(norms == 0):
        raise SpcaError("a θ sample is identically zero and cannot be normalized")
    directions /= norms[:, None]

    raw_mean = directions.mean(axis=0)
    sign = -1 if float(raw_mean @ v1) < 0 else 1
    flips = np.where(directions @ v1 < 0, -1.0, 1.0)
    return directions * flips[:, None], sign


def _variational_template(
    ql: GaussianRegressionQL, method: str, template_size: int, warm: ModelState
) -> SparsityTemplate:
    if method == "skinny":
        return SparsityTemplate.skinny(ql.p)
    if method == "full":
        return SparsityTemplate.full(ql.p)
    return build_template(ql, template_size, seed_support=warm.delta.active)


def fit_spca(
    X,
    prior: PriorSpec,
    sigma2: float = 1.0,
    config: SamplerConfig | None = None,
    theta_star=None,
    lasso_lambda: float | None = None,
    method: str = "mcmc",
    template_size: int = 100,
    cavi_max_iter: int = DEFAULT_MAX_ITER,
    cavi_tol: float = DEFAULT_TOL,
    n_draws: int = DEFAULT_DRAWS,
) -> SpcaFit:
    """Fit the regression quasi-posterior with response pc_response(X).y.

    ``mcmc`` samples the capped posterior. The variational methods run CAVI on
    the same regression with the cap dropped, then draw ``n_draws`` directions
    from the fitted distribution with the ``config.seed`` stream.

    Args:
        X: (n, p) data matrix.
        prior: Prior on θ; a cap (on the prior or on ``config``) is required.
        sigma2: Working noise variance of the regression quasi-likelihood.
        config: Chain settings; only the seed is used by the variational methods.
        theta_star: Optional true direction, enabling per-sample projection errors.
        lasso_lambda: Warm-start penalty; defaults to σ√(2 log p / n).
        method: One of ``SPCA_METHODS``.
        template_size: Size of the midsize template.

    Raises:
        SpcaError: If no cap is set, the method is unknown or dimensions disagree.
    """
    config = config or SamplerConfig()
    if method not in SPCA_METHODS:
        raise SpcaError(f"unknown method {method!r}; expected one of {', '.join(SPCA_METHODS)}")
    X = np.asarray(X, dtype=float)
    cap = config.effective_cap(prior)
    if cap is None:
        raise SpcaError("sparse PCA requires a maximal model size (cap)")
    if X.ndim != 2 or X.shape[1] != prior.p:
        raise SpcaError(f"X has shape {X.shape}, prior expects p={prior.p}")
    if not sigma2 > 0:
        raise SpcaError(f"sigma2 must be positive, got {sigma2}")
    if theta_star is not None:
        theta_star = np.asarray(theta_star, dtype=float)
        if theta_star.shape != (prior.p,):
            raise SpcaError(f"theta_star must have length {prior.p}")

    response = pc_response(X)
    ql = GaussianRegressionQL(X, response.y, sigma2=sigma2)
    warm = lasso_init(ql, lasso_lambda)
    logger.info(f"Sparse PCA ({method}): n={X.shape[0]}, p={prior.p}, cap={cap}")

    trace = state = None
    if method == "mcmc":
        trace = run_chain(prior, ql, truncate_to_cap(warm, cap), config)
        deltas, thetas = trace.delta_samples, trace.theta_samples
        inclusion = trace.inclusion_frequencies()
    else:
        uncapped = replace(prior, cap=None)
        tmpl = _variational_template(ql, method, template_size, warm)
        init = init_variational(ql, uncapped, tmpl, warm)
        state = run_cavi(uncapped, ql, tmpl, init, max_iter=cavi_max_iter, tol=cavi_tol)
        deltas, thetas = sample_variational(state, n_draws, make_rng(config.seed))
        inclusion = state.alpha.copy()

    directions, sign = _normalize_samples(deltas, thetas, response.v1)
    if trace is not None:
        trace = replace(trace, theta_samples=directions)

    errors = None
    if theta_star is not None:
        errors = np.array([projection_error(d, theta_star) for d in directions])

    return SpcaFit(
        method=method,
        directions=directions,
        inclusion_probs=inclusion,
        v1=response.v1,
        sign=sign,
        trace=trace,
        state=state,
        proj_error_samples=errors,
    )
