"""Spike-and-slab prior, binary models and sparsified quasi-likelihoods.

This module holds the building blocks shared by every sampler and approximation:
the binary model vector, the Gaussian spike-and-slab prior with its sparsity
weights, the quasi-likelihood interface, and evaluation of the unnormalized log
quasi-posterior. All densities are handled in log space.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# Log-density of states outside the prior support (capped prior). Every
# acceptance ratio built on it is a certain rejection.
NEG_INF = float("-inf")

DEFAULT_GRAM_THRESHOLD = 8192

_LOG_2PI = math.log(2.0 * math.pi)


class ModelError(Exception):
    """Raised when model inputs are inconsistent (dimensions, non-finite values)."""

    pass


class NumericalError(Exception):
    """Raised when a numerical routine fails (non-PD matrix, non-convergence)."""

    pass


class BinaryModel:
    """Binary inclusion vector δ ∈ {0,1}^p with a cached active count."""

    __slots__ = ("_bits", "_active_count")

    def __init__(self, bits):
        arr = np.asarray(bits)
        if arr.ndim != 1:
            raise ModelError(f"BinaryModel expects a 1-d vector, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            if not np.all((arr == 0) | (arr == 1)):
                raise ModelError("BinaryModel entries must be 0 or 1")
            arr = arr.astype(bool)
        self._bits = arr.copy()
        self._active_count = int(np.count_nonzero(self._bits))

    @classmethod
    def zeros(cls, p: int) -> "BinaryModel":
        return cls(np.zeros(p, dtype=bool))

    @classmethod
    def ones(cls, p: int) -> "BinaryModel":
        return cls(np.ones(p, dtype=bool))

    @classmethod
    def from_indices(cls, p: int, indices) -> "BinaryModel":
        bits = np.zeros(p, dtype=bool)
        bits[np.asarray(list(indices), dtype=int)] = True
        return cls(bits)

    @property
    def bits(self) -> np.ndarray:
        """Read-only view of the inclusion bits."""
        view = self._bits.view()
        view.flags.writeable = False
        return view

    @property
    def active_count(self) -> int:
        return self._active_count

    @property
    def p(self) -> int:
        return self._bits.shape[0]

    @property
    def active(self) -> np.ndarray:
        """Indices j with δ_j = 1, in increasing order."""
        return np.flatnonzero(self._bits)

    def __len__(self) -> int:
        return self._bits.shape[0]

    def __getitem__(self, j: int) -> bool:
        return bool(self._bits[j])

    def set(self, j: int, value: bool) -> None:
        """Set δ_j, keeping the active count in sync."""
        value = bool(value)
        if bool(self._bits[j]) != value:
            self._bits[j] = value
            self._active_count += 1 if value else -1

    def flip(self, j: int) -> None:
        self.set(j, not self._bits[j])

    def copy(self) -> "BinaryModel":
        return BinaryModel(self._bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryModel):
            return NotImplemented
        return np.array_equal(self._bits, other._bits)

    def __hash__(self) -> int:
        return hash(self._bits.tobytes())

    def __repr__(self) -> str:
        return f"BinaryModel(p={self.p}, active={self.active.tolist()})"


@dataclass(frozen=True)
class PriorSpec:
    """Gaussian spike-and-slab prior with sparsity weights q/(1-q) = p^-(u+1).

    Attributes:
        rho0: Spike precision.
        rho1: Slab precision. Zero means a flat slab, usable only where the slab
            normalizer cancels (conditional draws of θ given δ).
        u: Sparsity exponent.
        p: Ambient dimension.
        cap: Optional maximal model size s̄ (capped prior). None means uncapped.
    """

    rho0: float
    rho1: float
    u: float
    p: int
    cap: int | None = None

    def __post_init__(self):
        if not (self.rho0 > 0 and math.isfinite(self.rho0)):
            raise ModelError(f"rho0 must be positive and finite, got {self.rho0}")
        if not (0 <= self.rho1 <= self.rho0):
            raise ModelError(
                f"rho1 must satisfy 0 <= rho1 <= rho0, got rho1={self.rho1}, rho0={self.rho0}"
            )
        if not self.u > 0:
            raise ModelError(f"u must be positive, got {self.u}")
        if int(self.p) != self.p or self.p < 1:
            raise ModelError(f"p must be an integer >= 1, got {self.p}")
        if self.cap is not None and not (1 <= self.cap <= self.p):
            raise ModelError(f"cap must satisfy 1 <= cap <= p, got cap={self.cap}, p={self.p}")

    @classmethod
    def default(
        cls, p: int, n: int, u: float = 2.0, cap: int | None = None
    ) -> "PriorSpec":
        """Prior used in the regression studies: rho1 = sqrt(log p / n), 1/rho0 = 1/(4n)."""
        return cls(rho0=4.0 * n, rho1=math.sqrt(math.log(p) / n), u=u, p=p, cap=cap)

    @property
    def q_ratio(self) -> float:
        """q/(1-q) = p^-(u+1)."""
        return float(self.p) ** -(self.u + 1.0)

    @property
    def log_q_ratio(self) -> float:
        return -(self.u + 1.0) * math.log(self.p)

    @property
    def q(self) -> float:
        r = self.q_ratio
        return r / (1.0 + r)

    @property
    def log_q(self) -> float:
        return self.log_q_ratio - math.log1p(self.q_ratio)

    @property
    def log_one_minus_q(self) -> float:
        return -math.log1p(self.q_ratio)

    def allows(self, active_count: int) -> bool:
        """True if a model of this size lies in the prior support."""
        return self.cap is None or active_count <= self.cap


class QuasiLikelihood(ABC):
    """Quasi-likelihood ℓ(θ; z), evaluated at sparsified vectors θ_δ.

    Implementations are immutable after construction and may be shared across
    threads.
    """

    @property
    @abstractmethod
    def dim(self) -> int:
        """Ambient dimension p."""

    @abstractmethod
    def loglik(self, theta_delta: np.ndarray) -> float:
        """ℓ(θ_δ; z) for a vector already zeroed off the active set."""

    @abstractmethod
    def gradient(self, theta_delta: np.ndarray, active: np.ndarray) -> np.ndarray:
        """∇ℓ(θ_δ; z) restricted to the coordinates in ``active``."""

    def coordinate_delta(self, delta: BinaryModel, theta: np.ndarray, j: int) -> float:
        """ℓ(θ̄^(j,1)) − ℓ(θ̄^(j,0)) by two evaluations."""
        theta_delta = np.where(delta.bits, theta, 0.0)
        theta_delta[j] = theta[j]
        with_j = self.loglik(theta_delta)
        theta_delta[j] = 0.0
        return with_j - self.loglik(theta_delta)


class GaussianRegressionQL(QuasiLikelihood):
    """Least-squares quasi-likelihood ℓ(θ) = −‖y − Xθ‖² / (2σ²).

    The Gram matrix X'X is precomputed when p <= ``gram_threshold``; otherwise
    inner products with design columns are computed on demand.
    """

    def __init__(
        self,
        X,
        y,
        sigma2: float = 1.0,
        gram_threshold: int = DEFAULT_GRAM_THRESHOLD,
        precompute_gram: bool | None = None,
    ):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2:
            raise ModelError(f"X must be a 2-d matrix, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ModelError(
                f"y must be a vector of length n={X.shape[0]}, got shape {y.shape}"
            )
        if not (sigma2 > 0 and math.isfinite(sigma2)):
            raise ModelError(f"sigma2 must be positive and finite, got {sigma2}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ModelError("X and y must be finite")

        self.X = np.ascontiguousarray(X)
        self.Xt = np.ascontiguousarray(X.T)
        self.y = y.copy()
        self.sigma2 = float(sigma2)
        self.n, self.p = X.shape
        self.xty = self.Xt @ self.y
        self.y_sq_norm = float(self.y @ self.y)

        if precompute_gram is None:
            precompute_gram = self.p <= gram_threshold
        if precompute_gram:
            gram = self.Xt @ self.X
            self.gram = 0.5 * (gram + gram.T)
            self.col_sq_norms = np.diag(self.gram).copy()
        else:
            self.gram = None
            self.col_sq_norms = np.einsum("ij,ij->j", self.X, self.X)

        for arr in (self.X, self.Xt, self.y, self.xty, self.col_sq_norms, self.gram):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.p

    @property
    def has_gram(self) -> bool:
        return self.gram is not None

    def loglik_active(self, active: np.ndarray, values: np.ndarray) -> float:
        """ℓ at the vector with ``values`` on ``active`` and zeros elsewhere, O(n·s)."""
        if active.size == 0:
            return -0.5 * self.y_sq_norm / self.sigma2
        resid = self.y - self.X[:, active] @ values
        return -0.5 * float(resid @ resid) / self.sigma2

    def loglik(self, theta_delta: np.ndarray) -> float:
        active = np.flatnonzero(theta_delta)
        return self.loglik_active(active, theta_delta[active])

    def gradient(self, theta_delta: np.ndarray, active: np.ndarray) -> np.ndarray:
        support = np.flatnonzero(theta_delta)
        fitted = self.cross_products(support, theta_delta[support])
        return (self.xty[active] - fitted[active]) / self.sigma2

    def gram_column(self, j: int) -> np.ndarray:
        """X'X_j, read as a row of the symmetric Gram."""
        if self.gram is not None:
            return self.gram[j]
        return self.Xt @ self.X[:, j]

    def gram_block(self, active: np.ndarray) -> np.ndarray:
        """X_A'X_A for the index set ``active``."""
        if self.gram is not None:
            return self.gram[np.ix_(active, active)]
        X_a = self.X[:, active]
        return X_a.T @ X_a

    def gram_slice(self, block: slice) -> np.ndarray:
        """X_B'X_B for a contiguous range of columns."""
        if self.gram is not None:
            return self.gram[block, block]
        return self.Xt[block] @ self.X[:, block]

    def cross_products(self, active: np.ndarray, values: np.ndarray) -> np.ndarray:
        """X'X_A v, the length-p vector of ⟨X_j, X_A v⟩."""
        if active.size == 0:
            return np.zeros(self.p)
        if self.gram is not None:
            return values @ self.gram[active]
        return self.Xt @ (self.X[:, active] @ values)

    def coordinate_delta(self, delta: BinaryModel, theta: np.ndarray, j: int) -> float:
        others = delta.active
        others = others[others != j]
        theta_j = float(theta[j])
        if others.size == 0:
            cross = 0.0
        elif self.gram is not None:
            cross = float(self.gram[j, others] @ theta[others])
        else:
            cross = float(self.X[:, j] @ (self.X[:, others] @ theta[others]))
        return (
            -0.5 * theta_j * theta_j * self.col_sq_norms[j]
            + theta_j * (self.xty[j] - cross)
        ) / self.sigma2

    def coordinate_deltas(
        self,
        bits: np.ndarray,
        theta: np.ndarray,
        fitted: np.ndarray,
        start: int = 0,
    ) -> np.ndarray:
        """Coordinate differences for every j >= ``start``.

        Args:
            bits: Inclusion bits of coordinates start..p-1.
            theta: Parameter values of coordinates start..p-1.
            fitted: X'X θ_δ of coordinates start..p-1, for the current (δ, θ).
            start: First coordinate covered by the slices.
        """
        norms = self.col_sq_norms[start:]
        cross = fitted - np.where(bits, theta * norms, 0.0)
        return (
            -0.5 * theta * theta * norms + theta * (self.xty[start:] - cross)
        ) / self.sigma2


@dataclass
class ModelState:
    """Pair (δ, θ) carried by the samplers. θ itself is never sparse."""

    delta: BinaryModel
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim != 1 or self.theta.shape[0] != self.delta.p:
            raise ModelError(
                f"theta must have length {self.delta.p}, got shape {self.theta.shape}"
            )

    @property
    def p(self) -> int:
        return self.delta.p

    @property
    def theta_delta(self) -> np.ndarray:
        """θ_δ, the componentwise product of δ and θ."""
        return np.where(self.delta.bits, self.theta, 0.0)

    def copy(self) -> "ModelState":
        return ModelState(self.delta.copy(), self.theta.copy())


def _check_dims(p: int, delta: BinaryModel, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if delta.p != p or theta.ndim != 1 or theta.shape[0] != p:
        raise ModelError(
            f"dimension mismatch: expected p={p}, got delta of length {delta.p} "
            f"and theta of shape {theta.shape}"
        )
    return theta


def log_prior(delta: BinaryModel, theta, prior: PriorSpec) -> float:
    """Log prior density ω(δ) × spike/slab Gaussian densities of θ.

    Returns NEG_INF when δ exceeds the prior cap.

    Raises:
        ModelError: On dimension mismatch, non-finite θ, or an active
            coordinate under a flat slab (rho1 = 0).
    """
    theta = _check_dims(prior.p, delta, theta)
    if not np.all(np.isfinite(theta)):
        raise ModelError("theta must be finite")

    s = delta.active_count
    if not prior.allows(s):
        return NEG_INF
    if s > 0 and prior.rho1 == 0:
        raise ModelError("log_prior is undefined for active coordinates when rho1 = 0")

    bits = delta.bits
    slab_sq = float(np.sum(theta[bits] ** 2))
    spike_sq = float(np.sum(theta[~bits] ** 2))
    p = prior.p

    value = s * prior.log_q + (p - s) * prior.log_one_minus_q
    value += 0.5 * (p - s) * (math.log(prior.rho0) - _LOG_2PI)
    value -= 0.5 * prior.rho0 * spike_sq
    if s > 0:
        value += 0.5 * s * (math.log(prior.rho1) - _LOG_2PI)
        value -= 0.5 * prior.rho1 * slab_sq
    return value


def sparsified_loglik(ql: QuasiLikelihood, delta: BinaryModel, theta) -> float:
    """ℓ(θ_δ; z); values of θ off the active set are ignored."""
    theta = _check_dims(ql.dim, delta, theta)
    if isinstance(ql, GaussianRegressionQL):
        active = delta.active
        return ql.loglik_active(active, theta[active])
    return ql.loglik(np.where(delta.bits, theta, 0.0))


def loglik_coordinate_delta(
    ql: QuasiLikelihood, delta: BinaryModel, theta, j: int
) -> float:
    """ℓ(θ̄^(j,1); z) − ℓ(θ̄^(j,0); z), the data term of the flip ratio A_j."""
    theta = _check_dims(ql.dim, delta, theta)
    if not (0 <= j < ql.dim):
        raise ModelError(f"coordinate index {j} out of range for p={ql.dim}")
    if not math.isfinite(theta[j]):
        raise ModelError(f"theta[{j}] must be finite")
    return ql.coordinate_delta(delta, theta, j)


def log_posterior(
    prior: PriorSpec, ql: QuasiLikelihood, delta: BinaryModel, theta
) -> float:
    """Unnormalized log quasi-posterior: log prior + sparsified log-likelihood."""
    lp = log_prior(delta, theta, prior)
    if lp == NEG_INF:
        return NEG_INF
    return lp + sparsified_loglik(ql, delta, theta)
