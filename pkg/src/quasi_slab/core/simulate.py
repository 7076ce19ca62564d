"""Synthetic data for the regression, graphical-model and sparse PCA studies."""

import logging
import math
from typing import NamedTuple

import numpy as np
import scipy.signal

from .config import ConfigError, ExperimentConfig

logger = logging.getLogger(__name__)

SPIKE_PATTERN = (0.5, 0.5, 0.0, 0.5, 0.5)


class RegressionData(NamedTuple):
    X: np.ndarray
    y: np.ndarray
    theta_star: np.ndarray


class SpikedData(NamedTuple):
    X: np.ndarray
    theta_star: np.ndarray


def ar_design(n: int, p: int, psi: float, rng: np.random.Generator) -> np.ndarray:
    """n rows with corr(x_i, x_j) = ψ^|i−j|, via x_j = ψx_{j−1} + √(1−ψ²)ε_j."""
    if not (0.0 <= psi < 1.0):
        raise ConfigError(f"psi must lie in [0, 1), got {psi}")
    eps = rng.standard_normal((n, p))
    if psi == 0.0:
        return eps
    scale = math.sqrt(1.0 - psi * psi)
    eps[:, 0] /= scale  # x_0 = ε_0
    return scipy.signal.lfilter([scale], [1.0, -psi], eps, axis=1)


def ar_covariance(p: int, psi: float) -> np.ndarray:
    """Population covariance ψ^|i−j| of ``ar_design`` rows."""
    lags = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return np.power(psi, lags)


def signal_amplitude(s_star: int, p: int, n: int) -> float:
    """a = 4√(s⋆ log p / n)."""
    return 4.0 * math.sqrt(s_star * math.log(p) / n)


def sparse_coefficients(p: int, s_star: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """θ⋆ with ±U(a, a+1) entries at positions 0..s⋆−1 and zeros elsewhere."""
    if s_star > p:
        raise ConfigError(f"s_star={s_star} exceeds p={p}")
    theta = np.zeros(p)
    if s_star == 0:
        return theta
    a = signal_amplitude(s_star, p, n)
    magnitudes = rng.uniform(a, a + 1.0, size=s_star)
    signs = rng.choice([-1.0, 1.0], size=s_star)
    theta[:s_star] = signs * magnitudes
    return theta


def simulate_regression(cfg: ExperimentConfig, rng: np.random.Generator) -> RegressionData:
    """X with AR(ψ) rows, sparse θ⋆, y = Xθ⋆ + ε with unit noise precision."""
    if cfg.mode not in ("regression", "ggm", "benchmark"):
        raise ConfigError(f"simulate_regression does not apply to mode {cfg.mode!r}")
    X = ar_design(cfg.n, cfg.p, cfg.psi, rng)
    theta_star = sparse_coefficients(cfg.p, cfg.s_star, cfg.n, rng)
    y = X @ theta_star + rng.standard_normal(cfg.n)
    logger.info(
        f"Simulated regression data: n={cfg.n}, p={cfg.p}, psi={cfg.psi}, s_star={cfg.s_star}"
    )
    return RegressionData(X, y, theta_star)


def simulate_ggm(cfg: ExperimentConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Z = [y, X] from the regression design; node 0's true neighbourhood is supp(θ⋆).

    Returns:
        (Z, theta_star) with Z of shape (n, p+1).
    """
    X, y, theta_star = simulate_regression(cfg, rng)
    return np.column_stack([y, X]), theta_star


def default_spike_direction(p: int) -> np.ndarray:
    """θ⋆ = (0.5, 0.5, 0, 0.5, 0.5, 0, ..., 0), unit norm."""
    if p < len(SPIKE_PATTERN):
        raise ConfigError(f"the default spike direction needs p >= {len(SPIKE_PATTERN)}, got {p}")
    theta = np.zeros(p)
    theta[: len(SPIKE_PATTERN)] = SPIKE_PATTERN
    return theta


def simulate_spiked(
    cfg: ExperimentConfig, rng: np.random.Generator, theta_star=None
) -> SpikedData:
    """Rows z + √ϑ·g·θ⋆ ~ N(0, ϑθ⋆θ⋆' + I) with z ~ N(0, I_p), g ~ N(0, 1)."""
    if theta_star is None:
        theta_star = default_spike_direction(cfg.p)
    else:
        theta_star = np.asarray(theta_star, dtype=float)
        norm = np.linalg.norm(theta_star)
        if theta_star.shape != (cfg.p,) or norm == 0:
            raise ConfigError(f"theta_star must be a non-zero vector of length {cfg.p}")
        theta_star = theta_star / norm

    Z = rng.standard_normal((cfg.n, cfg.p))
    g = rng.standard_normal(cfg.n)
    X = Z + math.sqrt(cfg.vartheta) * np.outer(g, theta_star)
    logger.info(f"Simulated spiked data: n={cfg.n}, p={cfg.p}, vartheta={cfg.vartheta}")
    return SpikedData(X, theta_star)
