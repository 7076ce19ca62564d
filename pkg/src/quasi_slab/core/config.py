"""Experiment configuration: JSON loading, CLI overrides, validation and defaults."""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .ggm import EDGE_RULES, METHODS, FitSettings
from .model import PriorSpec
from .sampler import SamplerConfig

logger = logging.getLogger(__name__)

MODES: tuple[str, ...] = ("regression", "ggm", "spca", "benchmark")
DEFAULT_P_GRID: tuple[int, ...] = (500, 1000, 2000, 4000)


class ConfigError(Exception):
    """Raised when an experiment configuration is malformed or out of range."""

    pass


@dataclass
class ExperimentConfig:
    """All knobs of an experiment.

    ``rho1``, ``rho0_inv`` and ``burn_in`` may be left unset; they resolve to
    √(log p / n), 1/(4n) and n_iter // 2.
    """

    mode: str = "regression"
    p: int = 1000
    n: int = 500
    psi: float = 0.0
    vartheta: float = 20.0
    s_star: int = 10
    u: float = 2.0
    rho1: float | None = None
    rho0_inv: float | None = None
    sigma2: float = 1.0
    n_iter: int = 5000
    burn_in: int | None = None
    thin: int = 1
    seed: int = 0
    replications: int = 1
    method: str = "mcmc"
    template_size: int = 100
    cap: int | None = None
    p_grid: list[int] = field(default_factory=lambda: list(DEFAULT_P_GRID))
    workers: int = 1
    lazy_half: bool = True
    edge_rule: str = "max"
    threshold: float = 0.5
    lasso_lambda: float | None = None
    cavi_max_iter: int = 50
    cavi_tol: float = 1e-8

    def __post_init__(self):
        self.p_grid = [int(v) for v in self.p_grid]
        self.validate()

    def validate(self) -> None:
        """Check every declared range.

        Raises:
            ConfigError: Naming the first offending field.
        """
        checks: list[tuple[bool, str]] = [
            (self.mode in MODES, f"mode must be one of {', '.join(MODES)}, got {self.mode!r}"),
            (self.p >= 1, f"p must be >= 1, got {self.p}"),
            (self.n >= 2, f"n must be >= 2, got {self.n}"),
            (0.0 <= self.psi < 1.0, f"psi must lie in [0, 1), got {self.psi}"),
            (self.vartheta >= 0.0, f"vartheta must be >= 0, got {self.vartheta}"),
            (0 <= self.s_star <= self.p, f"s_star must lie in [0, p={self.p}], got {self.s_star}"),
            (self.u > 0.0, f"u must be positive, got {self.u}"),
            (self.rho1 is None or self.rho1 >= 0.0, f"rho1 must be >= 0, got {self.rho1}"),
            (
                self.rho0_inv is None or self.rho0_inv > 0.0,
                f"rho0_inv must be positive, got {self.rho0_inv}",
            ),
            (self.sigma2 > 0.0, f"sigma2 must be positive, got {self.sigma2}"),
            (self.n_iter >= 1, f"n_iter must be >= 1, got {self.n_iter}"),
            (
                self.burn_in is None or 0 <= self.burn_in < self.n_iter,
                f"burn_in must lie in [0, n_iter={self.n_iter}), got {self.burn_in}",
            ),
            (self.thin >= 1, f"thin must be >= 1, got {self.thin}"),
            (0 <= self.seed < 2**64, f"seed must be a 64-bit unsigned integer, got {self.seed}"),
            (self.replications >= 1, f"replications must be >= 1, got {self.replications}"),
            (self.method in METHODS, f"method must be one of {', '.join(METHODS)}, got {self.method!r}"),
            (self.template_size >= 1, f"template_size must be >= 1, got {self.template_size}"),
            (
                self.cap is None or 1 <= self.cap <= self.p,
                f"cap must lie in [1, p={self.p}], got {self.cap}",
            ),
            (
                len(self.p_grid) > 0 and all(v >= 2 for v in self.p_grid),
                f"p_grid must be a non-empty list of integers >= 2, got {self.p_grid}",
            ),
            (self.workers >= 1, f"workers must be >= 1, got {self.workers}"),
            (
                self.edge_rule in EDGE_RULES,
                f"edge_rule must be one of {', '.join(EDGE_RULES)}, got {self.edge_rule!r}",
            ),
            (0.0 <= self.threshold <= 1.0, f"threshold must lie in [0, 1], got {self.threshold}"),
            (
                self.lasso_lambda is None or self.lasso_lambda > 0.0,
                f"lasso_lambda must be positive, got {self.lasso_lambda}",
            ),
            (self.cavi_max_iter >= 1, f"cavi_max_iter must be >= 1, got {self.cavi_max_iter}"),
            (self.cavi_tol > 0.0, f"cavi_tol must be positive, got {self.cavi_tol}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        if self.mode == "spca" and self.p < 5:
            raise ConfigError(f"spca mode needs p >= 5 for the default spike direction, got {self.p}")
        if self.rho1 is not None and self.rho1 > 1.0 / self.resolved_rho0_inv:
            raise ConfigError(
                f"rho1={self.rho1} exceeds the spike precision 1/rho0_inv={1.0 / self.resolved_rho0_inv}"
            )

    @property
    def resolved_rho1(self) -> float:
        if self.rho1 is not None:
            return self.rho1
        return math.sqrt(math.log(max(self.p, 2)) / self.n)

    @property
    def resolved_rho0_inv(self) -> float:
        return self.rho0_inv if self.rho0_inv is not None else 1.0 / (4.0 * self.n)

    @property
    def resolved_burn_in(self) -> int:
        return self.burn_in if self.burn_in is not None else self.n_iter // 2

    def resolved(self) -> "ExperimentConfig":
        """Copy with every derived default written out."""
        return replace(
            self,
            rho1=self.resolved_rho1,
            rho0_inv=self.resolved_rho0_inv,
            burn_in=self.resolved_burn_in,
        )

    def prior(self, p: int | None = None, cap: int | None = None) -> PriorSpec:
        """Spike-and-slab prior for a regression with ``p`` coefficients (default ``self.p``)."""
        p = self.p if p is None else p
        cap = self.cap if cap is None else cap
        if cap is not None:
            cap = min(cap, p)
        return PriorSpec(
            rho0=1.0 / self.resolved_rho0_inv,
            rho1=self.resolved_rho1,
            u=self.u,
            p=p,
            cap=cap,
        )

    def sampler_config(self, n_iter: int | None = None, burn_in: int | None = None) -> SamplerConfig:
        n_iter = self.n_iter if n_iter is None else n_iter
        if burn_in is None:
            burn_in = self.resolved_burn_in if n_iter == self.n_iter else n_iter // 2
        return SamplerConfig(
            n_iter=n_iter,
            seed=self.seed,
            burn_in=burn_in,
            thin=self.thin,
            lazy_half=self.lazy_half,
            cap=self.cap,
        )

    def fit_settings(self, keep_trace: bool = False) -> FitSettings:
        return FitSettings(
            sampler=self.sampler_config(),
            sigma2=self.sigma2,
            u=self.u,
            rho1=self.resolved_rho1,
            rho0=1.0 / self.resolved_rho0_inv,
            cap=self.cap,
            cavi_max_iter=self.cavi_max_iter,
            cavi_tol=self.cavi_tol,
            template_size=self.template_size,
            lasso_lambda=self.lasso_lambda,
            keep_trace=keep_trace,
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        """Build a config from a mapping, rejecting unknown keys.

        Raises:
            ConfigError: On unknown keys, wrong types or out-of-range values.
        """
        if not isinstance(data, dict):
            raise ConfigError(f"configuration must be a JSON object, got {type(data).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid configuration value: {e}") from e

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with the non-None overrides applied and re-validated."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        data = self.to_dict()
        data.update(changes)
        return ExperimentConfig.from_dict(data)

    def config_hash(self) -> str:
        """First 8 hex characters of the SHA-256 of the resolved config's canonical JSON."""
        canonical = json.dumps(self.resolved().to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:8]


def load_config(path: Path | None = None, **overrides) -> ExperimentConfig:
    """Load a config from JSON (or defaults when ``path`` is None) and apply overrides.

    Raises:
        ConfigError: If the file is unreadable, not JSON, or invalid.
    """
    if path is None:
        base = ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
        return base

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e

    if isinstance(data, dict):
        data.update({k: v for k, v in overrides.items() if v is not None})
    logger.info(f"Loaded configuration from {path}")
    return ExperimentConfig.from_dict(data)
