"""
Run Config Service
Load and validate run configuration from defaults, a flat key = value file,
FLIPSCOPE_* environment variables and command-line flags (in that order).
"""

import logging
import math
import os
from pathlib import Path
from typing import Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from services.errors import ConfigError
from services.flow import IntegratorConfig
from services.model import Params

logger = logging.getLogger(__name__)

ENV_PREFIX = "FLIPSCOPE_"
MAX_LOOPS = 16


class RunConfig(BaseModel):
    """Flat union of every command's settings; each command reads the keys it needs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # Model parameters; alpha and mu have no defaults on purpose
    alpha: Optional[float] = None
    mu: Optional[float] = None
    a: float = 0.7
    b: float = 1.0
    c: float = -2.0
    beta: float = 1.0
    gamma: float = 2.0
    mu_tilde: float = 0.0
    delta: float = 0.0

    # Integrator
    rel_tol: float = Field(1e-10, ge=1e-14, le=1e-3)
    abs_tol: float = Field(1e-12, ge=1e-14, le=1e-3)
    max_step: float = Field(math.inf, gt=0)
    t_max: float = Field(5000.0, gt=0)

    workers: int = Field(1, ge=1)
    out: Optional[Path] = None

    # Grids and slices
    alpha_min: Optional[float] = None
    alpha_max: Optional[float] = None
    mu_min: Optional[float] = None
    mu_max: Optional[float] = None
    n_alpha: int = Field(100, ge=1)
    n_mu: int = Field(100, ge=1)
    samples: int = Field(41, ge=2)
    tol: Optional[float] = Field(None, gt=0)

    # Orbits and return maps
    n: int = Field(300, ge=2)
    replicates: int = Field(1, ge=1)
    label: str = ""
    loops: int = Field(1, ge=1, le=MAX_LOOPS)
    orientability: str = "orientable"
    mu_target: Optional[float] = None

    # Manifolds
    owner: str = "origin"
    which: str = "stable-2d"
    cap: Optional[float] = Field(None, gt=0)
    n_seeds: Optional[int] = Field(None, ge=2)
    surface: str = "sphere"

    # Connections
    detectors: list[str] = ["split"]
    kind: str = "split"
    target: str = "gamma_t"
    multiplier: str = "-1"
    partner: str = "orbit"
    count_loops: bool = False

    @field_validator("detectors", mode="before")
    @classmethod
    def _split_detectors(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @model_validator(mode="after")
    def _check_ranges(self):
        for low, high in (("alpha_min", "alpha_max"), ("mu_min", "mu_max")):
            lo, hi = getattr(self, low), getattr(self, high)
            if lo is not None and hi is not None and lo > hi:
                raise ValueError(f"{low}={lo} exceeds {high}={hi}")
        return self

    def require(self, *keys: str) -> None:
        """Raise ConfigError unless every key has a value."""
        missing = [key for key in keys if getattr(self, key) is None]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")

    def params(self, alpha: Optional[float] = None, mu: Optional[float] = None) -> Params:
        alpha = self.alpha if alpha is None else alpha
        mu = self.mu if mu is None else mu
        if alpha is None or mu is None:
            raise ConfigError("alpha and mu must be given")
        return Params(alpha=alpha, mu=mu, **self.fixed_params())

    def fixed_params(self) -> dict[str, float]:
        """Model parameters other than alpha and mu."""
        return {
            "a": self.a, "b": self.b, "c": self.c, "beta": self.beta,
            "gamma": self.gamma, "mu_tilde": self.mu_tilde, "delta": self.delta,
        }

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(rel_tol=self.rel_tol, abs_tol=self.abs_tol, max_step=self.max_step,
                                t_max=self.t_max)


def read_config_file(path: Path) -> dict[str, str]:
    """Parse a flat key = value file; # starts a comment, blank lines are ignored."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")

    values = {}
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    logger.debug(f"Read {len(values)} setting(s) from {path}")
    return values


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> dict[str, str]:
    """FLIPSCOPE_<KEY> variables for every known key."""
    environ = os.environ if environ is None else environ
    found = {}
    for key in RunConfig.model_fields:
        name = f"{ENV_PREFIX}{key.upper()}"
        if name in environ:
            found[key] = environ[name]
    return found


def load_run_config(
    cli: Optional[Mapping[str, object]] = None,
    config_path: Optional[Path] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Merge configuration sources and validate.

    Args:
        cli: command-line values; None entries mean "not given"
        config_path: optional flat config file
        environ: environment mapping (os.environ when omitted)

    Returns:
        validated RunConfig

    Raises:
        ConfigError: unreadable file, unknown key or invalid value
    """
    merged: dict[str, object] = {}
    if config_path is not None:
        merged.update(read_config_file(config_path))
    merged.update(env_overrides(environ))
    merged.update({k: v for k, v in (cli or {}).items() if v is not None})

    try:
        config = RunConfig(**merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}", operation="load_run_config") from e
    logger.debug(f"Run config: {config.model_dump(exclude_defaults=True)}")
    return config
