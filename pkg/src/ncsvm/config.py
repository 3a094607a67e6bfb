"""Configuration management for ncsvm."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

RHO_GRID = [0.01, 0.1, 1.0, 1.5, 5.0, 10.0]


class NCSVMConfig(BaseSettings):
    """Solver and harness defaults loaded from environment variables.

    All settings can be overridden via environment variables prefixed with NCSVM_.
    Example: NCSVM_RHO1, NCSVM_MAX_ITERS, NCSVM_LOG_LEVEL, etc.
    Command-line flags take precedence over anything set here.
    """

    model_config = SettingsConfigDict(
        env_prefix="NCSVM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Penalty and ADMM parameters
    lam: float = Field(default=2.0**-6, gt=0)
    rho1: float = Field(default=1.0, gt=0)
    rho2: float = Field(default=1.0, gt=0)
    beta: float = Field(default=0.0, ge=0)
    epsilon: float = Field(default=1e-4, gt=0)
    max_iters: int = Field(default=1000, ge=1)
    seed: int = 0

    # Data split and benchmark harness
    split_fraction: float = Field(default=0.1, gt=0, lt=1)
    grid_values: list[float] = Field(default_factory=lambda: list(RHO_GRID))
    bench_workers: int = Field(default=1, ge=1)

    # Factorization limits
    max_dense_dim: int = Field(default=20_000, ge=1)
    dense_gram_density: float = Field(default=0.25, ge=0, le=1)
    jitter_scale: float = Field(default=1e-10, ge=0)

    # Model and output
    zero_tolerance: float = Field(default=1e-6, ge=0)
    out_dir: Path = Path("runs")
    log_level: str = "WARNING"
