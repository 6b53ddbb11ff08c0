from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # App settings
    app_name: str = "BetaCov Covariance Test"
    app_env: str = "production"  # development, production
    debug: bool = False

    # Linear algebra
    eigen_solver: Literal["lapack", "householder-ql"] = "lapack"
    max_sweeps_per_dim: int = 30
    clamp_tolerance: float = 1e-8

    # Test defaults
    level: float = 0.05
    sidedness: Literal["two-sided", "upper"] = "two-sided"
    near_unit_band: float = 0.02

    # Monte Carlo harness
    threads: int = 1
    seed: int = 42
    reps: int = 1000
    max_failure_fraction: float = 0.01

    # Contour-integral oracle
    contour_r: float = 1.0 + 2.0**-6
    contour_r2: float = 1.0 + 2.0**-5
    contour_nodes: int = 4096
    contour_extrapolation: int = 3
    oracle_tol_ell: float = 1e-8
    oracle_tol_mu: float = 1e-5
    oracle_tol_sigma2: float = 1e-5

    # HTTP surface (comma-separated or JSON array)
    allowed_origins: str = "*"
    max_upload_size_mb: int = 20

    # Storage settings
    storage_path: str = "storage"

    # Everything is overridable with BETACOV_* variables or a project-level .env
    model_config = SettingsConfigDict(env_prefix="BETACOV_", env_file=".env", extra="ignore")


settings = Settings()
