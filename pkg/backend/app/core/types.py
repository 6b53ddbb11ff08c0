"""
Domain records shared by the services.

Array-carrying numerical values are frozen dataclasses; configuration and report
records that cross the CLI/HTTP boundary are pydantic models so they validate on
construction and serialize to JSON directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Literal, TypedDict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import ConfigurationError, DimensionError, NonFiniteInput

Centering = Literal["known-zero-mean", "sample-mean"]
Sidedness = Literal["two-sided", "upper"]
Calibration = Literal["asymptotic", "empirical-quantile"]
StatisticName = Literal["K", "L", "L_tilde"]
Decision = Literal["reject", "accept"]
Distribution = Literal["normal", "uniform"]
Sigma2Structure = Literal["identity", "spike-diag", "equicorrelated"]
Regime = Literal["i", "ii", "iii", "iv"]

STATISTICS: tuple[StatisticName, ...] = ("K", "L", "L_tilde")

# Simulation case -> (entry distribution, structure of Sigma2)
CASES: dict[int, tuple[Distribution, Sigma2Structure]] = {
    1: ("normal", "identity"),
    2: ("uniform", "identity"),
    3: ("uniform", "spike-diag"),
    4: ("uniform", "equicorrelated"),
}

# Excess kurtosis of the standardized entry distributions
EXCESS_KURTOSIS: dict[Distribution, float] = {"normal": 0.0, "uniform": -1.2}


# ---------------------------------------------------------------------------
# matrix-core values
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """n x p block of real observations, one row per observation."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError(f"observations must be a 2-D array, got ndim={v.ndim}")
        n, p = v.shape
        if n < 2 or p < 2:
            raise DimensionError(f"need at least 2 observations and 2 variables, got n={n} p={p}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteInput("observations contain NaN or infinite entries")
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ScatterMatrix:
    values: np.ndarray
    n_obs: int
    centering: Centering

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def effective_n(self) -> int:
        # Sample-mean centering spends one degree of freedom
        return self.n_obs - 1 if self.centering == "sample-mean" else self.n_obs

    @property
    def effective_rank_bound(self) -> int:
        return min(self.dim, self.effective_n)


@dataclass(frozen=True, eq=False)
class LowerTriangular:
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class BetaSpectrum:
    eigenvalues: np.ndarray
    count_zero: int
    count_one: int
    clamp_tolerance: float
    warnings: tuple[str, ...] = ()

    @classmethod
    def from_eigenvalues(
        cls, values: np.ndarray, clamp_tolerance: float, warnings: tuple[str, ...] = ()
    ) -> "BetaSpectrum":
        """Clamp to [0, 1], sort, and snap eigenvalues within tolerance of an atom onto it."""
        lam = np.clip(np.sort(np.asarray(values, dtype=float)), 0.0, 1.0)
        zero = lam <= clamp_tolerance
        one = lam >= 1.0 - clamp_tolerance
        lam[zero] = 0.0
        lam[one] = 1.0
        return cls(
            eigenvalues=lam,
            count_zero=int(zero.sum()),
            count_one=int(one.sum()),
            clamp_tolerance=clamp_tolerance,
            warnings=warnings,
        )

    @property
    def p(self) -> int:
        return self.eigenvalues.shape[0]

    def interior_mask(self) -> np.ndarray:
        lam = self.eigenvalues
        return (lam > self.clamp_tolerance) & (lam < 1.0 - self.clamp_tolerance)

    def summary(self) -> "SpectrumSummary":
        inner = self.eigenvalues[self.interior_mask()]
        return SpectrumSummary(
            p=self.p,
            count_zero=self.count_zero,
            count_one=self.count_one,
            count_interior=int(inner.size),
            min_interior=float(inner.min()) if inner.size else None,
            max_interior=float(inner.max()) if inner.size else None,
            clamp_tolerance=self.clamp_tolerance,
        )


# ---------------------------------------------------------------------------
# null-law values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralParams:
    n1: int
    n2: int
    p: int
    y1: float
    y2: float
    alpha_n: float
    h: float
    x_l: float
    x_r: float
    warnings: tuple[str, ...] = field(default=())

    @property
    def h2(self) -> float:
        return self.h * self.h


@dataclass(frozen=True)
class KurtosisSpec:
    delta1: float = 0.0
    delta2: float = 0.0

    def __post_init__(self) -> None:
        for name, value in (("delta1", self.delta1), ("delta2", self.delta2)):
            if not np.isfinite(value) or value < -2.0:
                raise ConfigurationError(f"{name}={value} is not a valid excess kurtosis (must be >= -2)")


@dataclass(frozen=True)
class NullLaw:
    ell1: float
    ell2: float
    mu: float
    sigma2: float

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))


# ---------------------------------------------------------------------------
# test-engine values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedSums:
    p1: float
    p2: float


@dataclass(frozen=True)
class MlrtConfig:
    c1: float
    c2: float

    @classmethod
    def likelihood_weights(cls, n1: int, n2: int) -> "MlrtConfig":
        total = n1 + n2
        return cls(c1=n1 / total, c2=n2 / total)


class SpectrumSummary(BaseModel):
    p: int
    count_zero: int
    count_one: int
    count_interior: int
    min_interior: float | None = None
    max_interior: float | None = None
    clamp_tolerance: float


class TestReport(BaseModel):
    __test__: ClassVar[bool] = False

    n1: int
    n2: int
    p: int
    centering: Centering
    level: float
    sidedness: Sidedness
    calibration: Calibration
    k: float
    k_prime: float
    p_value_k: float
    decision: Decision
    l: float | None = None
    l_tilde: float | None = None
    empirical_p_values: dict[str, float | None] | None = None
    empirical_decisions: dict[str, Decision | None] | None = None
    regime: Regime
    spectral_params: SpectralParams
    null_law: NullLaw
    kurtosis: KurtosisSpec
    mlrt_weights: MlrtConfig
    spectrum: SpectrumSummary
    warnings: list[str] = Field(default_factory=list)
    versions: dict[str, str] = Field(default_factory=dict)
    seed: int | None = None


# ---------------------------------------------------------------------------
# mc-harness records
# ---------------------------------------------------------------------------


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    case_id: int = Field(ge=1, le=4)
    n1: int = Field(ge=2)
    n2: int = Field(ge=2)
    p: int = Field(ge=2)
    a: float = Field(default=0.0, ge=0.0)
    distribution: Distribution
    sigma2_structure: Sigma2Structure

    @model_validator(mode="before")
    @classmethod
    def _case_defaults(cls, data):
        if isinstance(data, dict) and "case_id" in data:
            dist, structure = CASES.get(data["case_id"], (None, None))
            data = {"distribution": dist, "sigma2_structure": structure, **data}
        return data

    @model_validator(mode="after")
    def _check(self) -> "Scenario":
        if (self.distribution, self.sigma2_structure) != CASES[self.case_id]:
            raise ValueError(f"case {self.case_id} is defined as {CASES[self.case_id]}")
        if self.p >= self.n1 + self.n2:
            raise ValueError(f"p={self.p} must be < n1 + n2 = {self.n1 + self.n2}")
        return self

    @property
    def delta(self) -> float:
        return EXCESS_KURTOSIS[self.distribution]


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: Scenario
    reps: int = Field(ge=1)
    seed: int = Field(ge=0)
    level: float = Field(default=0.05, gt=0.0, lt=1.0)
    statistics: tuple[StatisticName, ...] = STATISTICS
    calibration: Calibration = "empirical-quantile"
    sidedness: Sidedness = "two-sided"


class CellResult(BaseModel):
    scenario: Scenario
    regime: Regime
    reps: int
    seed: int
    level: float
    rejection_rate: dict[str, float | None] = Field(default_factory=dict)
    size_corrected_rate: dict[str, float | None] = Field(default_factory=dict)
    mc_se: dict[str, float | None] = Field(default_factory=dict)
    critical_values: dict[str, list[float]] = Field(default_factory=dict)
    failures: int = 0
    elapsed_s: float = 0.0
    error: str | None = None


class PowerRow(TypedDict):
    case: int
    regime: str
    n1: int
    n2: int
    p: int
    a: float
    statistic: str
    rate: float | None
    size_corrected_rate: float | None
    mc_se: float | None
    reps: int
    seed: int


class PowerTable(BaseModel):
    case_id: int
    reps: int
    seed: int
    level: float
    cells: list[CellResult] = Field(default_factory=list)

    def to_rows(self, statistics: tuple[str, ...] = STATISTICS) -> list[PowerRow]:
        rows: list[PowerRow] = []
        for cell in self.cells:
            sc = cell.scenario
            for stat in statistics:
                if stat not in cell.size_corrected_rate and stat not in cell.rejection_rate:
                    continue
                rows.append(
                    PowerRow(
                        case=sc.case_id,
                        regime=cell.regime,
                        n1=sc.n1,
                        n2=sc.n2,
                        p=sc.p,
                        a=sc.a,
                        statistic=stat,
                        rate=cell.rejection_rate.get(stat),
                        size_corrected_rate=cell.size_corrected_rate.get(stat),
                        mc_se=cell.mc_se.get(stat),
                        reps=cell.reps,
                        seed=cell.seed,
                    )
                )
        return rows


class MomentReport(BaseModel):
    n1: int
    n2: int
    p: int
    distribution: Distribution
    reps: int
    seed: int
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    expected_mean: float
    expected_variance: float


# ---------------------------------------------------------------------------
# oracle records
# ---------------------------------------------------------------------------


class ContourConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    r: float = Field(gt=1.0, le=1.5)
    r2: float = Field(gt=1.0, le=1.5)
    nodes: int = Field(ge=512)
    extrapolation: int = Field(default=3, ge=1, le=6)

    @model_validator(mode="after")
    def _check(self) -> "ContourConfig":
        if not self.r < self.r2:
            raise ValueError(f"need r < r2, got r={self.r} r2={self.r2}")
        if self.nodes & (self.nodes - 1):
            raise ValueError(f"nodes must be a power of two, got {self.nodes}")
        return self


class OracleReport(BaseModel):
    target: Literal["mass", "ell1", "ell2", "mu", "sigma2"]
    n1: int
    n2: int
    p: int
    delta1: float
    delta2: float
    regime: Regime
    closed_form: float
    numeric: float
    abs_error: float
    tolerance: float
    passed: bool

    @classmethod
    def compare(cls, *, closed_form: float, numeric: float, tolerance: float, **kw) -> "OracleReport":
        err = abs(closed_form - numeric)
        return cls(
            closed_form=closed_form,
            numeric=numeric,
            abs_error=err,
            tolerance=tolerance,
            passed=bool(err <= tolerance),
            **kw,
        )


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


class IngestSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    delimiter: str = ","
    header: bool = True
    transpose: bool = False
    centering: Centering = "sample-mean"
