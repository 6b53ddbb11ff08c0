from __future__ import annotations

from importlib import metadata
from pathlib import Path

import numpy as np
import scipy
from scipy import stats

from app.core.config import settings
from app.core.errors import DimensionError, EmptyInterior
from app.core.logging_config import get_logger
from app.core.types import (
    STATISTICS,
    Calibration,
    Centering,
    Decision,
    IngestSpec,
    KurtosisSpec,
    MlrtConfig,
    ObservationMatrix,
    Scenario,
    Sidedness,
    StatisticName,
    TestReport,
)
from app.services.ingest import read_observations
from app.services.matrix_core import beta_spectrum, scatter
from app.services.mc_harness import statistic_columns, sweep
from app.services.null_law import mean_variance, regime, spectral_params
from app.services.test_engine import decide, k_statistics, mlrt_statistics, truncated_sums


def versions() -> dict[str, str]:
    try:
        own = metadata.version("betacov")
    except metadata.PackageNotFoundError:
        own = "0+local"
    return {"betacov": own, "numpy": np.__version__, "scipy": scipy.__version__}


def estimate_kurtosis(obs: ObservationMatrix, centering: Centering) -> float:
    """Average marginal excess kurtosis of the residuals, floored at -2."""
    x = obs.values
    if centering == "sample-mean":
        per_column = stats.kurtosis(x, axis=0, fisher=True, bias=False)
    else:
        m2 = np.mean(x * x, axis=0)
        m4 = np.mean(x**4, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            per_column = m4 / (m2 * m2) - 3.0
    finite = np.asarray(per_column)[np.isfinite(per_column)]
    if finite.size == 0:
        return 0.0
    return max(float(np.mean(finite)), -2.0)


def _empirical_p_value(observed: float | None, null_values: np.ndarray, statistic: str, sidedness: Sidedness) -> float | None:
    if observed is None:
        return None
    v = null_values[np.isfinite(null_values)]
    r = v.size
    if r == 0:
        return None
    if statistic == "K":
        if sidedness == "two-sided":
            exceed = np.count_nonzero(np.abs(v) >= abs(observed))
        else:
            exceed = np.count_nonzero(v >= observed)
        return (1.0 + exceed) / (r + 1.0)
    lower = (1.0 + np.count_nonzero(v <= observed)) / (r + 1.0)
    upper = (1.0 + np.count_nonzero(v >= observed)) / (r + 1.0)
    return min(1.0, 2.0 * min(lower, upper))


class TwoSampleTestService:
    """Runs the beta-matrix test on two raw samples and assembles a TestReport."""

    def __init__(self):
        self.logger = get_logger("betacov.pipeline")

    def run(
        self,
        x1: np.ndarray,
        x2: np.ndarray,
        *,
        centering: Centering = "sample-mean",
        kurtosis: KurtosisSpec | None = None,
        level: float | None = None,
        sidedness: Sidedness | None = None,
        calibration: Calibration = "asymptotic",
        mlrt: MlrtConfig | None = None,
        statistics: tuple[StatisticName, ...] = STATISTICS,
        reps: int | None = None,
        seed: int | None = None,
        workers: int | None = None,
    ) -> TestReport:
        level = settings.level if level is None else level
        sidedness = sidedness or settings.sidedness
        obs1, obs2 = ObservationMatrix(x1), ObservationMatrix(x2)
        if obs1.cols != obs2.cols:
            raise DimensionError(f"samples have different dimensions: {obs1.cols} vs {obs2.cols}")

        a1 = scatter(obs1, centering)
        a2 = scatter(obs2, centering)
        n1, n2, p = a1.effective_n, a2.effective_n, obs1.cols
        self.logger.info(f"test_start n1={n1} n2={n2} p={p} centering={centering} calibration={calibration}")

        sp = spectral_params(n1, n2, p)
        warnings = list(sp.warnings)
        if kurtosis is None:
            kurtosis = KurtosisSpec(estimate_kurtosis(obs1, centering), estimate_kurtosis(obs2, centering))
            note = f"estimated_kurtosis delta1={kurtosis.delta1:.4f} delta2={kurtosis.delta2:.4f}"
            warnings.append(note)
            self.logger.warning(note)
        law = mean_variance(sp, kurtosis)

        spectrum = beta_spectrum(a1, a2)
        warnings.extend(spectrum.warnings)
        k, k_prime = k_statistics(truncated_sums(spectrum), law, p)
        p_value_k, decision = decide(k, level, sidedness)

        # K is always reported; the selection only drops the mLRT statistics
        mlrt = mlrt or MlrtConfig.likelihood_weights(n1, n2)
        l_stat = l_tilde = None
        if "L" in statistics or "L_tilde" in statistics:
            try:
                l_stat, l_tilde = mlrt_statistics(spectrum, mlrt)
            except EmptyInterior as exc:
                warnings.append(f"mlrt_unavailable {exc}")
            if "L" not in statistics:
                l_stat = None
            if "L_tilde" not in statistics:
                l_tilde = None

        empirical_p: dict[str, float | None] | None = None
        empirical_d: dict[str, Decision | None] | None = None
        used_seed: int | None = None
        if calibration == "empirical-quantile":
            used_seed = settings.seed if seed is None else seed
            reps = reps or settings.reps
            # Identity covariance suffices by affine invariance; the null law still
            # depends on the entries' fourth moment, so they carry the kurtosis in use
            null_sc = Scenario(case_id=1, n1=n1, n2=n2, p=p)
            null_stats = sweep(null_sc, reps, used_seed, "null", law=law, mlrt=mlrt, entries=kurtosis, workers=workers)
            columns = statistic_columns(null_stats)
            observed = {"K": k, "L": l_stat, "L_tilde": l_tilde}
            observed = {name: value for name, value in observed.items() if name == "K" or name in statistics}
            empirical_p = {
                name: _empirical_p_value(observed[name], columns[name], name, sidedness) for name in observed
            }
            empirical_d = {
                name: (None if pv is None else ("reject" if pv < level else "accept"))
                for name, pv in empirical_p.items()
            }

        report = TestReport(
            n1=n1,
            n2=n2,
            p=p,
            centering=centering,
            level=level,
            sidedness=sidedness,
            calibration=calibration,
            k=k,
            k_prime=k_prime,
            p_value_k=p_value_k,
            decision=decision,
            l=l_stat,
            l_tilde=l_tilde,
            empirical_p_values=empirical_p,
            empirical_decisions=empirical_d,
            regime=regime(sp),
            spectral_params=sp,
            null_law=law,
            kurtosis=kurtosis,
            mlrt_weights=mlrt,
            spectrum=spectrum.summary(),
            warnings=warnings,
            versions=versions(),
            seed=used_seed,
        )
        self.logger.info(
            f"test_done n1={n1} n2={n2} p={p} K={k:.6f} p_value={p_value_k:.6g} decision={decision}"
        )
        return report

    def run_files(
        self,
        path1: str | Path,
        path2: str | Path,
        ingest: IngestSpec | None = None,
        **kwargs,
    ) -> TestReport:
        ingest = ingest or IngestSpec()
        x1 = read_observations(path1, ingest)
        x2 = read_observations(path2, ingest)
        return self.run(x1, x2, centering=ingest.centering, **kwargs)
