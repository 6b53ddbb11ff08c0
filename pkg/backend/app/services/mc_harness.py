"""
Monte-Carlo harness: simulated datasets, rejection rates and power tables.

A replicate is fully determined by its stream key, so a cell computed with one
worker or many produces identical numbers. The null calibration sweep of a size
triple is the a = 0 cell's own sweep and is reused by the other a-cells.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from app.core.config import settings
from app.core.errors import BetaCovError, ConfigurationError, EmptyInterior, SimulationError
from app.core.logging_config import get_logger
from app.core.types import (
    STATISTICS,
    CellResult,
    KurtosisSpec,
    MlrtConfig,
    MomentReport,
    NullLaw,
    ObservationMatrix,
    PowerTable,
    Regime,
    Scenario,
    SimConfig,
    Sidedness,
    Sigma2Structure,
    SpectralParams,
)
from app.services.matrix_core import beta_spectrum, scatter
from app.services.null_law import mean_variance, regime, spectral_params
from app.services.streams import Purpose, RandomStream
from app.services.test_engine import decide, k_statistics, mlrt_statistics, truncated_sums

logger = get_logger("betacov.mc")

DEFAULT_A_GRID: tuple[float, ...] = (0.0, 3.0, 7.0, 10.0)

# Size triples (n1, n2, p) per regime, smallest first
SIZE_GRID: dict[Regime, tuple[tuple[int, int, int], ...]] = {
    "i": ((45, 40, 50), (90, 80, 100), (180, 160, 200), (360, 320, 400)),
    "ii": ((36, 50, 45), (72, 100, 90), (144, 200, 180), (288, 400, 360)),
    "iii": ((50, 36, 45), (100, 72, 90), (200, 144, 180), (400, 288, 360)),
    "iv": ((50, 50, 45), (100, 100, 90), (200, 200, 180), (400, 400, 360)),
}

GridName = Literal["smallest", "desk", "full"]
_GRID_DEPTH: dict[GridName, int] = {"smallest": 1, "desk": 2, "full": 4}

# Columns of a sweep: K, L, L~, P1
_K, _L, _LT, _P1 = range(4)
_COLUMN = {"K": _K, "L": _L, "L_tilde": _LT}


def size_grid(name: GridName = "smallest") -> list[tuple[int, int, int]]:
    depth = _GRID_DEPTH[name]
    return [triple for triples in SIZE_GRID.values() for triple in triples[:depth]]


def sigma_sqrt(structure: Sigma2Structure, p: int) -> np.ndarray:
    """Symmetric square root of Sigma2 for the simulation cases."""
    if structure == "identity":
        return np.eye(p)
    if structure == "spike-diag":
        diag = np.ones(p)
        diag[0] = float(p)
        return np.diag(diag)
    if structure == "equicorrelated":
        # Sigma2 = 0.5 I + 0.5 J has eigenvalues 0.5 + 0.5p (on 1) and 0.5
        a = math.sqrt(0.5)
        b = (math.sqrt(0.5 + 0.5 * p) - a) / p
        return a * np.eye(p) + b * np.ones((p, p))
    raise ValueError(f"unknown Sigma2 structure {structure!r}")


def draw_dataset(sc: Scenario, stream: RandomStream) -> tuple[ObservationMatrix, ObservationMatrix]:
    """Two samples with Sigma1 = (1 + a/n1) Sigma2; sample 1 is drawn first."""
    x1 = stream.draw(sc.distribution, (sc.n1, sc.p))
    x2 = stream.draw(sc.distribution, (sc.n2, sc.p))
    if sc.sigma2_structure != "identity":
        root = sigma_sqrt(sc.sigma2_structure, sc.p)
        x1 = x1 @ root
        x2 = x2 @ root
    if sc.a:
        x1 = math.sqrt(1.0 + sc.a / sc.n1) * x1
    return ObservationMatrix(x1), ObservationMatrix(x2)


def draw_kurtosis_matched(
    sc: Scenario, stream: RandomStream, entries: KurtosisSpec
) -> tuple[ObservationMatrix, ObservationMatrix]:
    """Null pair with identity covariance whose entries carry the given excess kurtosis per sample."""
    x1 = stream.kurtosis_matched(entries.delta1, (sc.n1, sc.p))
    x2 = stream.kurtosis_matched(entries.delta2, (sc.n2, sc.p))
    return ObservationMatrix(x1), ObservationMatrix(x2)


@dataclass(frozen=True)
class _SweepJob:
    scenario: Scenario
    seed: int
    purpose: Purpose
    start: int
    stop: int
    law: NullLaw
    mlrt: MlrtConfig
    clamp_tolerance: float
    solver: str
    entries: KurtosisSpec | None = None


def _evaluate(job: _SweepJob, replicate: int) -> np.ndarray:
    sc = job.scenario
    row = np.full(4, np.nan)
    stream = RandomStream.for_replicate(
        job.seed,
        case_id=sc.case_id,
        n1=sc.n1,
        n2=sc.n2,
        p=sc.p,
        a=sc.a,
        replicate=replicate,
        purpose=job.purpose,
    )
    try:
        if job.entries is None:
            x1, x2 = draw_dataset(sc, stream)
        else:
            x1, x2 = draw_kurtosis_matched(sc, stream, job.entries)
        spec = beta_spectrum(scatter(x1), scatter(x2), job.clamp_tolerance, job.solver)
        ts = truncated_sums(spec)
        row[_K], _ = k_statistics(ts, job.law, sc.p)
        row[_P1] = ts.p1
    except (BetaCovError, np.linalg.LinAlgError) as exc:
        logger.debug(f"replicate_failed replicate={replicate} error={exc}")
        return row
    try:
        row[_L], row[_LT] = mlrt_statistics(spec, job.mlrt)
    except EmptyInterior:
        pass
    return row


def _run_chunk(job: _SweepJob) -> tuple[int, np.ndarray]:
    return job.start, np.stack([_evaluate(job, i) for i in range(job.start, job.stop)])


def _workers(workers: int | None) -> int:
    n = settings.threads if workers is None else workers
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def sweep(
    sc: Scenario,
    reps: int,
    seed: int,
    purpose: Purpose,
    *,
    law: NullLaw | None = None,
    mlrt: MlrtConfig | None = None,
    entries: KurtosisSpec | None = None,
    workers: int | None = None,
) -> np.ndarray:
    """Per-replicate (K, L, L~, P1) rows; failed replicates are NaN.

    ``entries`` replaces the scenario's distribution and Sigma2 with identity-covariance
    entries of the given per-sample excess kurtosis.
    """
    if law is None:
        sp = spectral_params(sc.n1, sc.n2, sc.p)
        law = mean_variance(sp, KurtosisSpec(sc.delta, sc.delta))
    mlrt = mlrt or MlrtConfig.likelihood_weights(sc.n1, sc.n2)
    n_workers = _workers(workers)
    chunk = max(1, math.ceil(reps / (4 * n_workers)))
    jobs = [
        _SweepJob(
            scenario=sc,
            seed=seed,
            purpose=purpose,
            start=start,
            stop=min(start + chunk, reps),
            law=law,
            mlrt=mlrt,
            clamp_tolerance=settings.clamp_tolerance,
            solver=settings.eigen_solver,
            entries=entries,
        )
        for start in range(0, reps, chunk)
    ]
    out = np.empty((reps, 4))
    if n_workers == 1 or len(jobs) == 1:
        results: Iterable[tuple[int, np.ndarray]] = map(_run_chunk, jobs)
        for start, block in results:
            out[start : start + block.shape[0]] = block
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for start, block in pool.map(_run_chunk, jobs):
                out[start : start + block.shape[0]] = block
    return out


def critical_values(null_values: np.ndarray, statistic: str, level: float, sidedness: Sidedness) -> list[float]:
    """Order-statistic critical values from a null sweep.

    K: one value c, reject when |K| > c (two-sided) or K > c (upper).
    L, L~: equal-tail pair [lower, upper], reject outside.
    """
    v = np.sort(null_values[np.isfinite(null_values)])
    r = v.size
    if r == 0:
        return []
    if statistic == "K":
        if sidedness == "two-sided":
            v = np.sort(np.abs(v))
        k = int(math.floor(level * r))
        return [float(v[r - k - 1])]
    k = int(math.floor(level * r / 2.0))
    return [float(v[k]), float(v[r - k - 1])]


def _empirical_reject(values: np.ndarray, statistic: str, crit: list[float], sidedness: Sidedness) -> np.ndarray:
    if statistic == "K":
        stat = np.abs(values) if sidedness == "two-sided" else values
        return stat > crit[0]
    return (values < crit[0]) | (values > crit[1])


def _rate(flags: np.ndarray) -> float:
    return float(np.mean(flags)) if flags.size else float("nan")


def run_cell(
    cfg: SimConfig,
    *,
    null_sweep: np.ndarray | None = None,
    workers: int | None = None,
) -> CellResult:
    """Rejection rates of one (scenario, a) cell.

    ``null_sweep`` lets a table share one calibration sweep across a-cells; it is
    drawn on demand otherwise.
    """
    sc = cfg.scenario
    started = time.perf_counter()
    sp: SpectralParams = spectral_params(sc.n1, sc.n2, sc.p)
    law = mean_variance(sp, KurtosisSpec(sc.delta, sc.delta))
    mlrt = MlrtConfig.likelihood_weights(sc.n1, sc.n2)
    purpose: Purpose = "null" if sc.a == 0 else "alternative"

    logger.info(
        f"cell_start case={sc.case_id} n1={sc.n1} n2={sc.n2} p={sc.p} a={sc.a} reps={cfg.reps} seed={cfg.seed}",
        extra={"case_id": sc.case_id, "n1": sc.n1, "n2": sc.n2, "p": sc.p, "a": sc.a, "reps": cfg.reps},
    )
    if purpose == "null" and null_sweep is not None:
        stats = null_sweep
    else:
        stats = sweep(sc, cfg.reps, cfg.seed, purpose, law=law, mlrt=mlrt, workers=workers)

    failures = int(np.count_nonzero(~np.isfinite(stats[:, _K])))
    if failures > settings.max_failure_fraction * cfg.reps:
        raise SimulationError(
            f"{failures} of {cfg.reps} replicates failed numerically "
            f"(case={sc.case_id} n1={sc.n1} n2={sc.n2} p={sc.p} a={sc.a})"
        )
    if failures:
        logger.warning(f"cell_failures case={sc.case_id} p={sc.p} a={sc.a} failures={failures}")

    if cfg.calibration == "empirical-quantile":
        if purpose == "null":
            calibration = stats
        elif null_sweep is not None:
            calibration = null_sweep
        else:
            calibration = sweep(
                sc.model_copy(update={"a": 0.0}), cfg.reps, cfg.seed, "null", law=law, mlrt=mlrt, workers=workers
            )
    else:
        calibration = None

    rejection: dict[str, float | None] = {}
    corrected: dict[str, float | None] = {}
    se: dict[str, float | None] = {}
    crits: dict[str, list[float]] = {}
    for stat in cfg.statistics:
        column = stats[:, _COLUMN[stat]]
        finite = column[np.isfinite(column)]
        if stat == "K":
            flags = np.array([decide(float(k), cfg.level, cfg.sidedness)[1] == "reject" for k in finite], dtype=bool)
            rejection[stat] = _rate(flags)
        else:
            rejection[stat] = None
        if calibration is not None:
            crit = critical_values(calibration[:, _COLUMN[stat]], stat, cfg.level, cfg.sidedness)
            crits[stat] = crit
            corrected[stat] = _rate(_empirical_reject(finite, stat, crit, cfg.sidedness)) if crit else None
        else:
            corrected[stat] = None
        basis = rejection[stat] if rejection[stat] is not None else corrected[stat]
        se[stat] = math.sqrt(basis * (1.0 - basis) / finite.size) if basis is not None and math.isfinite(basis) else None

    elapsed = time.perf_counter() - started
    logger.info(
        f"cell_done case={sc.case_id} n1={sc.n1} n2={sc.n2} p={sc.p} a={sc.a} "
        f"rate_K={rejection.get('K')} corrected_K={corrected.get('K')} elapsed_ms={int(elapsed * 1000)}",
        extra={"case_id": sc.case_id, "elapsed_ms": int(elapsed * 1000)},
    )
    return CellResult(
        scenario=sc,
        regime=regime(sp),
        reps=cfg.reps,
        seed=cfg.seed,
        level=cfg.level,
        rejection_rate=rejection,
        size_corrected_rate=corrected,
        mc_se=se,
        critical_values=crits,
        failures=failures,
        elapsed_s=elapsed,
    )


def run_table(
    case_id: int,
    size_grid: Iterable[tuple[int, int, int]],
    a_grid: Iterable[float],
    reps: int,
    seed: int,
    *,
    level: float | None = None,
    sidedness: Sidedness | None = None,
    workers: int | None = None,
) -> PowerTable:
    """Grid product of size triples and a-values for one case.

    A cell that fails is recorded with its error and the table continues.
    """
    sizes = list(size_grid)
    a_values = sorted(float(a) for a in a_grid)
    if not sizes or not a_values:
        raise ConfigurationError("size grid and a grid must be nonempty")
    level = settings.level if level is None else level
    sidedness = sidedness or settings.sidedness
    table = PowerTable(case_id=case_id, reps=reps, seed=seed, level=level)

    for n1, n2, p in sizes:
        base = Scenario(case_id=case_id, n1=n1, n2=n2, p=p, a=0.0)
        try:
            null_stats = sweep(base, reps, seed, "null", workers=workers)
        except BetaCovError as exc:
            logger.error(f"null_sweep_failed case={case_id} n1={n1} n2={n2} p={p} error={exc}")
            null_stats = None
        for a in a_values:
            sc = base.model_copy(update={"a": a})
            cfg = SimConfig(scenario=sc, reps=reps, seed=seed, level=level, sidedness=sidedness)
            try:
                if null_stats is None:
                    raise SimulationError("null calibration sweep failed")
                table.cells.append(run_cell(cfg, null_sweep=null_stats, workers=workers))
            except BetaCovError as exc:
                logger.error(f"cell_failed case={case_id} n1={n1} n2={n2} p={p} a={a} error={exc}")
                table.cells.append(
                    CellResult(
                        scenario=sc,
                        regime=regime(spectral_params(n1, n2, p)),
                        reps=reps,
                        seed=seed,
                        level=level,
                        error=str(exc),
                    )
                )
    return table


def mc_moments(
    n1: int,
    n2: int,
    p: int,
    distribution: Literal["normal", "uniform"],
    reps: int,
    seed: int,
    *,
    workers: int | None = None,
) -> MomentReport:
    """Monte-Carlo mean and variance of P1 - p * ell1 under the null."""
    if reps < 500:
        raise ConfigurationError(f"mc_moments needs reps >= 500, got {reps}")
    case_id = 1 if distribution == "normal" else 2
    sc = Scenario(case_id=case_id, n1=n1, n2=n2, p=p, a=0.0)
    sp = spectral_params(n1, n2, p)
    law = mean_variance(sp, KurtosisSpec(sc.delta, sc.delta))
    stats = sweep(sc, reps, seed, "oracle", law=law, workers=workers)
    centered = stats[:, _P1] - p * law.ell1
    centered = centered[np.isfinite(centered)]
    r = centered.size
    mean = float(np.mean(centered))
    var = float(np.var(centered, ddof=1))
    m4 = float(np.mean((centered - mean) ** 4))
    return MomentReport(
        n1=n1,
        n2=n2,
        p=p,
        distribution=distribution,
        reps=r,
        seed=seed,
        mean=mean,
        variance=var,
        se_mean=math.sqrt(var / r),
        se_variance=math.sqrt(max(m4 - var * var, 0.0) / r),
        expected_mean=law.mu,
        expected_variance=law.sigma2,
    )


def statistic_columns(stats: np.ndarray) -> dict[str, np.ndarray]:
    return {name: stats[:, _COLUMN[name]] for name in STATISTICS}
