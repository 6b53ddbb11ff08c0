"""
Independent numerical checks of the closed-form null law.

* ``quad_lsd_moment`` integrates against the limiting density with a
  Gauss-Chebyshev rule of the second kind, which absorbs the square-root edges.
* ``contour_mean`` / ``contour_variance`` evaluate the contour-integral
  representations of mu and sigma2 after substituting z along a circle of radius
  r in the xi-plane. Trapezoid sums on |xi| = 1 converge geometrically; the
  double integral of the variance is a circular convolution and goes through an
  FFT. Results along the radius ladder r_k = 1 + (r - 1) / 2^k are Richardson
  extrapolated to r -> 1.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Callable, Literal

import numpy as np
import pandas as pd
from scipy import fft

from app.core.config import settings
from app.core.errors import ConfigurationError, ContourConfigError, NonConvergence
from app.core.logging_config import get_logger
from app.core.types import ContourConfig, KurtosisSpec, OracleReport, SpectralParams
from app.services.null_law import mean_variance, regime, spectral_params

logger = get_logger("betacov.oracle")

POLE_MARGIN = 1e-6
MIN_RESOLUTION = 30.0

MomentName = Literal["1", "x", "1-x"]
_MOMENTS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "1": np.ones_like,
    "x": lambda x: x,
    "1-x": lambda x: 1.0 - x,
}

# Triples spanning the four (y1 - 1, y2 - 1) sign patterns, each with three kurtosis pairs
DEFAULT_GRID: tuple[tuple[int, int, int, float, float], ...] = (
    (45, 40, 50, 0.0, 0.0),
    (90, 80, 100, -1.2, 0.0),
    (180, 160, 200, 0.7, -1.2),
    (36, 50, 45, 0.0, 0.0),
    (72, 100, 90, -1.2, 0.0),
    (144, 200, 180, 0.7, -1.2),
    (50, 36, 45, 0.0, 0.0),
    (100, 72, 90, -1.2, 0.0),
    (200, 144, 180, 0.7, -1.2),
    (50, 50, 45, 0.0, 0.0),
    (100, 100, 90, -1.2, 0.0),
    (200, 200, 180, 0.7, -1.2),
)


def contour_config_from_settings() -> ContourConfig:
    return ContourConfig(
        r=settings.contour_r,
        r2=settings.contour_r2,
        nodes=settings.contour_nodes,
        extrapolation=settings.contour_extrapolation,
    )


# ---------------------------------------------------------------------------
# Quadrature against the limiting density
# ---------------------------------------------------------------------------


def quad_lsd_moment(
    sp: SpectralParams,
    f: MomentName | Callable[[np.ndarray], np.ndarray] = "x",
    tol: float = 1e-12,
    max_nodes: int = 2**20,
) -> float:
    """Integral of f against the continuous part of the limiting density."""
    fn = _MOMENTS[f] if isinstance(f, str) else f
    centre = 0.5 * (sp.x_l + sp.x_r)
    radius = 0.5 * (sp.x_r - sp.x_l)
    scale = (sp.alpha_n + 1.0) / (2.0 * math.pi * sp.y1) * radius * radius

    def rule(n: int) -> float:
        theta = np.arange(1, n + 1) * (math.pi / (n + 1))
        weights = (math.pi / (n + 1)) * np.sin(theta) ** 2
        x = centre + radius * np.cos(theta)
        return float(scale * np.sum(weights * fn(x) / (x * (1.0 - x))))

    n = 64
    previous = rule(n)
    while n < max_nodes:
        n *= 2
        current = rule(n)
        if abs(current - previous) <= tol * max(1.0, abs(current)):
            return current
        previous = current
    raise NonConvergence(f"Gauss-Chebyshev rule did not settle to {tol} within {max_nodes} nodes")


# ---------------------------------------------------------------------------
# Contour integrals
# ---------------------------------------------------------------------------


def _unit_nodes(n: int) -> np.ndarray:
    return np.exp(2j * math.pi * np.arange(n) / n)


def _transfer(sp: SpectralParams, r: float, xi: np.ndarray) -> np.ndarray:
    """z / (alpha + z) with z expressed through xi; alpha = y1 / y2."""
    h = sp.h
    z = (1.0 + h * r * xi) * (1.0 + h / (r * xi)) / (1.0 - sp.y2) ** 2
    return z / (sp.y1 / sp.y2 + z)


def _stieltjes(sp: SpectralParams, r: float, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Companion Stieltjes transform along the contour and its xi-derivative."""
    h, y2 = sp.h, sp.y2
    if y2 > 1.0:
        m = -(1.0 + h / (r * xi)) / (1.0 - y2)
        dm = h / ((1.0 - y2) * r * xi * xi)
    else:
        m = -(1.0 + h * r * xi) / (1.0 - y2)
        dm = np.full_like(xi, -h * r / (1.0 - y2))
    return m, dm


def _check_radius(sp: SpectralParams, r: float, nodes: int) -> None:
    if abs(sp.y2 - 1.0) < POLE_MARGIN:
        raise ContourConfigError(f"y2={sp.y2} is too close to 1 for the contour substitution")
    if r - 1.0 <= POLE_MARGIN:
        raise ContourConfigError(f"radius r={r} is within {POLE_MARGIN} of the unit circle")
    # Poles of z/(alpha + z) in the xi-plane sit at moduli y2/(h r) and h/(y2 r);
    # the smaller must stay inside the unit circle, the larger outside.
    inner, outer = sorted((sp.y2 / (sp.h * r), sp.h / (sp.y2 * r)))
    if abs(inner - 1.0) < POLE_MARGIN or abs(outer - 1.0) < POLE_MARGIN:
        raise ContourConfigError(f"a pole lies within {POLE_MARGIN} of the contour at r={r}")
    if outer <= 1.0:
        limit = max(sp.y2 / sp.h, sp.h / sp.y2)
        raise ContourConfigError(
            f"radius r={r} pulls the pole at z=-alpha inside the contour; need r < {limit:.6f}"
        )
    if (r - 1.0) * nodes < MIN_RESOLUTION:
        logger.warning(
            f"contour_under_resolved r={r} nodes={nodes}; the trapezoid error bound exp(-(r-1)N) is weak"
        )


def _richardson(values: list[complex | float]) -> float:
    table = list(values)
    for j in range(1, len(values)):
        factor = 2.0**j - 1.0
        table = [table[i + 1] + (table[i + 1] - table[i]) / factor for i in range(len(table) - 1)]
    result = table[-1]
    if abs(complex(result).imag) > 1e-8:
        logger.warning(f"contour_imaginary_residue imag={complex(result).imag:.3e}")
    return float(complex(result).real)


def _mean_on_circle(sp: SpectralParams, ks: KurtosisSpec, r: float, n: int) -> complex:
    xi = _unit_nodes(n)
    t = _transfer(sp, r, xi)
    m, dm = _stieltjes(sp, r, xi)
    y1, y2 = sp.y1, sp.y2
    quad = (1.0 - y2) * m * m + 2.0 * m + 1.0 - y1
    log_derivative = (2.0 * (1.0 - y2) * m + 2.0) / quad - 2.0 / (1.0 + m)
    # (1 / 2 pi i) * contour integral == mean over nodes of F(xi) * xi
    base = 0.5 * np.mean(t * log_derivative * dm * xi)
    first_kurtosis = ks.delta1 * y1 * np.mean(t * dm * xi / (1.0 + m) ** 3)
    second_kurtosis = -ks.delta2 * y2 * np.mean(t * m * dm * xi / (1.0 + m) ** 3)
    return complex(base + first_kurtosis + second_kurtosis)


def variance_terms(sp: SpectralParams, r: float, r2: float, n: int) -> tuple[complex, complex]:
    """(Gaussian double integral, single integral whose square scales the kurtosis term)."""
    xi = _unit_nodes(n)
    u = _transfer(sp, r, xi) * xi
    v = _transfer(sp, r2, xi) * xi
    kernel = 1.0 / (r * xi - r2) ** 2
    flipped = kernel[(-np.arange(n)) % n]
    conv = fft.ifft(fft.fft(u) * fft.fft(flipped))
    double = 2.0 * r * r2 * np.sum(v * conv / (xi * xi)) / (n * n)

    m, dm = _stieltjes(sp, r, xi)
    single = np.mean(_transfer(sp, r, xi) * dm * xi / (1.0 + m) ** 2)
    return complex(double), complex(single)


def contour_mean(sp: SpectralParams, ks: KurtosisSpec, cc: ContourConfig | None = None) -> float:
    cc = cc or contour_config_from_settings()
    values = []
    for k in range(cc.extrapolation):
        r = 1.0 + (cc.r - 1.0) / 2**k
        n = cc.nodes * 2**k
        _check_radius(sp, r, n)
        values.append(_mean_on_circle(sp, ks, r, n))
    return _richardson(values)


def contour_variance(sp: SpectralParams, ks: KurtosisSpec, cc: ContourConfig | None = None) -> float:
    cc = cc or contour_config_from_settings()
    weight = sp.y1 * ks.delta1 + sp.y2 * ks.delta2
    values = []
    for k in range(cc.extrapolation):
        r = 1.0 + (cc.r - 1.0) / 2**k
        r2 = 1.0 + (cc.r2 - 1.0) / 2**k
        n = cc.nodes * 2**k
        _check_radius(sp, r, n)
        _check_radius(sp, r2, n)
        double, single = variance_terms(sp, r, r2, n)
        values.append(double + weight * single * single)
    return _richardson(values)


# ---------------------------------------------------------------------------
# Oracle grid
# ---------------------------------------------------------------------------


def load_grid(path: str | Path) -> list[tuple[int, int, int, float, float]]:
    """Read n1,n2,p[,delta1,delta2] rows from a CSV file with a header."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, csv.Error) as exc:
        raise ConfigurationError(f"cannot read grid file {path}: {exc}") from exc
    missing = {"n1", "n2", "p"} - set(frame.columns)
    if missing:
        raise ConfigurationError(f"grid file {path} lacks columns {sorted(missing)}")
    for col in ("delta1", "delta2"):
        if col not in frame.columns:
            frame[col] = 0.0
    rows = []
    for rec in frame.itertuples(index=False):
        rows.append((int(rec.n1), int(rec.n2), int(rec.p), float(rec.delta1), float(rec.delta2)))
    if not rows:
        raise ConfigurationError(f"grid file {path} has no rows")
    return rows


def run_oracle_grid(
    grid: list[tuple[int, int, int, float, float]] | None = None,
    *,
    tol: float | None = None,
    cc: ContourConfig | None = None,
) -> list[OracleReport]:
    """Compare every closed form with its numerical counterpart on each grid row.

    ``tol`` overrides the per-target tolerances from settings.
    """
    cc = cc or contour_config_from_settings()
    rows = list(grid) if grid is not None else list(DEFAULT_GRID)
    tolerances = {
        "mass": settings.oracle_tol_ell,
        "ell1": settings.oracle_tol_ell,
        "ell2": settings.oracle_tol_ell,
        "mu": settings.oracle_tol_mu,
        "sigma2": settings.oracle_tol_sigma2,
    }
    if tol is not None:
        tolerances = dict.fromkeys(tolerances, tol)

    reports: list[OracleReport] = []
    for n1, n2, p, d1, d2 in rows:
        sp = spectral_params(n1, n2, p)
        ks = KurtosisSpec(d1, d2)
        law = mean_variance(sp, ks)
        checks = (
            ("mass", law.ell1 + law.ell2, quad_lsd_moment(sp, "1")),
            ("ell1", law.ell1, quad_lsd_moment(sp, "x")),
            ("ell2", law.ell2, quad_lsd_moment(sp, "1-x")),
            ("mu", law.mu, contour_mean(sp, ks, cc)),
            ("sigma2", law.sigma2, contour_variance(sp, ks, cc)),
        )
        for target, closed, numeric in checks:
            report = OracleReport.compare(
                target=target,
                n1=n1,
                n2=n2,
                p=p,
                delta1=d1,
                delta2=d2,
                regime=regime(sp),
                closed_form=closed,
                numeric=numeric,
                tolerance=tolerances[target],
            )
            if not report.passed:
                logger.warning(
                    f"oracle_mismatch target={target} n1={n1} n2={n2} p={p} "
                    f"closed={closed:.10g} numeric={numeric:.10g} error={report.abs_error:.3e}"
                )
            reports.append(report)
    return reports
