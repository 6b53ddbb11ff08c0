"""
Closed-form limiting law of the truncated trace statistic.

With y1 = p/n1, y2 = p/n2 and h^2 = y1 + y2 - y1*y2, the interior eigenvalues of
the beta matrix follow a Wachter-type density on [x_l, x_r]; the truncated trace
centered at p*ell1 is asymptotically N(mu, sigma2).
"""

from __future__ import annotations

import math

import numpy as np

from app.core.config import settings
from app.core.errors import ConfigurationError, DimensionError
from app.core.logging_config import get_logger
from app.core.types import KurtosisSpec, NullLaw, Regime, SpectralParams

logger = get_logger("betacov.null_law")


def spectral_params(n1: int, n2: int, p: int, near_unit_band: float | None = None) -> SpectralParams:
    for name, value in (("n1", n1), ("n2", n2), ("p", p)):
        if int(value) != value or value < 2:
            raise DimensionError(f"{name} must be an integer >= 2, got {value}")
    n1, n2, p = int(n1), int(n2), int(p)
    if p >= n1 + n2:
        raise DimensionError(f"p={p} must be < n1 + n2 = {n1 + n2}")

    band = settings.near_unit_band if near_unit_band is None else near_unit_band
    y1 = p / n1
    y2 = p / n2
    h2 = y1 + y2 - y1 * y2
    h = math.sqrt(h2)
    s2 = (y1 + y2) ** 2
    x_l = y2 * (h - y1) ** 2 / s2
    x_r = y2 * (h + y1) ** 2 / s2

    warnings = []
    for name, y in (("y1", y1), ("y2", y2)):
        if abs(y - 1.0) < band:
            warnings.append(f"{name}={y:.4f} is within {band} of 1; the null law is numerically fragile here")
    for w in warnings:
        logger.warning(f"near_unit_ratio n1={n1} n2={n2} p={p} {w}")

    return SpectralParams(
        n1=n1,
        n2=n2,
        p=p,
        y1=y1,
        y2=y2,
        alpha_n=n2 / n1,
        h=h,
        x_l=x_l,
        x_r=x_r,
        warnings=tuple(warnings),
    )


def regime(sp: SpectralParams) -> Regime:
    above1 = sp.y1 > 1.0
    above2 = sp.y2 > 1.0
    if above1 and above2:
        return "i"
    if above1:
        return "ii"
    if above2:
        return "iii"
    return "iv"


def lsd_density(x, sp: SpectralParams) -> np.ndarray | float:
    """Continuous part of the limiting beta-matrix spectral density; zero off [x_l, x_r]."""
    arr = np.asarray(x, dtype=float)
    inside = (arr > sp.x_l) & (arr < sp.x_r)
    safe = np.where(inside, arr, 0.5 * (sp.x_l + sp.x_r))
    dens = (sp.alpha_n + 1.0) * np.sqrt((sp.x_r - safe) * (safe - sp.x_l)) / (
        2.0 * math.pi * sp.y1 * safe * (1.0 - safe)
    )
    out = np.where(inside, dens, 0.0)
    return float(out) if out.ndim == 0 else out


def centering_terms(sp: SpectralParams) -> tuple[float, float]:
    """(ell1, ell2): integrals of x and 1 - x against the continuous part."""
    y1, y2, h2 = sp.y1, sp.y2, sp.h2
    ell1 = (h2 if y2 > 1.0 else y2 * y2) / (y2 * (y1 + y2))
    ell2 = (h2 if y1 > 1.0 else y1 * y1) / (y1 * (y1 + y2))
    return ell1, ell2


def mean_variance(sp: SpectralParams, ks: KurtosisSpec) -> NullLaw:
    y1, y2, h2 = sp.y1, sp.y2, sp.h2
    s = y1 + y2
    base = h2 * y1 * y1 * y2 * y2 / s**4
    mu = (ks.delta2 - ks.delta1) * base
    sigma2 = 2.0 * base + (ks.delta1 * y1 + ks.delta2 * y2) * h2 * base / s**2
    if not sigma2 > 0.0:
        raise ConfigurationError(f"null variance is not positive (sigma2={sigma2})")
    ell1, ell2 = centering_terms(sp)
    return NullLaw(ell1=ell1, ell2=ell2, mu=mu, sigma2=sigma2)


def null_law(n1: int, n2: int, p: int, ks: KurtosisSpec | None = None) -> tuple[SpectralParams, NullLaw]:
    sp = spectral_params(n1, n2, p)
    return sp, mean_variance(sp, ks or KurtosisSpec())
