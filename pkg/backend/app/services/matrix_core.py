"""
Dense symmetric linear algebra for the beta-matrix test.

scatter -> cholesky_factor -> beta_spectrum, plus the symmetric eigen-solver used
on the whitened matrix. The default eigen backend is LAPACK ``syev`` (Householder
tridiagonalization followed by implicit QL/QR); ``householder-ql`` is a numpy
implementation of the same two stages kept as an in-repo reference.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from app.core.config import settings
from app.core.errors import DimensionError, NonConvergence, NotPositiveDefinite, NotSymmetric
from app.core.logging_config import get_logger
from app.core.types import (
    BetaSpectrum,
    Centering,
    LowerTriangular,
    ObservationMatrix,
    ScatterMatrix,
)

logger = get_logger("betacov.matrix")

SYMMETRY_TOL = 1e-12
PIVOT_FLOOR = 1e-14


def _as_array(m) -> np.ndarray:
    return np.asarray(getattr(m, "values", m), dtype=float)


def _check_symmetric(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    scale = max(float(np.abs(m).max(initial=0.0)), np.finfo(float).tiny)
    if float(np.abs(m - m.T).max(initial=0.0)) > SYMMETRY_TOL * scale:
        raise NotSymmetric("matrix is not symmetric")


def scatter(data: ObservationMatrix | np.ndarray, centering: Centering = "known-zero-mean") -> ScatterMatrix:
    """Return A = X^T X, with X optionally centered at its column means."""
    obs = data if isinstance(data, ObservationMatrix) else ObservationMatrix(data)
    x = obs.values
    if centering == "sample-mean":
        x = x - x.mean(axis=0)
    elif centering != "known-zero-mean":
        raise ValueError(f"unknown centering {centering!r}")
    a = x.T @ x
    return ScatterMatrix(values=0.5 * (a + a.T), n_obs=obs.rows, centering=centering)


def cholesky_factor(m) -> LowerTriangular:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises NotPositiveDefinite carrying the 1-based failing pivot, also when a
    pivot survives but falls below p * 1e-14 * max(diag).
    """
    a = _as_array(m)
    _check_symmetric(a)
    p = a.shape[0]
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(pivot=int(info))
    if info < 0:
        raise ValueError(f"dpotrf rejected argument {-info}")
    pivots = np.diag(c) ** 2
    floor = p * PIVOT_FLOOR * float(np.max(np.diag(a)))
    small = np.flatnonzero(pivots <= floor)
    if small.size:
        raise NotPositiveDefinite(pivot=int(small[0]) + 1)
    return LowerTriangular(values=np.tril(c))


def _householder_tridiagonal(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduce a symmetric matrix to tridiagonal (diagonal, subdiagonal)."""
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1 :, k]
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            continue
        alpha = -math.copysign(norm, x[0])
        v = x.copy()
        v[0] -= alpha
        vv = float(v @ v)
        if vv == 0.0:
            continue
        # H A H on the trailing block with H = I - 2 v v^T / (v^T v)
        sub = a[k + 1 :, k + 1 :]
        w = (sub @ v) * (2.0 / vv)
        q = w - ((v @ w) / vv) * v
        sub -= np.outer(v, q) + np.outer(q, v)
        a[k + 1 :, k] = 0.0
        a[k, k + 1 :] = 0.0
        a[k + 1, k] = a[k, k + 1] = alpha
    return np.diag(a).copy(), np.diag(a, -1).copy()


def _tridiagonal_ql(diag: np.ndarray, sub: np.ndarray, max_iter: int) -> np.ndarray:
    """Eigenvalues of a symmetric tridiagonal matrix by implicit QL with Wilkinson shifts."""
    d = [float(v) for v in diag]
    e = [float(v) for v in sub] + [0.0]
    n = len(d)
    eps = np.finfo(float).eps
    iterations = 0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            iterations += 1
            if iterations > max_iter:
                raise NonConvergence(f"QL iteration exceeded {max_iter} sweeps")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            deflated = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return np.sort(np.array(d))


def symmetric_eigenvalues(m, solver: str | None = None, max_sweeps_per_dim: int | None = None) -> np.ndarray:
    """All eigenvalues of a real symmetric matrix, ascending."""
    a = _as_array(m)
    _check_symmetric(a)
    solver = solver or settings.eigen_solver
    if a.shape[0] == 1:
        return a.reshape(1).copy()
    if solver == "lapack":
        try:
            return linalg.eigvalsh(a, driver="ev", check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(f"LAPACK syev did not converge: {exc}") from exc
    if solver == "householder-ql":
        cap = (max_sweeps_per_dim or settings.max_sweeps_per_dim) * a.shape[0]
        d, e = _householder_tridiagonal(a)
        return _tridiagonal_ql(d, e, cap)
    raise ValueError(f"unknown eigen solver {solver!r}")


def beta_spectrum(
    a1: ScatterMatrix,
    a2: ScatterMatrix,
    clamp_tolerance: float | None = None,
    solver: str | None = None,
) -> BetaSpectrum:
    """Eigenvalues of A1 (A1 + A2)^{-1}, computed on the whitened form L^{-1} A1 L^{-T}."""
    eps = settings.clamp_tolerance if clamp_tolerance is None else clamp_tolerance
    if not 0.0 < eps < 0.5:
        raise ValueError(f"clamp tolerance must lie in (0, 0.5), got {eps}")
    if a1.dim != a2.dim:
        raise DimensionError(f"scatter dimensions differ: {a1.dim} vs {a2.dim}")
    p = a1.dim
    try:
        chol = cholesky_factor(a1.values + a2.values)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            exc.pivot,
            f"A1 + A2 is singular at pivot {exc.pivot}; the test needs p < n1 + n2 "
            f"(p={p}, effective n1+n2={a1.effective_n + a2.effective_n})",
        ) from exc

    low = chol.values
    half = linalg.solve_triangular(low, a1.values, lower=True, check_finite=False)
    whitened = linalg.solve_triangular(low, half.T, lower=True, check_finite=False)
    whitened = 0.5 * (whitened + whitened.T)
    raw = symmetric_eigenvalues(whitened, solver=solver)

    spectrum = BetaSpectrum.from_eigenvalues(raw, eps)
    warnings: list[str] = []
    expected_zero = p - a1.effective_rank_bound
    expected_one = p - a2.effective_rank_bound
    if spectrum.count_zero != expected_zero:
        warnings.append(f"count_zero={spectrum.count_zero} differs from p - rank(A1)={expected_zero}")
    if spectrum.count_one != expected_one:
        warnings.append(f"count_one={spectrum.count_one} differs from p - rank(A2)={expected_one}")
    for w in warnings:
        logger.warning(f"beta_spectrum_count_mismatch {w}")
    if warnings:
        spectrum = BetaSpectrum(
            eigenvalues=spectrum.eigenvalues,
            count_zero=spectrum.count_zero,
            count_one=spectrum.count_one,
            clamp_tolerance=eps,
            warnings=tuple(warnings),
        )
    return spectrum


def beta_from_f_eigenvalues(f_eigs: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Map eigenvalues of S1 S2^{-1} (S = A / n) to those of A1 (A1 + A2)^{-1}."""
    f = np.asarray(f_eigs, dtype=float)
    d = n2 / n1
    return f / (d + f)


def f_from_beta_eigenvalues(beta_eigs: np.ndarray, n1: int, n2: int) -> np.ndarray:
    lam = np.asarray(beta_eigs, dtype=float)
    if np.any((lam < 0.0) | (lam >= 1.0)):
        raise ValueError("F-matrix eigenvalues exist only for beta eigenvalues in [0, 1)")
    return (n2 / n1) * lam / (1.0 - lam)
