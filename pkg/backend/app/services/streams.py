"""
Counter-based random streams for the Monte-Carlo harness.

Each replicate owns a Philox generator keyed by (seed, case, sizes, a, replicate,
purpose), so results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
from scipy import special

from app.core.types import Distribution

Purpose = Literal["null", "alternative", "oracle", "fixture"]

PURPOSE_CODES: dict[Purpose, int] = {"null": 0, "alternative": 1, "oracle": 2, "fixture": 3}

_HALF_ULP = 2.0**-54
_SQRT3 = math.sqrt(3.0)


def a_code(a: float) -> int:
    return int(round(a * 1000))


class RandomStream:
    """Unit-variance entry draws from a Philox stream."""

    def __init__(self, seed: int, key: tuple[int, ...]):
        self.key = key
        ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    @classmethod
    def for_replicate(
        cls,
        seed: int,
        *,
        case_id: int,
        n1: int,
        n2: int,
        p: int,
        a: float | None,
        replicate: int,
        purpose: Purpose,
    ) -> "RandomStream":
        # Null sweeps are shared by every a-cell of a size triple, so a stays out of their key
        cell = (case_id, n1, n2, p) if purpose == "null" or a is None else (case_id, n1, n2, p, a_code(a))
        return cls(seed, (*cell, replicate, PURPOSE_CODES[purpose]))

    def _open_uniform(self, shape) -> np.ndarray:
        # k * 2^-53 shifted by half a step: strictly inside (0, 1)
        return self._gen.random(shape) + _HALF_ULP

    def normal(self, shape) -> np.ndarray:
        """Standard normals by inversion of the uniform stream."""
        return special.ndtri(self._open_uniform(shape))

    def uniform(self, shape) -> np.ndarray:
        """Uniform on (-sqrt 3, sqrt 3): mean 0, variance 1, excess kurtosis -1.2."""
        return _SQRT3 * (2.0 * self._open_uniform(shape) - 1.0)

    def draw(self, distribution: Distribution, shape) -> np.ndarray:
        if distribution == "normal":
            return self.normal(shape)
        if distribution == "uniform":
            return self.uniform(shape)
        raise ValueError(f"unknown distribution {distribution!r}")

    def kurtosis_matched(self, delta: float, shape) -> np.ndarray:
        """Symmetric unit-variance entries with excess kurtosis ``delta`` (>= -2).

        Normal at 0 and uniform at -1.2; otherwise a normal/Rademacher mixture
        below 0, a two-point normal scale mixture up to 3 and a zero-inflated
        normal above.
        """
        if delta < -2.0:
            raise ValueError(f"excess kurtosis must be >= -2, got {delta}")
        if math.isclose(delta, 0.0, abs_tol=1e-12):
            return self.normal(shape)
        if math.isclose(delta, -1.2, abs_tol=1e-12):
            return self.uniform(shape)
        z = self.normal(shape)
        u = self._open_uniform(shape)
        if delta < 0.0:
            return np.where(u < -0.5 * delta, np.sign(z), z)
        if delta <= 3.0:
            d = math.sqrt(delta / 3.0)
            return z * np.sqrt(np.where(u < 0.5, 1.0 - d, 1.0 + d))
        q = 3.0 / (delta + 3.0)
        return np.where(u < q, z / math.sqrt(q), 0.0)
