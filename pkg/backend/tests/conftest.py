import numpy as np
import pytest

from app.core.types import ScatterMatrix
from app.services.matrix_core import scatter


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def make_scatters(rng):
    """Known-zero-mean Gaussian scatter pair with the requested sizes."""

    def _make(n1: int, n2: int, p: int, scale1: float = 1.0) -> tuple[ScatterMatrix, ScatterMatrix]:
        x1 = scale1 * rng.standard_normal((n1, p))
        x2 = rng.standard_normal((n2, p))
        return scatter(x1), scatter(x2)

    return _make
