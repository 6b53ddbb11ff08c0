"""Exception hierarchy shared by the services, the CLI and the HTTP surface.

Every domain failure derives from :class:`BetaCovError`; ``exit_code`` is what the
command line returns when the error reaches it.
"""

from __future__ import annotations

import numpy as np


class BetaCovError(Exception):
    exit_code: int = 1


class DimensionError(BetaCovError, ValueError):
    pass


class NonFiniteInput(BetaCovError, ValueError):
    pass


class NotSymmetric(BetaCovError, ValueError):
    pass


class NotPositiveDefinite(BetaCovError, np.linalg.LinAlgError):
    """Cholesky breakdown; ``pivot`` is the 1-based index of the failing pivot."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (failing pivot {pivot})")


class NonConvergence(BetaCovError, RuntimeError):
    pass


class ConfigurationError(BetaCovError, ValueError):
    pass


class ContourConfigError(ConfigurationError):
    pass


class EmptyInterior(BetaCovError, ValueError):
    pass


class IngestError(BetaCovError, ValueError):
    pass


class SimulationError(BetaCovError, RuntimeError):
    pass


class VerificationFailure(BetaCovError):
    exit_code = 3
