from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import pandas as pd

from app.core.errors import IngestError
from app.core.types import IngestSpec


def read_observations(source: str | Path | bytes, spec: IngestSpec | None = None) -> np.ndarray:
    """Load a numeric n x p block from CSV (path or raw bytes); ``transpose`` reads variables as rows."""
    spec = spec or IngestSpec()
    buffer = io.BytesIO(source) if isinstance(source, bytes) else source
    try:
        frame = pd.read_csv(buffer, sep=spec.delimiter, header=0 if spec.header else None)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        name = "upload" if isinstance(source, bytes) else str(source)
        raise IngestError(f"cannot read observations from {name}: {exc}") from exc
    try:
        values = frame.apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError) as exc:
        raise IngestError(f"observations must be numeric: {exc}") from exc
    return values.T.copy() if spec.transpose else values
