from __future__ import annotations

import io
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd
from pydantic import BaseModel

from app.core.config import settings
from app.core.types import PowerTable

RESULTS_DIR = os.path.join(settings.storage_path, "results")

POWER_COLUMNS = [
    "case",
    "regime",
    "n1",
    "n2",
    "p",
    "a",
    "statistic",
    "rate",
    "size_corrected_rate",
    "mc_se",
    "reps",
    "seed",
]
CURVE_COLUMNS = ["case", "regime", "n1", "n2", "p", "a", "statistic", "rate", "size_corrected_rate"]


def _path(name: str) -> str:
    return os.path.join(RESULTS_DIR, f"{name}.json")


def ensure_parent(path: str | Path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)


def to_json(model: BaseModel) -> str:
    return model.model_dump_json(indent=2)


def write_json(model: BaseModel, path: str | Path) -> None:
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(to_json(model))
        f.write("\n")


def save_result(name: str, model: BaseModel) -> str:
    """Store a report under the results directory; returns the file path."""
    p = _path(name)
    write_json(model, p)
    return p


def load_result(name: str) -> Optional[Dict[str, Any]]:
    p = _path(name)
    if not os.path.exists(p):
        return None
    with open(p, "r", encoding="utf-8") as f:
        return json.load(f)


def power_table_csv(table: PowerTable, power_curve: bool = False) -> str:
    """CSV text of a power table; byte-identical for identical tables."""
    columns = CURVE_COLUMNS if power_curve else POWER_COLUMNS
    frame = pd.DataFrame(table.to_rows(), columns=POWER_COLUMNS)[columns]
    for col in ("a", "rate", "size_corrected_rate", "mc_se"):
        if col in frame:
            frame[col] = frame[col].astype(float)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.6f", lineterminator="\n")
    return buffer.getvalue()


def write_power_table(table: PowerTable, path: str | Path, power_curve: bool = False) -> None:
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(power_table_csv(table, power_curve))
