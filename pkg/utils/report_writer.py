"""Deterministic CSV / JSON output and the coefficient table reader"""

import csv
import json
import math
import os
import tempfile
from typing import Any, Iterable, List, Optional, Sequence

from constants import FLOAT_FORMAT
from services.jacobi import JacobiWindow
from utils.common import setup_logging

logger = setup_logging(__name__)


def format_float(value: Optional[float]) -> str:
    """17 significant digits, '.' separator, empty for missing values"""
    if value is None:
        return ""
    return format(float(value), FLOAT_FORMAT)


def _plain(value: Any) -> Any:
    """Convert numpy scalars, tuples and non-finite floats into JSON-ready values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, temp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(temp_path, path)
    except Exception:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    logger.info(f"Wrote {path}")


def write_json(path: str, data: dict) -> None:
    _atomic_write(path, json.dumps(_plain(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write rows with floats rendered by format_float"""
    lines = [",".join(header)]
    for row in rows:
        cells = [format_float(cell) if isinstance(cell, float) or cell is None else str(cell) for cell in row]
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def coefficient_rows(J: JacobiWindow) -> List[List[Any]]:
    """Rows (k, p_k, q_k); p at the first site is outside the window and left empty"""
    rows = []
    for k in range(J.lo, J.hi + 1):
        p = J.p_at(k) if k > J.lo else None
        rows.append([k, p, J.q_at(k)])
    return rows


def write_coefficients(path: str, J: JacobiWindow) -> None:
    write_csv(path, ["k", "p", "q"], coefficient_rows(J))


def read_coefficients(path: str) -> JacobiWindow:
    """Read a k,p,q table back into a window

    Raises:
        ValueError: missing columns or non-contiguous indices
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["k", "p", "q"]:
            raise ValueError(f"{path}: expected header k,p,q, got {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no coefficient rows")

    indices = [int(row["k"]) for row in rows]
    if indices != list(range(indices[0], indices[0] + len(indices))):
        raise ValueError(f"{path}: indices are not contiguous")
    q = [float(row["q"]) for row in rows]
    p = [float(row["p"]) for row in rows[1:]]
    return JacobiWindow(indices[0], q, p)
