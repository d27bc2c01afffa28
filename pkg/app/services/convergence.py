"""
Convergence-rate extraction from iteration records.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import numpy as np

from app.exceptions import ConfigurationError
from app.repositories.csv_log import read_csv_records

MIN_RECORDS = 5
TAIL_FRACTION = 0.6


def fit_rate(dofs: Sequence[float], est: Sequence[float], tail: float = TAIL_FRACTION) -> float:
    """
    Least-squares slope of ``log est`` against ``log N`` over the final
    ``tail`` share of the records.
    """
    n_values = np.asarray(dofs, dtype=float)
    e_values = np.asarray(est, dtype=float)
    if n_values.shape != e_values.shape:
        raise ConfigurationError("dofs and est must have the same length.")
    if n_values.size < MIN_RECORDS:
        raise ConfigurationError(
            f"At least {MIN_RECORDS} records are needed to fit a rate, got {n_values.size}."
        )
    if np.any(n_values <= 0) or np.any(e_values <= 0):
        raise ConfigurationError("dofs and est must be positive to fit a log-log rate.")
    start = int(np.floor((1.0 - tail) * n_values.size))
    start = min(start, n_values.size - 2)
    slope, _ = np.polyfit(np.log(n_values[start:]), np.log(e_values[start:]), 1)
    return float(slope)


def fit_rate_csv(path: Union[str, Path], tail: float = TAIL_FRACTION) -> float:
    rows = read_csv_records(path)
    return fit_rate([int(r["dofs"]) for r in rows], [float(r["error"]) for r in rows], tail)
