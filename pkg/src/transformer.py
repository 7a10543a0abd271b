from __future__ import annotations

"""
Helpers that turn residual reports into convergence tables.
"""

from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd

from .bundle import BLOCKS, ResidualReport
from .utils import ROUNDING_FLOOR

CONVERGENCE_COLUMNS = ["level", "h", "fiber_sup", "mixed_sup", "base_sup", "scalar_sup", "order_estimate"]
NORM_COLUMNS = [f"{block}_sup" for block in BLOCKS]
EXACT = "exact"


def residual_frame(reports: Sequence[ResidualReport], *, run: str = "run") -> pd.DataFrame:
    """One row per refinement level, coarse to fine."""
    rows = []
    for level, report in enumerate(reports):
        row = {"run": run, "level": level, "h": report.h}
        row.update({col: getattr(report, col) for col in NORM_COLUMNS})
        rows.append(row)
    return pd.DataFrame(rows, columns=["run", "level", "h"] + NORM_COLUMNS)


def _format_order(previous: float, current: float, floor: float) -> str:
    if np.isnan(previous):
        return ""
    if current <= floor:
        return EXACT
    return f"{np.log2(previous / current):.16e}"


def add_order_estimate(
        df: pd.DataFrame,
        run_col: str = "run",
        level_col: str = "level",
        norm_cols: Iterable[str] = NORM_COLUMNS,
        new_col: str = "order_estimate",
        floor: float = ROUNDING_FLOOR,
) -> pd.DataFrame:
    """
    Adds *new_col* with ``log2(norm(h) / norm(h/2))`` of the largest block
    norm against the previous level of the same run.  Levels whose norm is at
    the rounding floor are marked ``"exact"``; the first level is empty.
    """
    target = df.sort_values([run_col, level_col]).copy()
    norm = target[list(norm_cols)].max(axis=1)
    #Shift by one level inside each run
    previous = norm.groupby(target[run_col], sort=False).shift(1)
    target[new_col] = [_format_order(p, c, floor) for p, c in zip(previous, norm)]
    return target


def convergence_table(reports: Sequence[ResidualReport], *, run: str = "run") -> pd.DataFrame:
    return add_order_estimate(residual_frame(reports, run=run))


def finest_order(df: pd.DataFrame, col: str = "order_estimate") -> float | str:
    """Observed order at the finest pair, ``"exact"``, or NaN for a single level."""
    value = df[col].iloc[-1]
    if value == EXACT:
        return EXACT
    return float(value) if value else float("nan")


def order_passes(df: pd.DataFrame, fd_order: int, slack: float = 0.5) -> bool:
    order = finest_order(df)
    return order == EXACT or (not np.isnan(order) and order >= fd_order - slack)


def write_convergence_csv(df: pd.DataFrame, output: str | Path) -> Path:
    """Fixed columns, '.' decimal, 17 significant digits."""
    output_path = Path(output)
    if output_path.is_dir():
        output_path = output_path / "convergence.csv"
    df[CONVERGENCE_COLUMNS].to_csv(output_path, index=False, float_format="%.16e")
    return output_path


def identity_frame(reports: List[dict]) -> pd.DataFrame:
    """Flat name/status/sup/tol view of identity reports for logging."""
    return pd.DataFrame(reports, columns=["name", "status", "sup", "l2", "tol"])
