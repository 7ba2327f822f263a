"""
Write helpers for the sweep_rows table.
"""

import logging
import math

import pandas as pd
from sqlalchemy.orm import Session

from wif_smc.sqlmodels import SweepRowSQL
from wif_smc.write.utils import _insert_do_nothing_on_conflict

_log = logging.getLogger(__name__)


def _nullable(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


def insert_sweep_rows(session: Session, df: pd.DataFrame, run_label: str) -> int:
    """Insert the rows of a sweep, keeping existing rows with the same key.

    :param session: sqlalchemy session for interacting with the database
    :param df: dataframe as returned by ``ou_sweep``
    :param run_label: label shared by the rows of this sweep
    :return: number of rows offered for insertion
    """
    duplicated = df.duplicated(["scheme", "N", "delta_log2", "rep"])
    if duplicated.any():
        _log.warning(f"{int(duplicated.sum())} duplicated sweep keys in run {run_label}")

    rows: list[dict] = []
    for _, row in df.iterrows():
        rows.append(
            {
                "run_label": run_label,
                "scheme": row["scheme"],
                "n_particles": int(row["N"]),
                "delta_log2": int(row["delta_log2"]),
                "rep": int(row["rep"]),
                "log_z": _nullable(row["logZ"]),
                "filter_est": _nullable(row["filter_est"]),
                "smooth_est": _nullable(row["smooth_est"]),
                "resample_events": int(row["resample_events"]),
                "error": row["error"] if isinstance(row["error"], str) and row["error"] else None,
            }
        )

    _insert_do_nothing_on_conflict(session, SweepRowSQL, rows)
    _log.info(f"offered {len(rows)} sweep rows for run {run_label}")
    return len(rows)
