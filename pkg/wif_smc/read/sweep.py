"""Functions for reading sweep rows."""

import logging
from typing import Optional

import pandas as pd
from sqlalchemy.orm import Session

from wif_smc.experiments.ou import SWEEP_COLUMNS
from wif_smc.sqlmodels import SweepRowSQL

logger = logging.getLogger(__name__)


def get_sweep_rows(
    session: Session, run_label: Optional[str] = None, scheme: Optional[str] = None
) -> pd.DataFrame:
    """Get sweep rows as a dataframe in the layout of ``ou_sweep``.

    :param session: database session
    :param run_label: only rows of this run
    :param scheme: only rows of this scheme
    :return: dataframe with the sweep columns plus ``run_label``
    """
    query = session.query(SweepRowSQL)
    if run_label is not None:
        query = query.filter(SweepRowSQL.run_label == run_label)
    if scheme is not None:
        query = query.filter(SweepRowSQL.scheme == scheme)
    query = query.order_by(
        SweepRowSQL.run_label,
        SweepRowSQL.scheme,
        SweepRowSQL.n_particles,
        SweepRowSQL.delta_log2,
        SweepRowSQL.rep,
    )
    rows = query.all()
    logger.debug(f"found {len(rows)} sweep rows")

    records = [
        {
            "run_label": row.run_label,
            "scheme": row.scheme,
            "N": row.n_particles,
            "delta_log2": row.delta_log2,
            "rep": row.rep,
            "logZ": row.log_z,
            "filter_est": row.filter_est,
            "smooth_est": row.smooth_est,
            "resample_events": row.resample_events,
            "error": row.error or "",
        }
        for row in rows
    ]
    return pd.DataFrame(records, columns=["run_label"] + SWEEP_COLUMNS)
