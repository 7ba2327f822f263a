"""
Write helpers for the pmmh_runs table.
"""

import logging
from typing import Optional

import numpy as np
from sqlalchemy.orm import Session

from wif_smc.experiments.pmmh import PmmhResult
from wif_smc.pydantic_models import PmmhConfig
from wif_smc.sqlmodels import PmmhRunSQL

_log = logging.getLogger(__name__)


def insert_pmmh_run(
    session: Session, result: PmmhResult, config: PmmhConfig, seed: Optional[int] = None
) -> PmmhRunSQL:
    """Store the summary of one PMMH chain.

    :param session: sqlalchemy session for interacting with the database
    :param result: the chain and its diagnostics
    :param config: configuration the chain was run with
    :param seed: seed of the run
    :return: the stored row
    """
    run = PmmhRunSQL(
        scheme=config.scheme,
        n_particles=config.n_particles,
        iterations=config.iterations,
        seed=seed,
        n_events=result.n_events,
        acceptance_rate=result.diagnostics.acceptance_rate,
        mean_ire=float(np.mean(result.diagnostics.ire)),
        config=config.model_dump(mode="json"),
    )
    session.add(run)
    session.commit()
    _log.info(f"stored pmmh run {run.pmmh_run_uuid} ({config.scheme}, N={config.n_particles})")
    return run
