"""Functions for reading PMMH run summaries."""

import logging
from typing import List, Optional

from sqlalchemy.orm import Session

from wif_smc.sqlmodels import PmmhRunSQL

logger = logging.getLogger(__name__)


def get_pmmh_runs(session: Session, scheme: Optional[str] = None) -> List[PmmhRunSQL]:
    """Get stored PMMH runs, oldest first.

    :param session: database session
    :param scheme: only runs of this scheme
    """
    query = session.query(PmmhRunSQL)
    if scheme is not None:
        query = query.filter(PmmhRunSQL.scheme == scheme)
    return query.order_by(PmmhRunSQL.created_utc).all()
