"""
Useful functions for write operations.
"""

from sqlalchemy.dialects import postgresql, sqlite
from sqlalchemy.orm import Session

from wif_smc.sqlmodels import Base

_INSERTS = {"postgresql": postgresql.insert, "sqlite": sqlite.insert}


def _insert_do_nothing_on_conflict(session: Session, table: Base, rows: list[dict]):
    """Insert rows, skipping those that clash with a primary key or unique constraint.

    :param session: sqlalchemy Session
    :param table: the table
    :param rows: the rows to insert
    """
    if not rows:
        return
    dialect = session.get_bind().dialect.name
    if dialect not in _INSERTS:
        raise NotImplementedError(f"insert-or-ignore is not available for {dialect}")
    stmt = _INSERTS[dialect](table.__table__)
    stmt = stmt.on_conflict_do_nothing()
    session.execute(stmt, rows)
