"""Database connection for the results store."""
import logging

from sqlalchemy import create_engine
from sqlalchemy.engine import URL
from sqlalchemy.orm import sessionmaker
from sqlalchemy.orm.session import Session

from wif_smc.sqlmodels import Base

logger = logging.getLogger(__name__)


class DatabaseConnection:
    """Connection to a results database, any SQLAlchemy url."""

    def __init__(self, url: URL | str, echo: bool = False, create_tables: bool = True):
        """Set up the engine and the session factory.

        :param url: the database url, e.g. ``sqlite:///results.db``
        :param echo: whether to echo SQL statements
        :param create_tables: create missing result tables
        """
        if url is None:
            raise ValueError("Need to set url for database connection")
        self.url = url
        self.engine = create_engine(self.url, echo=echo)
        self.Session = sessionmaker(bind=self.engine)
        if create_tables:
            Base.metadata.create_all(self.engine)
            logger.debug(f"result tables ready at {self.engine.url!r}")

    def get_session(self) -> Session:
        """Get sqlalchemy session."""
        return self.Session()
