"""SQLAlchemy definition of the results store."""

import uuid
from datetime import datetime

import sqlalchemy as sa
from sqlalchemy.orm import declarative_base
from sqlalchemy.schema import UniqueConstraint

Base = declarative_base()


def _new_uuid() -> str:
    return str(uuid.uuid4())


class CreatedMixin:
    """Mixin to add created datetime to model."""

    created_utc = sa.Column(sa.DateTime, default=lambda: datetime.utcnow())


class SweepRowSQL(Base, CreatedMixin):
    """Class representing the sweep_rows table.

    Each row is one particle filter run of an Ornstein-Uhlenbeck sweep.
    """

    __tablename__ = "sweep_rows"
    __table_args__ = (
        UniqueConstraint(
            "run_label", "scheme", "n_particles", "delta_log2", "rep", name="idx_sweep_row_key"
        ),
    )

    sweep_row_uuid = sa.Column(sa.String(36), default=_new_uuid, primary_key=True)
    run_label = sa.Column(sa.String(255), nullable=False, index=True)
    scheme = sa.Column(sa.String(64), nullable=False, index=True)
    n_particles = sa.Column(sa.Integer, nullable=False)
    delta_log2 = sa.Column(sa.Integer, nullable=False)
    rep = sa.Column(sa.Integer, nullable=False)
    log_z = sa.Column(sa.Float, nullable=True, comment="Null when the run failed")
    filter_est = sa.Column(sa.Float, nullable=True)
    smooth_est = sa.Column(sa.Float, nullable=True)
    resample_events = sa.Column(sa.Integer, nullable=False)
    error = sa.Column(sa.String(64), nullable=True, comment="Error code of a failed run")


class PmmhRunSQL(Base, CreatedMixin):
    """Class representing the pmmh_runs table.

    Each row summarises one particle marginal Metropolis-Hastings chain.
    """

    __tablename__ = "pmmh_runs"

    pmmh_run_uuid = sa.Column(sa.String(36), default=_new_uuid, primary_key=True)
    scheme = sa.Column(sa.String(64), nullable=False, index=True)
    n_particles = sa.Column(sa.Integer, nullable=False)
    iterations = sa.Column(sa.Integer, nullable=False)
    seed = sa.Column(sa.BigInteger, nullable=True)
    n_events = sa.Column(sa.Integer, nullable=False)
    acceptance_rate = sa.Column(sa.Float, nullable=False)
    mean_ire = sa.Column(sa.Float, nullable=False, comment="Mean IRE over the log-parameters")
    config = sa.Column(sa.JSON, nullable=False, comment="Echo of the run configuration")
