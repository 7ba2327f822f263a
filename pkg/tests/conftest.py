"""Pytest fixtures for tests."""
import numpy as np
import pandas as pd
import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import Session
from sqlalchemy.pool import StaticPool

from wif_smc.experiments.ou import SWEEP_COLUMNS
from wif_smc.fkengine import (
    BoxPotential,
    ConstantPotential,
    FiniteStateModel,
    FKModel,
    TransitionKind,
    constant_diffusion,
    uniform_grid,
)
from wif_smc.sqlmodels import Base


@pytest.fixture()
def rng():
    """Seeded random generator."""
    return np.random.default_rng(20240611)


@pytest.fixture()
def two_weights():
    """The two-particle weights used in the hand-checked examples."""
    return np.array([0.4, 0.6])


@pytest.fixture()
def three_weights():
    """Three weights with total excess one half."""
    return np.array([0.5, 1.0, 1.5])


@pytest.fixture()
def potentials_123():
    """Potential values (1, 2, 3)."""
    return np.array([1.0, 2.0, 3.0])


@pytest.fixture()
def engine():
    """In-memory SQLite engine with the result tables."""
    engine = create_engine(
        "sqlite://", poolclass=StaticPool, connect_args={"check_same_thread": False}
    )
    Base.metadata.create_all(engine)
    yield engine
    engine.dispose()


@pytest.fixture()
def db_session(engine):
    """Return a sqlalchemy session, which tears down everything properly post-test."""
    connection = engine.connect()
    # begin the nested transaction
    transaction = connection.begin()

    with Session(bind=connection) as session:
        yield session

        session.close()
        # roll back the broader transaction
        transaction.rollback()
        connection.close()


@pytest.fixture()
def frozen_pair_model():
    """Two motionless particles at x = 0 and x = 1 with potentials 0 and 2.

    Every stable scheme has overall rate one on this cloud until the first jump merges the
    particles.
    """

    def initial(n, rng):
        return np.array([[0.0], [1.0]])[:n]

    return FKModel(
        dim=1,
        initial=initial,
        drift=lambda x: np.zeros_like(x),
        diffusion=constant_diffusion(0.0),
        potential=BoxPotential(height=2.0, center=0.0, width=0.5),
        grid=uniform_grid(1.0, 0.25),
    )


@pytest.fixture()
def make_brownian_model():
    """Factory of standard Brownian motion models from zero with a constant potential."""

    def _make(value=0.0, horizon=1.0, delta=0.25):
        def initial(n, rng):
            return np.zeros((n, 1))

        return FKModel(
            dim=1,
            initial=initial,
            drift=lambda x: np.zeros_like(x),
            diffusion=constant_diffusion(1.0),
            potential=ConstantPotential(value),
            grid=uniform_grid(horizon, delta),
            transition=TransitionKind.euler,
        )

    return _make


@pytest.fixture()
def two_state_model():
    """Two-state chain with three potentials."""
    flip = np.array([[0.7, 0.3], [0.4, 0.6]])
    return FiniteStateModel(
        initial_probs=np.array([0.5, 0.5]),
        transitions=[flip, flip, flip],
        log_potentials=[
            np.log([0.2, 1.0]),
            np.log([0.9, 0.5]),
            np.log([0.3, 0.8]),
        ],
    )


@pytest.fixture()
def sweep_rows():
    """Four sweep rows of two schemes, one of them failed."""
    rows = [
        ["killing", 64, -4, 0, -1.25, 0.1, 0.2, 12, ""],
        ["killing", 64, -4, 1, np.nan, np.nan, np.nan, -1, "DegenerateFilter"],
        ["ssp-partition", 64, -4, 0, -1.5, 0.3, 0.4, 7, ""],
        ["ssp-partition", 64, -4, 1, -1.0, 0.5, 0.6, 9, ""],
    ]
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)
