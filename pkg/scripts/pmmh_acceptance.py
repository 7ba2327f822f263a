""" Script to compare PMMH efficiency across resampling schemes and particle counts

1. Simulate one Cox process data set
2. Run PMMH for each scheme and particle count on it
3. Print acceptance rate and mean IRE, and store the runs if DB_URL is set

The chain length can be set with ITERATIONS.
"""
import os

import numpy as np

from wif_smc.connection import DatabaseConnection
from wif_smc.experiments.cox import cox_simulate
from wif_smc.experiments.pmmh import pmmh_run
from wif_smc.pydantic_models import CoxParams, PmmhConfig
from wif_smc.write import insert_pmmh_run

iterations = int(os.getenv("ITERATIONS", "5000"))
url = os.getenv("DB_URL")
params = CoxParams()
events = cox_simulate(params, seed=0).events.tolist()
print(f"Simulated {len(events)} events")

connection = DatabaseConnection(url=url) if url is not None else None

for scheme in ["killing", "systematic-partition", "ssp-partition"]:
    for n_particles in [8, 16, 32]:
        config = PmmhConfig(
            params=params,
            events=events,
            iterations=iterations,
            burn_in=iterations // 10,
            n_particles=n_particles,
            scheme=scheme,
        )
        result = pmmh_run(config, seed=n_particles)
        diagnostics = result.diagnostics
        print(
            f"{scheme=} {n_particles=} acceptance={diagnostics.acceptance_rate:.3f} "
            f"mean_ire={np.mean(diagnostics.ire):.1f}"
        )

        if connection is not None:
            with connection.get_session() as session:
                insert_pmmh_run(session, result, config, seed=n_particles)
