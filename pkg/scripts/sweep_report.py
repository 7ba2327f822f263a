""" Script to summarise an OU sweep stored in the results database

Reads the rows of one run label, recomputes the quadrature references for the default model
and prints the RMSE table. Every scheme is then compared with killing by a paired bootstrap
of the normaliser RMSE.

The database url is taken from DB_URL and the run label from RUN_LABEL.
"""
import os

import pandas as pd

from wif_smc.connection import DatabaseConnection
from wif_smc.experiments.ou import paired_bootstrap_rmse, summarise_sweep, sweep_references
from wif_smc.pydantic_models import SweepConfig
from wif_smc.read import get_sweep_rows

url = os.getenv("DB_URL")
run_label = os.getenv("RUN_LABEL", "ou-sweep")

connection = DatabaseConnection(url=url)
with connection.get_session() as session:
    rows = get_sweep_rows(session, run_label=run_label)

print(f"Found {len(rows)} rows for run {run_label}")
if rows.empty:
    raise SystemExit(1)

config = SweepConfig(
    schemes=sorted(rows["scheme"].unique()),
    n_particles=sorted(int(n) for n in rows["N"].unique()),
    delta_log2=sorted(int(d) for d in rows["delta_log2"].unique()),
    run_label=run_label,
)
references = sweep_references(config)
summary = summarise_sweep(rows, references)
print(summary.to_string(index=False))

# compare against killing
comparisons = []
for scheme in config.schemes:
    if scheme == "killing" or "killing" not in config.schemes:
        continue
    for n in config.n_particles:
        for d in config.delta_log2:
            reference = references.loc[references["delta_log2"] == d, "ref_logZ"].iloc[0]
            interval = paired_bootstrap_rmse(rows, "killing", scheme, reference, n, d)
            comparisons.append(
                {
                    "scheme": scheme,
                    "N": n,
                    "delta_log2": d,
                    "rmse_gap": interval.difference,
                    "lower": interval.lower,
                    "upper": interval.upper,
                    "killing_not_better": interval.a_not_better,
                }
            )

print(pd.DataFrame(comparisons).to_string(index=False))
