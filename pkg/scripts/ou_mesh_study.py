""" Script to check the quadrature reference of the OU model against mesh refinement

1. Build the default OU model for a few grid steps
2. Compute logZ, filter and smoother means on a mesh, then on meshes with half the spacing
3. Print the changes, which should shrink towards zero

MESH_POINTS and MESH_HALF_WIDTH can be set in the environment.
"""
import os

import pandas as pd

from wif_smc.fkengine import grid_reference
from wif_smc.pydantic_models import MeshConfig, ModelConfig

points = int(os.getenv("MESH_POINTS", "501"))
half_width = float(os.getenv("MESH_HALF_WIDTH", "6"))
model_config = ModelConfig()

records = []
for delta_log2 in [-2, -4, -6]:
    model = model_config.build(delta_log2)
    mesh = MeshConfig(half_width=half_width, points=points).build(model_config)

    previous = None
    for _ in range(3):
        ref = grid_reference(model, mesh)
        record = {
            "delta_log2": delta_log2,
            "points": mesh.points,
            "logZ": ref.log_z,
            "filter_mean": ref.filter_mean,
            "smooth_mean": ref.smooth_mean,
        }
        if previous is not None:
            record["logZ_change"] = abs(ref.log_z - previous.log_z)
        records.append(record)
        print(f"{delta_log2=} points={mesh.points} logZ={ref.log_z:.10f}")

        previous = ref
        mesh = mesh.refined()

print(pd.DataFrame(records).to_string(index=False))
