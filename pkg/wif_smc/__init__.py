"""Weak-limit analysis of resampling schemes in particle filters."""

from .connection import DatabaseConnection
from .core import AncestorVector, Permutation, WeightVector, mean_partition, normalize
from .fkengine import FKModel, PFOutput, grid_reference, ou_model, pf_run
from .intensity import IntensityTable, intensity_table, numeric_intensity, overall_rate
from .limitproc import LimitPath, simulate_ensemble, simulate_limit
from .resampling import ALL_SCHEMES, SchemeId, exact_distribution, resample
from .sqlmodels import PmmhRunSQL, SweepRowSQL

__version__ = "0.1.0"
