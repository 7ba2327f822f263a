"""
Functions for reading from the results database
"""

from .pmmh import get_pmmh_runs
from .sweep import get_sweep_rows
