"""
Functions for writing to the results database
"""

from .pmmh import insert_pmmh_run
from .sweep import insert_sweep_rows
