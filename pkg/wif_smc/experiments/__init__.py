"""Experiment harnesses: Ornstein-Uhlenbeck sweep and Cox process PMMH."""

from .cox import CoxData, CoxIntensity, cox_model, cox_simulate
from .diagnostics import acf, batch_means_variance, chain_diagnostics, default_acf_lags
from .ou import (
    SWEEP_COLUMNS,
    BootstrapInterval,
    ou_sweep,
    paired_bootstrap_rmse,
    row_seed,
    summarise_sweep,
    sweep_references,
)
from .pmmh import PmmhResult, adaptive_metropolis, pmmh_replicates, pmmh_run, replicate_seeds
