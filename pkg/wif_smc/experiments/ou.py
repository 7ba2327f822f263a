"""Sweep of particle filter runs on the Ornstein-Uhlenbeck model with a box potential.

Each row of a sweep is one run for a (scheme, N, delta, repetition) key, seeded from a hash of
the key so that any row can be rerun on its own.
"""
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from wif_smc.exceptions import WifSmcError
from wif_smc.fkengine import FKModel, grid_reference, pf_run
from wif_smc.pydantic_models import MeshConfig, SweepConfig
from wif_smc.resampling import SchemeId

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "scheme",
    "N",
    "delta_log2",
    "rep",
    "logZ",
    "filter_est",
    "smooth_est",
    "resample_events",
    "error",
]


def row_seed(base_seed: int, scheme: str, n_particles: int, delta_log2: int, rep: int) -> int:
    """64-bit seed of one sweep row."""
    key = f"{base_seed}|{scheme}|{n_particles}|{delta_log2}|{rep}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def run_row(
    model: FKModel, base_seed: int, scheme: str, n_particles: int, delta_log2: int, rep: int
) -> dict:
    """Run one sweep row, recording library errors in the row instead of raising."""
    row = {"scheme": scheme, "N": n_particles, "delta_log2": delta_log2, "rep": rep}
    seed = row_seed(base_seed, scheme, n_particles, delta_log2, rep)
    try:
        out = pf_run(model, SchemeId.parse(scheme), n_particles, seed)
    except WifSmcError as error:
        logger.warning(f"sweep row {row} failed: {error.code}: {error}")
        row.update(
            logZ=np.nan,
            filter_est=np.nan,
            smooth_est=np.nan,
            resample_events=-1,
            error=error.code,
        )
        return row
    row.update(
        logZ=out.log_z,
        filter_est=out.filter_estimate,
        smooth_est=out.smooth_estimate,
        resample_events=out.resample_events,
        error="",
    )
    return row


def ou_sweep(config: SweepConfig, threads: int = 1) -> pd.DataFrame:
    """Run every (scheme, N, delta, repetition) of the sweep.

    :param config: sweep configuration
    :param threads: worker threads, which never change the rows
    :return: one row per run, in key order, with the columns of ``SWEEP_COLUMNS``
    """
    models = {d: config.model.build(d) for d in config.delta_log2}
    keys = sweep_keys(config)
    logger.info(f"ou_sweep: {len(keys)} runs, base seed {config.base_seed}, {threads} threads")

    def run(key):
        scheme, n, d, rep = key
        return run_row(models[d], config.base_seed, scheme, n, d, rep)

    if threads <= 1:
        rows = [run(key) for key in keys]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, keys))
    failed = sum(1 for row in rows if row["error"])
    logger.info(f"ou_sweep: finished, {failed} failed rows")
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def sweep_references(config: SweepConfig, mesh: Optional[MeshConfig] = None) -> pd.DataFrame:
    """Quadrature reference values for each grid step of the sweep."""
    mesh = MeshConfig() if mesh is None else mesh
    records = []
    for d in config.delta_log2:
        ref = grid_reference(config.model.build(d), mesh.build(config.model))
        records.append(
            {
                "delta_log2": d,
                "ref_logZ": ref.log_z,
                "ref_filter": ref.filter_mean,
                "ref_smooth": ref.smooth_mean,
            }
        )
    return pd.DataFrame(records)


def summarise_sweep(rows: pd.DataFrame, references: pd.DataFrame) -> pd.DataFrame:
    """RMSE tables against the quadrature references.

    The relative normaliser is ``exp(logZ - ref_logZ)`` with true value one.

    :param rows: output of :func:`ou_sweep`
    :param references: output of :func:`sweep_references`
    """
    ok = rows[rows["error"].fillna("") == ""].merge(references, on="delta_log2")
    ok = ok.assign(
        rel_err=np.exp(ok["logZ"] - ok["ref_logZ"]) - 1.0,
        filter_err=ok["filter_est"] - ok["ref_filter"],
        smooth_err=ok["smooth_est"] - ok["ref_smooth"],
    )
    grouped = ok.groupby(["scheme", "N", "delta_log2"], sort=True)
    summary = grouped.agg(
        reps=("rep", "size"),
        mean_logZ=("logZ", "mean"),
        sd_logZ=("logZ", "std"),
        ref_logZ=("ref_logZ", "first"),
        rmse_normaliser=("rel_err", lambda e: float(np.sqrt(np.mean(e**2)))),
        rmse_filter=("filter_err", lambda e: float(np.sqrt(np.mean(e**2)))),
        rmse_smooth=("smooth_err", lambda e: float(np.sqrt(np.mean(e**2)))),
        mean_resample_events=("resample_events", "mean"),
    ).reset_index()
    summary["se_logZ"] = summary["sd_logZ"] / np.sqrt(summary["reps"])
    summary["sqrtN_rmse_normaliser"] = np.sqrt(summary["N"]) * summary["rmse_normaliser"]
    return summary


@dataclass(frozen=True)
class BootstrapInterval:
    """Bootstrap interval of ``RMSE(a) - RMSE(b)``."""

    difference: float
    lower: float
    upper: float

    @property
    def a_not_better(self) -> bool:
        """Whether the interval lies at or above zero, so ``a`` is no more accurate."""
        return self.lower >= 0.0


def paired_bootstrap_rmse(
    rows: pd.DataFrame,
    scheme_a: str,
    scheme_b: str,
    reference_log_z: float,
    n_particles: int,
    delta_log2: int,
    resamples: int = 2000,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapInterval:
    """Percentile bootstrap of the difference in relative-normaliser RMSE.

    Rows of the two schemes are paired by repetition index and resampled together.
    """
    errors: Dict[str, pd.Series] = {}
    for scheme in (scheme_a, scheme_b):
        part = rows[
            (rows["scheme"] == scheme)
            & (rows["N"] == n_particles)
            & (rows["delta_log2"] == delta_log2)
            & (rows["error"].fillna("") == "")
        ]
        errors[scheme] = (np.exp(part["logZ"] - reference_log_z) - 1.0).set_axis(part["rep"])
    paired = pd.concat(errors, axis=1, join="inner")
    if paired.empty:
        raise ValueError(f"no paired rows for {scheme_a} and {scheme_b}")
    sq = paired.to_numpy() ** 2

    def rmse_gap(sample: np.ndarray) -> float:
        return float(np.sqrt(sample[:, 0].mean()) - np.sqrt(sample[:, 1].mean()))

    rng = np.random.default_rng(seed)
    picks = rng.integers(0, sq.shape[0], size=(resamples, sq.shape[0]))
    gaps = np.array([rmse_gap(sq[idx]) for idx in picks])
    tail = 100.0 * (1.0 - level) / 2.0
    lower, upper = np.percentile(gaps, [tail, 100.0 - tail])
    return BootstrapInterval(rmse_gap(sq), float(lower), float(upper))


def sweep_keys(config: SweepConfig) -> List[tuple]:
    """All (scheme, N, delta_log2, rep) keys in row order."""
    return list(
        product(config.schemes, config.n_particles, config.delta_log2, range(config.repetitions))
    )
