"""MCMC chain diagnostics: batch means, autocorrelations, inverse relative efficiency."""
import logging
from typing import Optional, Sequence

import numpy as np

from wif_smc.exceptions import ChainTooShortError
from wif_smc.pydantic_models import ChainDiagnostics

logger = logging.getLogger(__name__)

MIN_BATCHES = 10


def batch_means_variance(chain: Sequence[float], batches: int = 100) -> float:
    """Batch-means estimate of the asymptotic variance of the chain mean.

    The chain is cut into ``batches`` consecutive batches of equal size, dropping the
    remainder. The estimate is the batch size times the variance of the batch means.

    :param chain: one-dimensional chain
    :param batches: number of batches, at least 10
    :return: asymptotic variance estimate
    """
    chain = np.asarray(chain, dtype=float).ravel()
    if batches < MIN_BATCHES:
        raise ChainTooShortError(f"need at least {MIN_BATCHES} batches, got {batches}")
    size = chain.size // batches
    if size < 1:
        raise ChainTooShortError(f"chain of length {chain.size} cannot fill {batches} batches")
    means = chain[: size * batches].reshape(batches, size).mean(axis=1)
    return float(size * means.var(ddof=1))


def acf(chain: Sequence[float], lags: Sequence[int]) -> np.ndarray:
    """Sample autocorrelations at the given lags.

    :param chain: one-dimensional chain
    :param lags: nonnegative lags below half the chain length
    """
    chain = np.asarray(chain, dtype=float).ravel()
    lags = np.asarray(lags, dtype=int)
    if lags.size and (lags.min() < 0 or lags.max() >= chain.size / 2):
        raise ChainTooShortError(f"lags must lie in [0, {chain.size / 2}) for this chain")
    centred = chain - chain.mean()
    c0 = np.dot(centred, centred) / chain.size
    out = np.empty(lags.size)
    for i, lag in enumerate(lags):
        if lag == 0:
            out[i] = 1.0
        elif c0 == 0.0:
            out[i] = 0.0
        else:
            out[i] = np.dot(centred[: chain.size - lag], centred[lag:]) / chain.size / c0
    return out


def default_acf_lags(n_particles: int, scale: int = 6400, points: int = 11) -> np.ndarray:
    """Lags up to ``scale / n_particles``, so cheaper filters are inspected further out."""
    max_lag = max(points - 1, int(round(scale / n_particles)))
    return np.unique(np.linspace(0, max_lag, points).round().astype(int))


def chain_diagnostics(
    chain: np.ndarray,
    accepted: np.ndarray,
    n_particles: int,
    parameters: Sequence[str],
    batches: Optional[int] = None,
    lags: Optional[Sequence[int]] = None,
) -> ChainDiagnostics:
    """Diagnostics of a post burn-in chain.

    Asymptotic variances are computed on standardised coordinates, so the inverse relative
    efficiency ``N * variance`` is comparable across parameters.

    :param chain: (iterations, d) samples
    :param accepted: boolean acceptance indicator of each iteration
    :param n_particles: particle count, the cost of one iteration
    :param parameters: names of the d coordinates
    :param batches: batch count, about the square root of the length by default
    :param lags: autocorrelation lags, :func:`default_acf_lags` by default
    """
    chain = np.asarray(chain, dtype=float)
    length = chain.shape[0]
    if batches is None:
        batches = max(MIN_BATCHES, int(np.sqrt(length)))
    if lags is None:
        lags = default_acf_lags(n_particles)
    lags = np.asarray([lag for lag in lags if lag < length / 2], dtype=int)

    variances, acfs, quantiles = [], {}, {}
    for j, name in enumerate(parameters):
        column = chain[:, j]
        sd = column.std()
        standardised = (column - column.mean()) / sd if sd > 0 else np.zeros(length)
        variances.append(batch_means_variance(standardised, batches))
        acfs[name] = acf(column, lags).tolist()
        quantiles[name] = np.quantile(column, [0.05, 0.5, 0.95]).tolist()

    return ChainDiagnostics(
        acceptance_rate=float(np.mean(accepted)) if len(accepted) else 0.0,
        parameters=list(parameters),
        asymptotic_variance=variances,
        ire=[n_particles * v for v in variances],
        acf_lags=lags.tolist(),
        acf=acfs,
        quantiles=quantiles,
    )
