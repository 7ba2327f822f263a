"""Particle marginal Metropolis-Hastings for the Cox process model."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.stats import norm

from wif_smc.exceptions import DegenerateFilterError
from wif_smc.experiments.cox import cox_model, cox_simulate
from wif_smc.experiments.diagnostics import chain_diagnostics
from wif_smc.fkengine import pf_run
from wif_smc.pydantic_models import ChainDiagnostics, PmmhConfig
from wif_smc.resampling import SchemeId

logger = logging.getLogger(__name__)

PARAMETERS = ("log_sigma", "log_alpha", "log_beta")
ADAPTED_SCALE = 2.38**2

LogLikelihood = Callable[[np.ndarray, int], float]


@dataclass(frozen=True)
class AdaptiveChain:
    """Output of :func:`adaptive_metropolis`."""

    samples: np.ndarray
    log_targets: np.ndarray
    accepted: np.ndarray

    @property
    def acceptance_rate(self) -> float:
        """Fraction of accepted proposals."""
        return float(self.accepted.mean())


def adaptive_metropolis(
    log_target: Callable[[np.ndarray], float],
    initial: Sequence[float],
    iterations: int,
    rng: np.random.Generator,
    initial_scale: float = 0.1,
    adapt_start: int = 200,
    jitter: float = 1e-6,
) -> AdaptiveChain:
    """Random-walk Metropolis whose proposal covariance follows the chain history.

    Before ``adapt_start`` the proposal is ``N(0, initial_scale**2 I)``; afterwards it is
    ``2.38**2 / d`` times the empirical covariance of all past states plus ``jitter`` on the
    diagonal. The target value of the current state is reused, as a pseudo-marginal sampler
    requires when the target is estimated.

    :param log_target: log target density, possibly noisy, -inf for rejection
    :param initial: starting point
    :param iterations: number of iterations, the starting point included
    :param rng: random generator for proposals and acceptances
    """
    current = np.asarray(initial, dtype=float)
    dim = current.size
    samples = np.empty((iterations, dim))
    log_targets = np.empty(iterations)
    accepted = np.zeros(iterations, dtype=bool)
    current_lt = log_target(current)
    samples[0], log_targets[0] = current, current_lt

    mean = current.copy()
    scatter = np.zeros((dim, dim))
    for i in range(1, iterations):
        if i < adapt_start:
            chol = initial_scale * np.eye(dim)
        else:
            cov = scatter / (i - 1) + jitter * np.eye(dim)
            chol = np.linalg.cholesky(ADAPTED_SCALE / dim * cov)
        proposal = current + chol @ rng.standard_normal(dim)
        proposal_lt = log_target(proposal)
        if np.log(rng.random()) < proposal_lt - current_lt:
            current, current_lt = proposal, proposal_lt
            accepted[i] = True
        samples[i], log_targets[i] = current, current_lt

        delta = current - mean
        mean += delta / (i + 1)
        scatter += np.outer(delta, current - mean)

    return AdaptiveChain(samples, log_targets, accepted)


@dataclass(frozen=True)
class PmmhResult:
    """Chain over the log-parameters and its diagnostics after burn-in."""

    chain: np.ndarray
    log_posteriors: np.ndarray
    accepted: np.ndarray
    diagnostics: ChainDiagnostics
    n_events: int

    def to_dict(self) -> dict:
        """JSON-ready summary."""
        return {
            "n_events": self.n_events,
            "posterior_mean": dict(zip(PARAMETERS, self.chain.mean(axis=0).tolist())),
            "diagnostics": self.diagnostics.model_dump(),
        }


def log_prior(theta: np.ndarray, variance: float) -> float:
    """Independent centred normal prior on each log-parameter."""
    return float(norm.logpdf(theta, loc=0.0, scale=np.sqrt(variance)).sum())


def particle_log_likelihood(config: PmmhConfig, events: np.ndarray) -> LogLikelihood:
    """Log normaliser estimate of the particle filter on the Cox model."""
    scheme = SchemeId.parse(config.scheme)

    def log_likelihood(theta: np.ndarray, seed: int) -> float:
        sigma, alpha, beta = np.exp(theta)
        params = config.params.model_copy(update={"sigma": sigma, "alpha": alpha, "beta": beta})
        model = cox_model(params, events, unit_potentials=config.unit_potentials)
        return pf_run(model, scheme, config.n_particles, seed).log_z

    return log_likelihood


def pmmh_run(
    config: PmmhConfig,
    seed: int,
    log_likelihood: Optional[LogLikelihood] = None,
) -> PmmhResult:
    """Run particle marginal Metropolis-Hastings on ``(log sigma, log alpha, log beta)``.

    Proposals and acceptances use the first of two streams spawned from ``seed``; particle
    filter seeds come from the second, so replacing the likelihood leaves the proposal
    schedule unchanged. A filter whose weights all vanish rejects the proposal.

    :param config: run configuration
    :param seed: seed of the run
    :param log_likelihood: replaces the particle filter likelihood, takes (theta, seed)
    """
    if config.events is not None:
        events = np.asarray(config.events, dtype=float)
    else:
        events = cox_simulate(config.params, config.data_seed).events
    if log_likelihood is None:
        log_likelihood = particle_log_likelihood(config, events)

    chain_seq, filter_seq = np.random.SeedSequence(seed).spawn(2)
    filter_rng = np.random.default_rng(filter_seq)

    def log_target(theta: np.ndarray) -> float:
        filter_seed = int(filter_rng.integers(np.iinfo(np.int64).max))
        try:
            value = log_likelihood(theta, filter_seed)
        except DegenerateFilterError as error:
            logger.warning(f"degenerate filter at theta={theta.tolist()}: {error}, rejecting")
            return -np.inf
        return log_prior(theta, config.prior_variance) + value

    if config.initial_theta is not None:
        initial = np.asarray(config.initial_theta, dtype=float)
    else:
        initial = np.log([config.params.sigma, config.params.alpha, config.params.beta])

    logger.info(
        f"pmmh {config.scheme} N={config.n_particles}: {config.iterations} iterations, "
        f"{events.size} events, seed={seed}"
    )
    chain = adaptive_metropolis(
        log_target,
        initial,
        config.iterations,
        np.random.default_rng(chain_seq),
        initial_scale=config.initial_scale,
        adapt_start=config.adapt_start,
        jitter=config.jitter,
    )
    kept = slice(config.burn_in, None)
    diagnostics = chain_diagnostics(
        chain.samples[kept], chain.accepted[kept], config.n_particles, PARAMETERS
    )
    logger.info(f"pmmh {config.scheme}: acceptance {diagnostics.acceptance_rate:.3f}")
    return PmmhResult(
        chain=chain.samples[kept],
        log_posteriors=chain.log_targets[kept],
        accepted=chain.accepted[kept],
        diagnostics=diagnostics,
        n_events=int(events.size),
    )


def replicate_seeds(seed: int, replicates: int) -> List[int]:
    """Seeds of the independent chains derived from ``seed``."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(replicates)]


def pmmh_replicates(
    config: PmmhConfig, seed: int, replicates: int, threads: int = 1
) -> List[PmmhResult]:
    """Independent chains with seeds from :func:`replicate_seeds`, in replicate order."""
    seeds = replicate_seeds(seed, replicates)
    if threads <= 1:
        return [pmmh_run(config, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: pmmh_run(config, s), seeds))
