import numpy as np
import pytest

from wif_smc.exceptions import DegenerateFilterError
from wif_smc.experiments.diagnostics import batch_means_variance
from wif_smc.experiments.pmmh import (
    PARAMETERS,
    adaptive_metropolis,
    log_prior,
    pmmh_replicates,
    pmmh_run,
)
from wif_smc.pydantic_models import CoxParams, PmmhConfig


@pytest.fixture()
def small_config():
    """Short chain on a short observation window."""
    return PmmhConfig(
        params=CoxParams(horizon=5.0, delta=0.05),
        data_seed=3,
        iterations=60,
        burn_in=10,
        n_particles=8,
        adapt_start=20,
    )


class TestAdaptiveMetropolis:
    """Tests for the adaptive random-walk sampler."""

    def test_standard_normal(self):
        chain = adaptive_metropolis(
            lambda th: -0.5 * float(th @ th),
            np.zeros(2),
            20_000,
            np.random.default_rng(1),
            initial_scale=1.0,
        )
        kept = chain.samples[2000:]
        np.testing.assert_allclose(kept.mean(axis=0), 0.0, atol=0.15)
        np.testing.assert_allclose(kept.var(axis=0), 1.0, rtol=0.2)
        assert 0.1 < chain.acceptance_rate < 0.8

    def test_rejects_impossible_proposals(self):
        chain = adaptive_metropolis(
            lambda th: 0.0 if np.all(th > 0) else -np.inf,
            np.ones(1),
            2000,
            np.random.default_rng(2),
        )
        assert np.all(chain.samples > 0)
        assert np.all(chain.log_targets == 0.0)

    def test_deterministic(self):
        def run():
            return adaptive_metropolis(
                lambda th: -float(th @ th), np.ones(3), 500, np.random.default_rng(3)
            )

        np.testing.assert_array_equal(run().samples, run().samples)


class TestPmmh:
    """Tests for pmmh_run."""

    def test_log_prior(self):
        expected = -1.5 * np.log(2 * np.pi * 2.5)
        assert log_prior(np.zeros(3), 2.5) == pytest.approx(expected)

    def test_flat_likelihood_is_the_prior_chain(self, small_config):
        seed = 17
        result = pmmh_run(small_config, seed, log_likelihood=lambda th, s: 0.0)
        chain_seq = np.random.SeedSequence(seed).spawn(2)[0]
        expected = adaptive_metropolis(
            lambda th: log_prior(th, small_config.prior_variance),
            np.log([0.3, 1.0, 0.5]),
            small_config.iterations,
            np.random.default_rng(chain_seq),
            initial_scale=small_config.initial_scale,
            adapt_start=small_config.adapt_start,
            jitter=small_config.jitter,
        )
        np.testing.assert_array_equal(result.chain, expected.samples[small_config.burn_in :])
        np.testing.assert_array_equal(
            result.log_posteriors, expected.log_targets[small_config.burn_in :]
        )

    def test_particle_chain(self, small_config):
        result = pmmh_run(small_config, seed=4)
        assert result.chain.shape == (50, 3)
        assert np.all(np.isfinite(result.log_posteriors))
        summary = result.to_dict()
        assert set(summary["posterior_mean"]) == set(PARAMETERS)
        assert summary["n_events"] == result.n_events
        assert 0.0 <= result.diagnostics.acceptance_rate <= 1.0

    def test_given_events(self, small_config):
        config = small_config.model_copy(update={"events": [0.5, 1.25, 4.0]})
        assert pmmh_run(config, seed=5).n_events == 3

    def test_degenerate_filter_rejects(self, small_config):
        def failing(theta, seed):
            raise DegenerateFilterError(0)

        result = pmmh_run(small_config, seed=6, log_likelihood=failing)
        assert result.diagnostics.acceptance_rate == 0.0
        np.testing.assert_array_equal(result.chain, np.tile(np.log([0.3, 1.0, 0.5]), (50, 1)))

    def test_initial_theta(self, small_config):
        config = small_config.model_copy(update={"initial_theta": [0.0, 0.0, 0.0]})

        def failing(theta, seed):
            raise DegenerateFilterError(0)

        result = pmmh_run(config, seed=7, log_likelihood=failing)
        np.testing.assert_array_equal(result.chain, np.zeros((50, 3)))

    def test_replicates_threads(self, small_config):
        serial = pmmh_replicates(small_config, seed=8, replicates=2)
        parallel = pmmh_replicates(small_config, seed=8, replicates=2, threads=2)
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.chain, b.chain)
        assert not np.array_equal(serial[0].chain, serial[1].chain)


@pytest.mark.slow
class TestPriorOracle:
    """With unit potentials the chain must sample the prior."""

    def test_prior_moments(self):
        config = PmmhConfig(
            params=CoxParams(horizon=1.0, delta=0.1),
            events=[],
            iterations=20_000,
            burn_in=2000,
            n_particles=4,
            unit_potentials=True,
        )
        result = pmmh_run(config, seed=11)
        np.testing.assert_allclose(result.chain.mean(axis=0), 0.0, atol=0.3)
        np.testing.assert_allclose(result.chain.var(axis=0), config.prior_variance, rtol=0.25)


@pytest.mark.slow
class TestAcceptanceBySchemes:
    """On a 20 unit window with N = 32, SSP with the mean partition accepts more than residual."""

    def test_ssp_partition_accepts_more_than_residual(self):
        accepted = {}
        for scheme in ("ssp-partition", "residual"):
            config = PmmhConfig(
                params=CoxParams(horizon=20.0, delta=0.05),
                data_seed=5,
                iterations=2000,
                burn_in=500,
                n_particles=32,
                adapt_start=200,
                scheme=scheme,
            )
            accepted[scheme] = pmmh_run(config, seed=12).accepted.astype(float)

        gap = accepted["ssp-partition"].mean() - accepted["residual"].mean()
        stderr = np.sqrt(
            sum(batch_means_variance(a, batches=20) / a.size for a in accepted.values())
        )
        # one-sided 95% bound on the acceptance gap
        assert gap - 1.645 * stderr > 0.0, (gap, stderr)
