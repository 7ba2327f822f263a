import numpy as np
import pytest
from scipy.signal import lfilter

from wif_smc.exceptions import ChainTooShortError
from wif_smc.experiments.diagnostics import (
    acf,
    batch_means_variance,
    chain_diagnostics,
    default_acf_lags,
)


def ar1(coefficient, size, rng, scale=1.0):
    return lfilter([1.0], [1.0, -coefficient], scale * rng.standard_normal(size))


class TestBatchMeans:
    """Tests for batch_means_variance."""

    def test_iid(self, rng):
        chain = rng.standard_normal(1_000_000)
        assert batch_means_variance(chain, batches=1000) == pytest.approx(1.0, rel=0.15)

    def test_ar1(self, rng):
        # unit marginal variance, asymptotic variance (1 + 0.5) / (1 - 0.5)
        chain = ar1(0.5, 1_000_000, rng, scale=np.sqrt(0.75))
        assert batch_means_variance(chain, batches=1000) == pytest.approx(3.0, rel=0.2)

    def test_constant(self):
        assert batch_means_variance(np.full(500, 2.5), batches=10) == 0.0

    def test_too_short(self):
        with pytest.raises(ChainTooShortError):
            batch_means_variance(np.zeros(100), batches=5)
        with pytest.raises(ChainTooShortError):
            batch_means_variance(np.zeros(5), batches=10)


class TestAcf:
    """Tests for the sample autocorrelation."""

    def test_iid(self, rng):
        chain = rng.standard_normal(100_000)
        values = acf(chain, [0, 1, 2, 3, 4, 5])
        assert values[0] == 1.0
        assert np.all(np.abs(values[1:]) < 4 / np.sqrt(chain.size))

    def test_ar1(self, rng):
        chain = ar1(0.8, 200_000, rng)
        lags = np.arange(1, 6)
        np.testing.assert_allclose(acf(chain, lags), 0.8**lags, atol=0.03)

    def test_constant(self):
        np.testing.assert_array_equal(acf(np.ones(10), [0, 1, 2]), [1.0, 0.0, 0.0])

    def test_invalid_lags(self):
        with pytest.raises(ChainTooShortError):
            acf(np.arange(10.0), [5])
        with pytest.raises(ChainTooShortError):
            acf(np.arange(10.0), [-1])

    def test_default_lags(self):
        np.testing.assert_array_equal(default_acf_lags(64), np.arange(0, 101, 10))
        assert default_acf_lags(10_000).max() == 10


class TestChainDiagnostics:
    """Tests for chain_diagnostics."""

    def test_summary(self, rng):
        chain = rng.standard_normal((4000, 3))
        accepted = rng.random(4000) < 0.25
        names = ["log_sigma", "log_alpha", "log_beta"]
        diagnostics = chain_diagnostics(chain, accepted, 32, names)
        assert diagnostics.parameters == names
        assert diagnostics.acceptance_rate == pytest.approx(accepted.mean())
        np.testing.assert_allclose(diagnostics.ire, 32 * np.array(diagnostics.asymptotic_variance))
        assert diagnostics.acf_lags == list(range(0, 201, 20))
        assert all(len(diagnostics.quantiles[name]) == 3 for name in names)
        assert all(abs(v - 1.0) < 0.6 for v in diagnostics.asymptotic_variance)

    def test_lags_limited_by_length(self, rng):
        diagnostics = chain_diagnostics(
            rng.standard_normal((50, 1)), np.ones(50, dtype=bool), 1, ["x"]
        )
        assert max(diagnostics.acf_lags) < 25
        assert diagnostics.acceptance_rate == 1.0
