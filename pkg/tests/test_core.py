import numpy as np
import pytest

from wif_smc.core import (
    AncestorVector,
    EventSignature,
    Permutation,
    apply_ancestors,
    mean_partition,
    normalize,
)
from wif_smc.exceptions import AllZeroWeightsError, IndexOutOfRangeError, NegativeWeightError


class TestNormalize:
    """Tests for normalize and WeightVector."""

    def test_uniform(self):
        weights = normalize([2, 2, 2, 2])
        np.testing.assert_allclose(weights.w, [0.25] * 4)
        np.testing.assert_allclose(weights.eps, [0.0] * 4)
        np.testing.assert_allclose(weights.csum, [0.0] * 5)
        assert weights.is_uniform

    def test_two_weights(self, two_weights):
        weights = normalize(two_weights)
        np.testing.assert_allclose(weights.w, [0.4, 0.6])
        np.testing.assert_allclose(weights.eps, [-0.2, 0.2], atol=1e-12)
        np.testing.assert_allclose(weights.csum, [0.0, 0.2, 0.0], atol=1e-12)
        np.testing.assert_allclose(weights.cumdist, [0.0, 0.4, 1.0])

    def test_all_zero(self):
        with pytest.raises(AllZeroWeightsError):
            normalize([0, 0, 0])

    def test_negative(self):
        with pytest.raises(NegativeWeightError):
            normalize([1.0, -0.5])

    def test_error_codes(self):
        with pytest.raises(AllZeroWeightsError) as error:
            normalize([0.0])
        assert error.value.code == "AllZeroWeights"

    def test_random_invariants(self, rng):
        for _ in range(100):
            n = rng.integers(1, 20)
            weights = normalize(rng.exponential(size=n))
            assert abs(weights.w.sum() - 1.0) < 1e-12
            assert abs(weights.eps.sum()) < 1e-12
            assert abs(weights.csum[0]) < 1e-12 and abs(weights.csum[-1]) < 1e-12
            assert np.all(np.diff(weights.cumdist) >= 0)
            np.testing.assert_allclose(np.diff(weights.cumdist), weights.w, atol=1e-12)
            n_ = weights.n
            np.testing.assert_allclose(
                weights.cumdist, (np.arange(n_ + 1) - weights.csum) / n_, atol=1e-12
            )

    def test_inverse_cdf(self):
        weights = normalize([0.25, 0.0, 0.75])
        np.testing.assert_array_equal(weights.inverse_cdf([0.1, 0.25, 0.26, 1.0]), [0, 0, 2, 2])

    def test_nearly_constant_partition(self):
        assert normalize([0.9, 0.95, 1.05, 1.1]).satisfies_nearly_constant_partition()
        assert not normalize([1.1, 0.9, 1.0, 1.0]).satisfies_nearly_constant_partition()
        assert not normalize([0.0, 0.0, 0.0, 1.0]).satisfies_nearly_constant_partition()


class TestMeanPartition:
    """Tests for mean_partition."""

    def test_all_equal(self):
        perm = mean_partition([5, 5, 5])
        np.testing.assert_array_equal(perm.perm, [0, 1, 2])
        assert perm.m == 3

    def test_decreasing(self):
        u = [-1.0, -2.0, -3.0]
        perm = mean_partition(u)
        assert set(perm.perm[: perm.m]) == {1, 2}
        assert perm.is_mean_partition_of(u)

    def test_five_values(self):
        u = [3, 1, 2, 5, 1]
        perm = mean_partition(u)
        assert set(perm.perm[:3]) == {1, 2, 4}
        assert perm.m == 3
        assert perm.is_mean_partition_of(u)

    def test_random_vectors(self, rng):
        for _ in range(200):
            u = rng.normal(size=rng.integers(1, 30))
            perm = mean_partition(u)
            assert perm.is_mean_partition_of(u)
            assert sorted(perm.perm.tolist()) == list(range(len(u)))
            assert np.all(u[perm.perm[: perm.m]] <= u.mean())

    def test_deterministic(self):
        u = [0.3, 2.0, -1.0, 0.5, 4.0, 0.0]
        np.testing.assert_array_equal(mean_partition(u).perm, mean_partition(u).perm)

    def test_not_a_permutation(self):
        with pytest.raises(ValueError, match="not a permutation"):
            Permutation(np.array([0, 0, 1]))


class TestAncestors:
    """Tests for AncestorVector and apply_ancestors."""

    def test_identity(self):
        x = np.array([[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(apply_ancestors(x, AncestorVector.identity(3)), x)

    def test_single_event(self):
        a = AncestorVector.single_event(3, 2, 0)
        np.testing.assert_array_equal(a.a, [0, 0, 1])
        x = np.array([[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(apply_ancestors(x, a), [[1.0], [1.0], [2.0]])
        assert a.signature() == EventSignature(eliminated=2, duplicated=0)

    def test_full_duplication(self):
        x = np.array([10.0, 20.0])
        np.testing.assert_array_equal(apply_ancestors(x, AncestorVector([1, 1])), [20.0, 20.0])

    def test_offspring(self, rng):
        for _ in range(50):
            n = rng.integers(1, 10)
            a = AncestorVector(rng.integers(0, n, size=n))
            assert a.offspring.sum() == n

    def test_signature_of_identity_and_multiple_events(self):
        assert AncestorVector.identity(4).signature() is None
        assert AncestorVector([0, 0, 1, 1]).signature() is None

    def test_event_signature_round_trip(self):
        event = EventSignature(eliminated=1, duplicated=3)
        assert event.ancestors(4).signature() == event

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRangeError):
            AncestorVector([0, 3, 1])
        with pytest.raises(IndexOutOfRangeError):
            apply_ancestors(np.zeros(2), AncestorVector.identity(3))
        with pytest.raises(IndexOutOfRangeError):
            AncestorVector.single_event(3, 1, 1)
