import numpy as np
import pytest

from wif_smc.core import EventSignature, Permutation
from wif_smc.exceptions import InvalidOrderError, NoIntensityLimitError
from wif_smc.intensity import (
    PotentialValues,
    check_unbiased_identity,
    default_order,
    has_intensity_limit,
    intensity_table,
    jump_distribution,
    marginal_rates,
    numeric_intensity,
    overall_rate,
    rate_ordering,
    richardson,
)
from wif_smc.resampling import SchemeId, SchemeKind, exact_distribution

CLOSED_FORM = [
    SchemeId.parse(name)
    for name in (
        "killing",
        "stratified-partition",
        "systematic-partition",
        "ssp-partition",
        "symmetrised-systematic",
    )
]


def random_potentials(rng, low=2, high=8):
    return rng.uniform(0.0, 1.0, size=int(rng.integers(low, high + 1)))


class TestClosedForms:
    """Closed-form intensity tables on hand-checked examples."""

    def test_killing(self, potentials_123):
        table = intensity_table(SchemeId.parse("killing"), potentials_123)
        assert table.total == pytest.approx(2.0)
        assert table.as_dict() == pytest.approx(
            {
                (0, 0, 2): 1 / 3,
                (0, 2, 2): 1 / 3,
                (0, 1, 0): 2 / 3,
                (0, 1, 1): 2 / 3,
            }
        )

    def test_systematic_with_order(self, potentials_123):
        order = Permutation(np.array([1, 2, 0]))
        table = intensity_table(SchemeId.parse("systematic-partition"), potentials_123, order)
        assert table.as_dict() == pytest.approx({(0, 1, 0): 1.0})
        assert table.by_signature() == pytest.approx({EventSignature(2, 0): 1.0})
        assert table.total == pytest.approx(1.0)

    def test_ssp(self, potentials_123):
        table = intensity_table(SchemeId.parse("ssp-partition"), potentials_123)
        assert table.by_signature() == pytest.approx({EventSignature(2, 0): 1.0})
        assert table.total == pytest.approx(1.0)

    @pytest.mark.parametrize("scheme", CLOSED_FORM, ids=str)
    def test_constant_potentials(self, scheme):
        table = intensity_table(scheme, [0.7, 0.7, 0.7])
        assert len(table) == 0
        assert table.total == 0.0

    def test_stratified_depends_on_order(self, potentials_123):
        scheme = SchemeId.parse("stratified-partition")
        reverse = Permutation(np.array([2, 1, 0]))
        rotated = Permutation(np.array([1, 2, 0]))
        assert overall_rate(scheme, potentials_123, reverse) == pytest.approx(2.0)
        assert overall_rate(scheme, potentials_123, rotated) == pytest.approx(1.0)
        assert intensity_table(scheme, potentials_123, rotated).total == pytest.approx(1.0)

    def test_systematic_order_free(self, potentials_123):
        scheme = SchemeId.parse("systematic-partition")
        for perm in ([2, 1, 0], [1, 2, 0]):
            rate = overall_rate(scheme, potentials_123, Permutation(np.array(perm)))
            assert rate == pytest.approx(1.0)

    def test_default_order_is_mean_partition_of_minus_v(self, rng):
        for _ in range(50):
            v = random_potentials(rng)
            assert default_order(v).is_mean_partition_of(-v)

    def test_invalid_order(self, potentials_123):
        with pytest.raises(InvalidOrderError):
            intensity_table(
                SchemeId.parse("systematic-partition"),
                potentials_123,
                Permutation.identity(3),
            )

    @pytest.mark.parametrize(
        "name", ["multinomial", "residual", "stratified", "systematic", "ssp"]
    )
    def test_no_closed_form(self, name, potentials_123):
        scheme = SchemeId.parse(name)
        assert not has_intensity_limit(scheme)
        with pytest.raises(NoIntensityLimitError):
            intensity_table(scheme, potentials_123)

    def test_records(self, potentials_123):
        records = intensity_table(SchemeId.parse("ssp-partition"), potentials_123).to_records()
        assert records == [
            {"eliminated": 2, "duplicated": 0, "ancestors": [0, 0, 1], "rate": 1.0}
        ]

    def test_potential_values(self):
        pot = PotentialValues([1.0, 2.0, 6.0])
        assert pot.vbar == pytest.approx(3.0)
        assert pot.vmin == 1.0
        assert not pot.is_constant


class TestIdentities:
    """Identities that hold for every closed-form table."""

    @pytest.mark.parametrize("scheme", CLOSED_FORM, ids=str)
    def test_total_is_sum_of_rates(self, scheme, rng):
        for _ in range(200):
            v = random_potentials(rng)
            table = intensity_table(scheme, v)
            assert table.total == pytest.approx(table.rates.sum(), abs=1e-10)
            assert np.all(table.rates >= 0)

    @pytest.mark.parametrize("scheme", CLOSED_FORM, ids=str)
    def test_asymptotically_unbiased(self, scheme, rng):
        for _ in range(1000):
            v = random_potentials(rng)
            residual = check_unbiased_identity(intensity_table(scheme, v), v)
            np.testing.assert_allclose(residual, 0.0, atol=1e-10)

    def test_killing_residual_by_hand(self, potentials_123):
        table = intensity_table(SchemeId.parse("killing"), potentials_123)
        lhs = check_unbiased_identity(table, potentials_123) + (2.0 - potentials_123)
        assert lhs[2] == pytest.approx(-1.0)

    def test_constant_residual(self):
        table = intensity_table(SchemeId.parse("killing"), [1.0, 1.0])
        np.testing.assert_array_equal(check_unbiased_identity(table, [1.0, 1.0]), [0.0, 0.0])

    def test_ssp_and_systematic_share_marginals(self, rng):
        ssp = SchemeId.parse("ssp-partition")
        systematic = SchemeId.parse("systematic-partition")
        for _ in range(1000):
            v = random_potentials(rng)
            assert overall_rate(ssp, v) == pytest.approx(overall_rate(systematic, v), abs=1e-12)
            a = marginal_rates(intensity_table(ssp, v))
            b = marginal_rates(intensity_table(systematic, v))
            np.testing.assert_allclose(a.elimination, b.elimination, atol=1e-10)
            np.testing.assert_allclose(a.duplication, b.duplication, atol=1e-10)
            excess = np.clip(v - v.mean(), 0.0, None)
            np.testing.assert_allclose(a.elimination, excess, atol=1e-10)

    def test_symmetrised_equals_ssp(self, rng):
        for _ in range(200):
            v = random_potentials(rng)
            ssp = intensity_table(SchemeId.parse("ssp-partition"), v)
            sym = intensity_table(SchemeId.parse("symmetrised-systematic"), v)
            assert ssp.max_difference(sym) == 0.0

    def test_jump_distribution(self, potentials_123):
        dist = jump_distribution(intensity_table(SchemeId.parse("killing"), potentials_123))
        assert dist.probabilities.sum() == pytest.approx(1.0)
        assert dist.probability((0, 1, 0)) == pytest.approx(1 / 3)

    def test_jump_distribution_of_empty_table(self):
        with pytest.raises(ValueError):
            jump_distribution(intensity_table(SchemeId.parse("killing"), [1.0, 1.0]))


class TestRateOrdering:
    """Ordering of the overall rates."""

    def test_killing_larger(self):
        ordering = rate_ordering([3.0, 2.5, 1.0], Permutation.identity(3))
        assert ordering.killing == pytest.approx(7 / 3)
        assert ordering.stratified == pytest.approx(2.0)
        assert ordering.systematic_ssp == pytest.approx(7 / 6)
        assert ordering.larger == "killing"

    def test_stratified_larger(self):
        ordering = rate_ordering([3.0, 1.5, 1.0], Permutation.identity(3))
        assert ordering.killing == pytest.approx(5 / 3)
        assert ordering.stratified == pytest.approx(2.0)
        assert ordering.systematic_ssp == pytest.approx(7 / 6)
        assert ordering.larger == "stratified"

    def test_constant(self):
        ordering = rate_ordering([2.0, 2.0, 2.0])
        assert (ordering.killing, ordering.stratified, ordering.systematic_ssp) == (0, 0, 0)

    def test_random_potentials(self, rng):
        for _ in range(10_000):
            ordering = rate_ordering(random_potentials(rng))
            assert ordering.killing_dominates_systematic
            assert ordering.stratified_dominates_systematic

    def test_invalid_order(self):
        with pytest.raises(InvalidOrderError):
            rate_ordering([1.0, 2.0, 3.0], Permutation.identity(3))


class TestNumericIntensity:
    """Finite-step estimates and their convergence to the closed forms."""

    def test_killing_small_delta(self, potentials_123):
        scheme = SchemeId.parse("killing")
        numeric = numeric_intensity(scheme, potentials_123, 1e-4)
        closed = intensity_table(scheme, potentials_123)
        assert numeric.max_difference(closed) < 5e-4

    @pytest.mark.parametrize("scheme", CLOSED_FORM, ids=str)
    def test_constant_potentials(self, scheme):
        table = numeric_intensity(scheme, [0.3, 0.3, 0.3], 0.5)
        assert table.total == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("scheme", CLOSED_FORM, ids=str)
    def test_matches_closed_form(self, scheme):
        rng = np.random.default_rng(11)
        for _ in range(20):
            v = random_potentials(rng, 2, 5)
            numeric = numeric_intensity(scheme, v, 2.0**-20)
            assert numeric.max_difference(intensity_table(scheme, v)) < 1e-4

    @pytest.mark.parametrize("scheme", CLOSED_FORM, ids=str)
    def test_first_order_convergence(self, scheme):
        upper = 2.5 if scheme.kind is SchemeKind.killing else 4.5
        rng = np.random.default_rng(12)
        for _ in range(10):
            v = random_potentials(rng, 2, 4)
            closed = intensity_table(scheme, v)
            coarse = numeric_intensity(scheme, v, 2.0**-14).max_difference(closed)
            fine = numeric_intensity(scheme, v, 2.0**-15).max_difference(closed)
            assert 1.5 <= coarse / fine <= upper

    @pytest.mark.parametrize("scheme", CLOSED_FORM, ids=str)
    def test_richardson_sharpens(self, scheme):
        v = [1.0, 1.7, 3.0]
        closed = intensity_table(scheme, v)
        coarse = numeric_intensity(scheme, v, 2.0**-8)
        fine = numeric_intensity(scheme, v, 2.0**-9)
        extrapolated = richardson(coarse, fine)
        assert extrapolated.max_difference(closed) < fine.max_difference(closed)

    @pytest.mark.parametrize("name", ["multinomial", "residual"])
    def test_unstable_schemes_diverge(self, name):
        scheme = SchemeId.parse(name)
        for exponent in range(4, 17, 2):
            delta = 2.0**-exponent
            off_mass = numeric_intensity(scheme, [1.0, 2.0, 3.0], delta).total * delta
            assert off_mass >= 0.2

    def test_uniform_multinomial_mass(self):
        dist = exact_distribution(SchemeId.parse("multinomial"), [1.0, 1.0, 1.0])
        assert dist.off_identity_mass() == pytest.approx(1 - 1 / 27)

    @pytest.mark.parametrize("scheme", CLOSED_FORM, ids=str)
    def test_stable_off_identity_mass_scales_with_delta(self, scheme, potentials_123):
        rate = overall_rate(scheme, potentials_123)
        for exponent in (10, 12, 14):
            delta = 2.0**-exponent
            off_mass = numeric_intensity(scheme, potentials_123, delta).total * delta
            assert off_mass / delta == pytest.approx(rate, rel=0.1)

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            numeric_intensity(SchemeId.parse("killing"), [1.0, 2.0], 1.5)
