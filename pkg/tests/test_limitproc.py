import numpy as np
import pytest

from wif_smc import limitproc
from wif_smc.exceptions import EmptyEnsembleError, MajorantViolatedError, NoIntensityLimitError
from wif_smc.fkengine import (
    InverseQuadraticPotential,
    TransitionKind,
    ou_model,
    pf_run,
    uniform_grid,
)
from wif_smc.intensity import IntensityTable, intensity_table
from wif_smc.limitproc import (
    MonteCarloEstimate,
    coordinate_ks_distance,
    default_majorant,
    fk_marginal_discrete,
    fk_marginal_lhs,
    fk_marginal_rhs,
    simulate_ensemble,
    simulate_limit,
)
from wif_smc.resampling import SchemeId, resample

LIMIT_SCHEMES = [
    SchemeId.parse(name)
    for name in (
        "killing",
        "stratified-partition",
        "systematic-partition",
        "ssp-partition",
        "symmetrised-systematic",
    )
]


def ones(x):
    return np.ones(x.shape[0])


def clipped_ou(delta):
    return ou_model(
        theta=1.0,
        potential=InverseQuadraticPotential(2.0),
        horizon=0.5,
        delta=delta,
        transition=TransitionKind.euler,
        drift_clip=3.0,
    )


def shifted(x):
    return x[:, 0] + 1.0


def one_particle_each(clouds, rng):
    """A uniformly chosen particle of every terminal cloud."""
    return np.array([cloud[rng.integers(len(cloud))] for cloud in clouds])


class TestSimulateLimit:
    """Tests for the thinning simulator."""

    @pytest.mark.parametrize("scheme", LIMIT_SCHEMES, ids=str)
    def test_frozen_pair_first_jump(self, scheme, frozen_pair_model):
        paths = simulate_ensemble(
            frozen_pair_model, scheme, 2, seed=31, replicates=400, fine_step=1 / 64
        )
        assert all(path.n_jumps in (0, 1) for path in paths)
        no_jump = np.mean([path.n_jumps == 0 for path in paths])
        stderr = np.sqrt(np.exp(-1.0) * (1.0 - np.exp(-1.0)) / len(paths))
        assert abs(no_jump - np.exp(-1.0)) <= 4 * stderr

        for path in paths:
            if path.n_jumps:
                time, a = path.jump_list()[0]
                np.testing.assert_array_equal(a.a, [0, 0])
                np.testing.assert_array_equal(path.terminal, [[0.0], [0.0]])
                assert path.integral == pytest.approx(time)
            else:
                assert path.integral == pytest.approx(1.0)

    def test_frozen_pair_weighted_mass(self, frozen_pair_model):
        # E[exp(-min(tau, 1))] with tau ~ Exp(1)
        paths = simulate_ensemble(
            frozen_pair_model,
            SchemeId.parse("killing"),
            2,
            seed=32,
            replicates=400,
            fine_step=1 / 64,
        )
        estimate = fk_marginal_lhs(paths, ones)
        assert abs(estimate.mean - (1.0 + np.exp(-2.0)) / 2.0) <= 4 * estimate.stderr

    @pytest.mark.parametrize("scheme", LIMIT_SCHEMES, ids=str)
    def test_single_particle_never_jumps(self, scheme, frozen_pair_model):
        path = simulate_limit(frozen_pair_model, scheme, 1, seed=3, fine_step=1 / 64)
        assert path.n_jumps == 0
        assert path.integral == 0.0

    @pytest.mark.parametrize("scheme", LIMIT_SCHEMES, ids=str)
    def test_constant_potential(self, scheme, make_brownian_model):
        model = make_brownian_model(0.7)
        paths = simulate_ensemble(model, scheme, 5, seed=4, replicates=10, fine_step=1 / 64)
        assert all(path.n_jumps == 0 for path in paths)
        estimate = fk_marginal_lhs(paths, ones)
        assert estimate.mean == pytest.approx(np.exp(-0.7))

    def test_zero_potential(self, make_brownian_model):
        model = make_brownian_model(0.0)
        scheme = SchemeId.parse("systematic-partition")
        paths = simulate_ensemble(model, scheme, 8, seed=5, replicates=20, fine_step=1 / 64)
        assert fk_marginal_lhs(paths, ones).mean == 1.0
        assert fk_marginal_rhs(model, ones, 100, seed=6, fine_step=1 / 64).mean == 1.0
        discrete = fk_marginal_discrete(model, scheme, 8, ones, 10, seed=7)
        assert discrete.mean == 1.0

    def test_majorant_violated(self, frozen_pair_model):
        model = frozen_pair_model.with_grid(uniform_grid(50.0, 0.25))
        with pytest.raises(MajorantViolatedError):
            simulate_limit(model, SchemeId.parse("killing"), 2, seed=8, majorant=0.5)

    def test_no_limit(self, frozen_pair_model):
        with pytest.raises(NoIntensityLimitError):
            simulate_limit(frozen_pair_model, SchemeId.parse("multinomial"), 2, seed=0)
        with pytest.raises(NoIntensityLimitError):
            simulate_limit(frozen_pair_model, SchemeId.parse("systematic"), 2, seed=0, majorant=4)

    def test_default_majorant(self):
        assert default_majorant(SchemeId.parse("killing"), 4, 2.0) == 6.0
        assert default_majorant(SchemeId.parse("stratified-partition"), 4, 2.0) == 32.0
        assert default_majorant(SchemeId.parse("ssp-partition"), 4, 2.0) == 8.0

    def test_skeleton(self, frozen_pair_model):
        path = simulate_limit(
            frozen_pair_model,
            SchemeId.parse("ssp-partition"),
            2,
            seed=9,
            fine_step=1 / 64,
            record_skeleton=True,
        )
        assert path.times.shape == (65,)
        assert path.states.shape == (65, 2, 1)
        assert path.fine_step == pytest.approx(1 / 64)

    @pytest.mark.parametrize(
        "table",
        [IntensityTable.empty(2), IntensityTable.build(2, [(np.array([0, 0]), 0.0)])],
        ids=["empty", "zero-rates"],
    )
    def test_accepted_candidate_without_events(self, table, frozen_pair_model, monkeypatch):
        monkeypatch.setattr(limitproc, "intensity_table", lambda scheme, v: table)
        path = simulate_limit(
            frozen_pair_model, SchemeId.parse("killing"), 2, seed=11, fine_step=1 / 64
        )
        assert path.n_jumps == 0
        assert path.integral == pytest.approx(1.0)

    def test_threads_do_not_change_results(self):
        model = ou_model(potential=InverseQuadraticPotential(2.0), horizon=1.0, delta=2.0**-4)
        scheme = SchemeId.parse("killing")
        serial = simulate_ensemble(model, scheme, 4, seed=10, replicates=8, fine_step=1 / 64)
        parallel = simulate_ensemble(
            model, scheme, 4, seed=10, replicates=8, threads=3, fine_step=1 / 64
        )
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.terminal, b.terminal)
            np.testing.assert_array_equal(a.jump_times, b.jump_times)


class TestEstimates:
    """Tests for the Monte Carlo summaries."""

    def test_agreement(self):
        a = MonteCarloEstimate(1.0, 0.1, 100)
        assert a.agrees_with(MonteCarloEstimate(1.2, 0.1, 100))
        assert not a.agrees_with(MonteCarloEstimate(2.0, 0.1, 100))
        assert a.to_dict() == {"mean": 1.0, "stderr": 0.1, "count": 100}

    def test_from_samples(self):
        estimate = MonteCarloEstimate.from_samples([1.0, 3.0])
        assert estimate.mean == 2.0
        assert estimate.stderr == pytest.approx(1.0)
        assert MonteCarloEstimate.from_samples([5.0]).stderr == 0.0

    def test_empty(self, make_brownian_model):
        with pytest.raises(EmptyEnsembleError):
            MonteCarloEstimate.from_samples([])
        with pytest.raises(EmptyEnsembleError):
            fk_marginal_lhs([], ones)
        with pytest.raises(EmptyEnsembleError):
            fk_marginal_rhs(make_brownian_model(), ones, 0, seed=0)

    def test_ks_distance(self, rng):
        sample = rng.normal(size=(200, 2))
        assert coordinate_ks_distance(sample, sample) == 0.0
        assert coordinate_ks_distance(sample, sample + 100.0) == 1.0
        with pytest.raises(EmptyEnsembleError):
            coordinate_ks_distance(np.empty((0, 2)), sample)


@pytest.mark.slow
class TestFeynmanKacAgreement:
    """The limit system and the particle filter reproduce the single-diffusion marginal."""

    @pytest.mark.parametrize("name", ["killing", "systematic-partition"])
    def test_limit_matches_single_diffusion(self, name):
        model = ou_model(potential=InverseQuadraticPotential(2.0), horizon=0.5, delta=2.0**-8)
        scheme = SchemeId.parse(name)
        paths = simulate_ensemble(model, scheme, 4, seed=41, replicates=200, fine_step=1 / 256)
        lhs = fk_marginal_lhs(paths, shifted)
        rhs = fk_marginal_rhs(model, shifted, 4000, seed=42, fine_step=1 / 256)
        discrete = fk_marginal_discrete(model, scheme, 4, shifted, 200, seed=43)
        assert lhs.agrees_with(rhs, k=4)
        assert discrete.agrees_with(rhs, k=4)


@pytest.mark.slow
class TestFineGridAgreement:
    """The discrete filter on a fine grid and the limit system agree for N = 8."""

    @pytest.mark.parametrize("scheme", LIMIT_SCHEMES, ids=str)
    def test_weighted_marginal(self, scheme):
        model = clipped_ou(2.0**-10)
        paths = simulate_ensemble(model, scheme, 8, seed=51, replicates=300, fine_step=2.0**-10)
        lhs = fk_marginal_lhs(paths, shifted)
        discrete = fk_marginal_discrete(model, scheme, 8, shifted, 300, seed=52, threads=4)
        assert discrete.agrees_with(lhs, k=3)

    @pytest.mark.parametrize("name", ["killing", "ssp-partition"])
    def test_terminal_marginal_ks(self, name):
        scheme = SchemeId.parse(name)
        rng = np.random.default_rng(53)
        paths = simulate_ensemble(
            clipped_ou(2.0**-8), scheme, 8, seed=54, replicates=300, fine_step=2.0**-8
        )
        limit_sample = one_particle_each([path.terminal for path in paths], rng)
        # two-sample critical value at level 1e-3 for 300 against 300
        critical = np.sqrt(-np.log(5e-4) / 2.0) * np.sqrt(2.0 / 300)
        for delta_log2 in (-4, -6, -8):
            model = clipped_ou(2.0**delta_log2)
            clouds = [
                pf_run(model, scheme, 8, child, keep_history=True).terminal
                for child in np.random.SeedSequence(55 - delta_log2).spawn(300)
            ]
            distance = coordinate_ks_distance(one_particle_each(clouds, rng), limit_sample)
            assert distance <= critical, delta_log2


@pytest.mark.slow
class TestJumpEventFrequencies:
    """Non-identity ancestor vectors drawn at a small step follow rate / overall rate."""

    @pytest.mark.parametrize("scheme", LIMIT_SCHEMES, ids=str)
    @pytest.mark.parametrize("v", [[0.0, 0.5, 2.0], [0.0, 0.5, 1.5, 3.0]], ids=["N3", "N4"])
    def test_conditional_frequencies(self, scheme, v, rng):
        delta = 2.0**-6
        table = intensity_table(scheme, v)
        expected = {key: rate / table.rates.sum() for key, rate in table.items()}
        weights = np.exp(-delta * np.asarray(v))
        counts = {}
        for _ in range(50_000):
            a = resample(scheme, weights, rng)
            if not a.is_identity:
                key = tuple(int(i) for i in a.a)
                counts[key] = counts.get(key, 0) + 1
        jumps = sum(counts.values())
        assert jumps > 300
        outside = sum(count for key, count in counts.items() if key not in expected)
        assert outside <= 0.05 * jumps
        for key, p in expected.items():
            freq = counts.get(key, 0) / jumps
            assert abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / jumps) + 0.03, key
