"""Simulation of the continuous-time particle system and Feynman-Kac marginal checks.

As the grid step goes to zero, the particle filter with a stable resampling scheme becomes
N independent diffusions that jump together: at rate ``iota(a, V(x))`` the cloud is
reindexed by the ancestor vector ``a``. :func:`simulate_limit` simulates this system by
thinning a homogeneous Poisson stream of candidate times.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import ks_2samp

from wif_smc.core import AncestorVector, apply_ancestors
from wif_smc.exceptions import (
    EmptyEnsembleError,
    MajorantViolatedError,
    ModelError,
    NoIntensityLimitError,
)
from wif_smc.fkengine import FKModel, pf_run
from wif_smc.intensity import has_intensity_limit, intensity_table, overall_rate
from wif_smc.resampling import SchemeId, SchemeKind

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]
TestFunction = Callable[[np.ndarray], np.ndarray]

DEFAULT_FINE_STEPS = 4096


@dataclass(frozen=True)
class LimitPath:
    """One simulated path of the continuous-time particle system.

    ``integral`` is the time integral of the mean potential of the cloud. ``times`` and
    ``states`` hold the cloud on the fine grid only when the skeleton was recorded.
    """

    initial: np.ndarray
    terminal: np.ndarray
    integral: float
    fine_step: float
    jump_times: np.ndarray
    jumps: List[AncestorVector] = field(default_factory=list)
    times: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None

    @property
    def n_jumps(self) -> int:
        """Number of accepted resampling events."""
        return len(self.jumps)

    def jump_list(self) -> List[Tuple[float, AncestorVector]]:
        """Pairs of jump time and the ancestor vector applied."""
        return list(zip(self.jump_times.tolist(), self.jumps))


def default_majorant(scheme: SchemeId, n_particles: int, potential_bound: float) -> float:
    """Bound on the overall resampling rate for potentials in ``[0, potential_bound]``."""
    if not has_intensity_limit(scheme):
        raise NoIntensityLimitError(f"{scheme.name} has no continuous-time limit")
    if scheme.kind is SchemeKind.killing:
        return (n_particles - 1) * potential_bound
    if scheme.kind is SchemeKind.stratified:
        return n_particles**2 * potential_bound
    return n_particles * potential_bound


class _Simulation:
    """Mutable state of one path simulation."""

    def __init__(self, model, scheme, x, majorant, rng):
        self.model = model
        self.scheme = scheme
        self.x = x
        self.majorant = majorant
        self.rng = rng
        self.t = 0.0
        self.integral = 0.0
        self.jump_times: List[float] = []
        self.jumps: List[AncestorVector] = []

    def advance(self, target: float) -> None:
        """Euler step to ``target``, accumulating the left-point potential integral."""
        dt = target - self.t
        if dt <= 0.0:
            return
        self.integral += dt * self.model.potential_values(self.t, self.x).mean()
        self.x = self.model.euler_step(self.x, dt, self.rng)
        self.t = target

    def candidate(self) -> None:
        """Thinning step at the current time."""
        v = self.model.potential_values(self.t, self.x)
        rate = overall_rate(self.scheme, v)
        if rate > self.majorant * (1.0 + 1e-12) + 1e-12:
            raise MajorantViolatedError(
                f"overall rate {rate:.6g} exceeds the majorant {self.majorant:.6g} at t={self.t}"
            )
        if self.rng.random() * self.majorant >= rate:
            return
        table = intensity_table(self.scheme, v)
        total = table.rates.sum()
        if len(table) == 0 or total <= 0.0:
            return
        pick = self.rng.choice(len(table), p=table.rates / total)
        a = AncestorVector(table.layouts[pick])
        self.x = apply_ancestors(self.x, a)
        self.jump_times.append(self.t)
        self.jumps.append(a)
        logger.debug(f"jump at t={self.t:.6f}: {a.signature()}")


def simulate_limit(
    model: FKModel,
    scheme: SchemeId,
    n_particles: int,
    seed: Seed,
    fine_step: Optional[float] = None,
    majorant: Optional[float] = None,
    record_skeleton: bool = False,
) -> LimitPath:
    """Simulate the jump-diffusion limit of the particle filter.

    :param model: diffusion model with a bounded potential
    :param scheme: a scheme with a closed-form intensity
    :param n_particles: number of particles
    :param seed: seed of the path's random generator
    :param fine_step: Euler sub-step, horizon / 4096 by default
    :param majorant: thinning rate, the scheme's default bound if None
    :param record_skeleton: keep the cloud at every fine grid point
    """
    horizon = model.horizon
    h = horizon / DEFAULT_FINE_STEPS if fine_step is None else fine_step
    if h <= 0.0:
        raise ValueError(f"fine step must be positive, got {h}")
    if majorant is None:
        if model.potential_bound is None:
            raise ModelError("the limit simulator needs a potential bound")
        majorant = default_majorant(scheme, n_particles, model.potential_bound)
    elif not has_intensity_limit(scheme):
        raise NoIntensityLimitError(f"{scheme.name} has no continuous-time limit")

    rng = np.random.default_rng(seed)
    x0 = model.sample_initial(n_particles, rng)
    sim = _Simulation(model, scheme, x0, majorant, rng)
    fine_grid = np.linspace(0.0, horizon, int(np.ceil(horizon / h - 1e-9)) + 1)
    next_candidate = rng.exponential(1.0 / majorant) if majorant > 0 else np.inf
    times, states = [0.0], [x0]

    for target in fine_grid[1:]:
        while next_candidate < target:
            sim.advance(next_candidate)
            sim.candidate()
            next_candidate += rng.exponential(1.0 / majorant)
        sim.advance(target)
        if record_skeleton:
            times.append(float(target))
            states.append(sim.x)

    return LimitPath(
        initial=x0,
        terminal=sim.x,
        integral=float(sim.integral),
        fine_step=float(fine_grid[1] - fine_grid[0]),
        jump_times=np.array(sim.jump_times),
        jumps=sim.jumps,
        times=np.array(times) if record_skeleton else None,
        states=np.stack(states) if record_skeleton else None,
    )


def _spawn(seed: Seed, count: int) -> List[np.random.SeedSequence]:
    parent = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return parent.spawn(count)


def simulate_ensemble(
    model: FKModel,
    scheme: SchemeId,
    n_particles: int,
    seed: Seed,
    replicates: int,
    threads: int = 1,
    **kwargs,
) -> List[LimitPath]:
    """Independent limit paths with pre-split seeds, in replicate order.

    :param replicates: number of paths
    :param threads: worker threads, which never change the result
    :param kwargs: passed to :func:`simulate_limit`
    """
    seeds = _spawn(seed, replicates)
    logger.info(
        f"simulating {replicates} limit paths of {scheme.name} with N={n_particles}, seed={seed}"
    )

    def run(child):
        return simulate_limit(model, scheme, n_particles, child, **kwargs)

    if threads <= 1:
        return [run(child) for child in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, seeds))


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Sample mean with its standard error."""

    mean: float
    stderr: float
    count: int

    @classmethod
    def from_samples(cls, values: Sequence[float]) -> "MonteCarloEstimate":
        """Estimate from iid samples."""
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise EmptyEnsembleError("no samples")
        stderr = values.std(ddof=1) / np.sqrt(values.size) if values.size > 1 else 0.0
        return cls(float(values.mean()), float(stderr), int(values.size))

    def agrees_with(self, other: "MonteCarloEstimate", k: float = 3.0) -> bool:
        """Whether the two means are within k combined standard errors."""
        combined = np.hypot(self.stderr, other.stderr)
        return bool(abs(self.mean - other.mean) <= k * combined + 1e-12)

    def to_dict(self) -> dict:
        """JSON-ready form."""
        return {"mean": self.mean, "stderr": self.stderr, "count": self.count}


def fk_marginal_lhs(paths: Sequence[LimitPath], f: TestFunction) -> MonteCarloEstimate:
    """Average of ``mean_i f(X_T^i) exp(-integral of the mean potential)`` over paths."""
    if len(paths) == 0:
        raise EmptyEnsembleError("no limit paths")
    values = [np.mean(f(path.terminal)) * np.exp(-path.integral) for path in paths]
    return MonteCarloEstimate.from_samples(values)


def fk_marginal_rhs(
    model: FKModel,
    f: TestFunction,
    replicates: int,
    seed: Seed,
    fine_step: Optional[float] = None,
) -> MonteCarloEstimate:
    """Monte Carlo of ``E[f(z_T) exp(-int V(z_u) du)]`` for the single diffusion.

    All replicates move together as one vectorised cloud of Euler paths.

    :param model: diffusion model
    :param f: test function on (n, d) states
    :param replicates: number of independent diffusions
    :param seed: seed of the random generator
    :param fine_step: Euler step, horizon / 4096 by default
    """
    if replicates < 1:
        raise EmptyEnsembleError("no replicates requested")
    horizon = model.horizon
    h = horizon / DEFAULT_FINE_STEPS if fine_step is None else fine_step
    fine_grid = np.linspace(0.0, horizon, int(np.ceil(horizon / h - 1e-9)) + 1)
    rng = np.random.default_rng(seed)
    z = model.sample_initial(replicates, rng)
    integral = np.zeros(replicates)
    for t0, t1 in zip(fine_grid[:-1], fine_grid[1:]):
        integral += (t1 - t0) * model.potential_values(t0, z)
        z = model.euler_step(z, t1 - t0, rng)
    return MonteCarloEstimate.from_samples(f(z) * np.exp(-integral))


def fk_marginal_discrete(
    model: FKModel,
    scheme: SchemeId,
    n_particles: int,
    f: TestFunction,
    replicates: int,
    seed: Seed,
    unbiased: bool = False,
    threads: int = 1,
) -> MonteCarloEstimate:
    """Particle filter estimate of the same functional on the model's grid.

    Each run contributes ``mean_i f(X_T^i)`` times the exponential of the averaged
    log-potentials, or times the normaliser estimate when ``unbiased`` is set.
    """
    seeds = _spawn(seed, replicates)

    def run(child):
        out = pf_run(model, scheme, n_particles, child, keep_history=True)
        exponent = out.log_z if unbiased else out.log_integrated_potential
        return float(np.mean(f(out.terminal)) * np.exp(exponent))

    if threads <= 1:
        values = [run(child) for child in seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(run, seeds))
    return MonteCarloEstimate.from_samples(values)


def coordinate_ks_distance(sample_a: np.ndarray, sample_b: np.ndarray) -> float:
    """Largest two-sample Kolmogorov-Smirnov statistic over coordinates."""
    a = np.asarray(sample_a, dtype=float).reshape(len(sample_a), -1)
    b = np.asarray(sample_b, dtype=float).reshape(len(sample_b), -1)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyEnsembleError("empty sample")
    return float(max(ks_2samp(a[:, j], b[:, j]).statistic for j in range(a.shape[1])))
