"""Particle filter for time-discretised Feynman-Kac path integrals.

A model is a Markov chain on a time grid ``0 = t_0 < ... < t_T = horizon`` together with
log-potentials ``log G_k(x) = -(t_{k+1} - t_k) V(t_k, x)``. The particle filter weights with
``G_k``, resamples, then moves every particle from ``t_k`` to ``t_{k+1}``. Its product of
mean weights is an unbiased estimate of the normalising constant.

Besides the filter this module holds the deterministic oracles: a quadrature recursion on a
state mesh for one-dimensional Gaussian transitions, and exhaustive enumeration for
finite-state models.
"""
import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from wif_smc.core import apply_ancestors
from wif_smc.exceptions import (
    DegenerateFilterError,
    ModelError,
    UnsupportedDimensionError,
    UnsupportedTransitionError,
)
from wif_smc.resampling import SchemeId, exact_distribution, resample

logger = logging.getLogger(__name__)


class TransitionKind(str, enum.Enum):
    """How particles move between grid points."""

    euler = "euler"
    exact_ou = "exact-ou"
    reflected_gaussian = "reflected-gaussian"


class FeynmanKacModel(Protocol):
    """What the particle filter needs from a model."""

    @property
    def n_steps(self) -> int:
        """Number of potentials, one less than the number of grid points."""

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n initial states."""

    def propagate(self, k: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Move states from grid point k to k + 1."""

    def log_potential(self, k: int, x: np.ndarray) -> np.ndarray:
        """Log-potential of each state at grid point k."""

    def statistic(self, x: np.ndarray) -> np.ndarray:
        """Real-valued (n, d) summary used for filtering and smoothing means."""


@dataclass(frozen=True)
class BoxPotential:
    """``height`` outside the window ``|x - center| <= width``, zero inside."""

    height: float = 6.0
    center: float = 0.5
    width: float = 0.1

    @property
    def bound(self) -> float:
        """Supremum of the potential."""
        return self.height

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        """Evaluate on the first coordinate of each state."""
        return np.where(np.abs(x[:, 0] - self.center) > self.width, self.height, 0.0)


@dataclass(frozen=True)
class ConstantPotential:
    """The same value everywhere."""

    value: float = 0.0

    @property
    def bound(self) -> float:
        """Supremum of the potential."""
        return self.value

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        """Evaluate."""
        return np.full(x.shape[0], float(self.value))


@dataclass(frozen=True)
class InverseQuadraticPotential:
    """``scale / (1 + |x|^2)``, bounded and smooth."""

    scale: float = 1.0

    @property
    def bound(self) -> float:
        """Supremum of the potential."""
        return self.scale

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        """Evaluate."""
        return self.scale / (1.0 + np.sum(x**2, axis=1))


def constant_diffusion(sigma: float, dim: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """Diffusion coefficient ``sigma * I`` for every state."""
    matrix = sigma * np.eye(dim)

    def diffusion(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(matrix, (x.shape[0], dim, dim))

    return diffusion


def uniform_grid(horizon: float, delta: float) -> np.ndarray:
    """Grid ``0, delta, ..., horizon``; delta must divide the horizon."""
    steps = int(round(horizon / delta))
    if steps < 1 or abs(steps * delta - horizon) > 1e-9 * max(horizon, 1.0):
        raise ModelError(f"step {delta} does not divide the horizon {horizon}")
    return np.linspace(0.0, horizon, steps + 1)


def reflect(x: np.ndarray, lower: float, upper: float) -> np.ndarray:
    """Fold values into ``[lower, upper]`` by repeated reflection at both ends."""
    length = upper - lower
    y = np.mod(x - lower, 2.0 * length)
    return lower + np.where(y > length, 2.0 * length - y, y)


@dataclass(frozen=True)
class FKModel:
    """A diffusion observed through a potential on a time grid.

    ``drift`` maps (n, d) states to (n, d) and ``diffusion`` to (n, d, d). ``potential(t, x)``
    returns the nonnegative potential of each state. Marked steps add
    ``mark_log_potential(k, x)`` to the log-potential of grid point ``k``.
    """

    dim: int
    initial: Callable[[int, np.random.Generator], np.ndarray]
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[float, np.ndarray], np.ndarray]
    grid: np.ndarray
    transition: TransitionKind = TransitionKind.euler
    initial_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ou_theta: Optional[float] = None
    ou_sigma: Optional[float] = None
    ou_mean: float = 0.0
    reflect_bounds: Optional[Tuple[float, float]] = None
    drift_clip: Optional[float] = None
    potential_bound: Optional[float] = None
    mark_log_potential: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    marked_steps: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        """Validate the grid and the transition parameters."""
        grid = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "transition", TransitionKind(self.transition))
        object.__setattr__(self, "marked_steps", frozenset(int(k) for k in self.marked_steps))
        if self.dim < 1:
            raise ModelError(f"dimension must be positive, got {self.dim}")
        if grid.size < 2 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            raise ModelError("grid must start at 0 and be strictly increasing")
        if self.transition is TransitionKind.exact_ou:
            if self.ou_theta is None or self.ou_sigma is None or self.ou_theta <= 0:
                raise ModelError("exact-ou transition needs ou_theta > 0 and ou_sigma")
        if self.transition is TransitionKind.reflected_gaussian:
            if self.reflect_bounds is None or self.reflect_bounds[0] >= self.reflect_bounds[1]:
                raise ModelError("reflected-gaussian transition needs bounds lower < upper")
        if self.marked_steps and self.mark_log_potential is None:
            raise ModelError("marked steps given without a mark log-potential")
        if any(k < 0 or k >= grid.size - 1 for k in self.marked_steps):
            raise ModelError("marked steps must index grid points before the horizon")
        if self.potential_bound is None and hasattr(self.potential, "bound"):
            object.__setattr__(self, "potential_bound", float(self.potential.bound))

    @property
    def horizon(self) -> float:
        """Final time."""
        return float(self.grid[-1])

    @property
    def n_steps(self) -> int:
        """Number of potentials and transitions."""
        return self.grid.size - 1

    def with_grid(self, grid: np.ndarray) -> "FKModel":
        """Same model on another grid, dropping marks."""
        return FKModel(
            dim=self.dim,
            initial=self.initial,
            drift=self.drift,
            diffusion=self.diffusion,
            potential=self.potential,
            grid=grid,
            transition=self.transition,
            initial_density=self.initial_density,
            ou_theta=self.ou_theta,
            ou_sigma=self.ou_sigma,
            ou_mean=self.ou_mean,
            reflect_bounds=self.reflect_bounds,
            drift_clip=self.drift_clip,
            potential_bound=self.potential_bound,
        )

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n initial states as an (n, d) array."""
        x = np.asarray(self.initial(n, rng), dtype=float).reshape(n, self.dim)
        if self.reflect_bounds is not None:
            x = reflect(x, *self.reflect_bounds)
        return x

    def potential_values(self, t: float, x: np.ndarray) -> np.ndarray:
        """Potential of each state, checked to be nonnegative."""
        v = np.asarray(self.potential(t, x), dtype=float)
        if np.any(v < 0):
            raise ModelError(f"negative potential at t={t}")
        return v

    def log_potential(self, k: int, x: np.ndarray) -> np.ndarray:
        """``-(t_{k+1} - t_k) V(t_k, x)`` plus the mark term at marked steps."""
        dt = self.grid[k + 1] - self.grid[k]
        out = -dt * self.potential_values(self.grid[k], x)
        if k in self.marked_steps:
            out = out + self.mark_log_potential(k, x)
        return out

    def drift_values(self, x: np.ndarray) -> np.ndarray:
        """Drift, clipped componentwise when ``drift_clip`` is set."""
        b = np.asarray(self.drift(x), dtype=float)
        if self.drift_clip is not None:
            b = np.clip(b, -self.drift_clip, self.drift_clip)
        return b

    def euler_step(self, x: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
        """One Euler-Maruyama step of size dt, reflected when the model has bounds."""
        xi = rng.standard_normal(x.shape)
        noise = np.einsum("nij,nj->ni", self.diffusion(x), xi)
        out = x + self.drift_values(x) * dt + np.sqrt(dt) * noise
        if self.reflect_bounds is not None:
            out = reflect(out, *self.reflect_bounds)
        return out

    def propagate(self, k: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Move states from ``t_k`` to ``t_{k+1}``."""
        dt = self.grid[k + 1] - self.grid[k]
        if self.transition is TransitionKind.exact_ou:
            mean, sd = self._ou_moments(x, dt)
            return mean + sd * rng.standard_normal(x.shape)
        return self.euler_step(x, dt, rng)

    def statistic(self, x: np.ndarray) -> np.ndarray:
        """States are their own summary."""
        return x

    def _ou_moments(self, x: np.ndarray, dt: float):
        decay = np.exp(-self.ou_theta * dt)
        sd = self.ou_sigma * np.sqrt((1.0 - decay**2) / (2.0 * self.ou_theta))
        return self.ou_mean + (x - self.ou_mean) * decay, sd

    def gaussian_kernel_moments(self, z: np.ndarray, dt: float):
        """Mean and standard deviation of the one-dimensional transition from each z."""
        if self.dim != 1:
            raise UnsupportedDimensionError(f"gaussian kernel needs d = 1, got {self.dim}")
        x = z.reshape(-1, 1)
        if self.transition is TransitionKind.exact_ou:
            mean, sd = self._ou_moments(x, dt)
            return mean[:, 0], np.full(z.size, sd)
        if self.transition is TransitionKind.euler:
            mean = x[:, 0] + self.drift_values(x)[:, 0] * dt
            sd = np.abs(self.diffusion(x)[:, 0, 0]) * np.sqrt(dt)
            return mean, sd
        raise UnsupportedTransitionError(f"no closed-form kernel for {self.transition.value}")


def ou_model(
    theta: float = 0.1,
    sigma: float = 1.0,
    potential: Optional[Callable] = None,
    horizon: float = 10.0,
    delta: float = 2.0**-6,
    transition: TransitionKind = TransitionKind.exact_ou,
    drift_clip: Optional[float] = None,
    mean: float = 0.0,
) -> FKModel:
    """Stationary Ornstein-Uhlenbeck process ``dX = -theta (X - mean) dt + sigma dW``.

    :param theta: mean-reversion rate
    :param sigma: diffusion coefficient
    :param potential: potential V(t, x), box-shaped by default
    :param horizon: final time
    :param delta: grid step, must divide the horizon
    :param transition: exact-ou or euler
    :param drift_clip: clip |drift| at this value
    :param mean: long-run mean
    """
    stationary_sd = sigma / np.sqrt(2.0 * theta)

    def initial(n, rng):
        return mean + stationary_sd * rng.standard_normal((n, 1))

    def initial_density(z):
        return norm.pdf(z, loc=mean, scale=stationary_sd)

    def drift(x):
        return -theta * (x - mean)

    return FKModel(
        dim=1,
        initial=initial,
        drift=drift,
        diffusion=constant_diffusion(sigma, 1),
        potential=BoxPotential() if potential is None else potential,
        grid=uniform_grid(horizon, delta),
        transition=transition,
        initial_density=initial_density,
        ou_theta=theta,
        ou_sigma=sigma,
        ou_mean=mean,
        drift_clip=drift_clip,
    )


@dataclass(frozen=True)
class PFOutput:
    """Result of one particle filter run.

    ``filtering`` is the mean of the terminal cloud and ``smoothing`` the mean of the initial
    states of the terminal particles' ancestral lines.
    """

    log_z: float
    log_integrated_potential: float
    filtering: np.ndarray
    smoothing: np.ndarray
    resample_events: int
    n_steps: int
    terminal: Optional[np.ndarray] = None
    ancestry: Optional[np.ndarray] = None

    @property
    def filter_estimate(self) -> float:
        """First coordinate of the filtering mean."""
        return float(self.filtering[0])

    @property
    def smooth_estimate(self) -> float:
        """First coordinate of the smoothing mean."""
        return float(self.smoothing[0])

    def to_dict(self) -> dict:
        """JSON-ready summary without the cloud."""
        return {
            "logZ": float(self.log_z),
            "log_integrated_potential": float(self.log_integrated_potential),
            "filtering": [float(v) for v in self.filtering],
            "smoothing": [float(v) for v in self.smoothing],
            "resample_events": int(self.resample_events),
            "n_steps": int(self.n_steps),
        }


def pf_run(
    model: FeynmanKacModel,
    scheme: SchemeId,
    n_particles: int,
    seed: int,
    keep_history: bool = False,
) -> PFOutput:
    """Run the particle filter once.

    :param model: the Feynman-Kac model
    :param scheme: resampling scheme used at every step
    :param n_particles: number of particles
    :param seed: seed of the run's random generator
    :param keep_history: retain the terminal cloud and the ancestry matrix
    :return: the estimates of the run
    """
    if n_particles < 1:
        raise ValueError(f"need at least one particle, got {n_particles}")
    rng = np.random.default_rng(seed)
    x = model.sample_initial(n_particles, rng)
    x_initial = x
    ancestry = np.empty((model.n_steps, n_particles), dtype=int)
    log_z = 0.0
    log_integrated = 0.0
    events = 0

    for k in range(model.n_steps):
        log_g = model.log_potential(k, x)
        top = log_g.max()
        if not np.isfinite(top):
            raise DegenerateFilterError(k)
        g = np.exp(log_g - top)
        log_z += top + np.log(g.mean())
        log_integrated += log_g.mean()

        a = resample(scheme, g, rng)
        if not a.is_identity:
            events += 1
        ancestry[k] = a.a
        x = model.propagate(k, apply_ancestors(x, a), rng)

    lineage = np.arange(n_particles)
    for a in ancestry[::-1]:
        lineage = a[lineage]
    logger.debug(f"pf_run {scheme.name} N={n_particles} seed={seed}: {events} resampling steps")
    return PFOutput(
        log_z=float(log_z),
        log_integrated_potential=float(log_integrated),
        filtering=model.statistic(x).mean(axis=0),
        smoothing=model.statistic(x_initial[lineage]).mean(axis=0),
        resample_events=events,
        n_steps=model.n_steps,
        terminal=x if keep_history else None,
        ancestry=ancestry if keep_history else None,
    )


@dataclass(frozen=True)
class StateMesh:
    """Equispaced quadrature mesh of a one-dimensional state space."""

    lo: float
    hi: float
    points: int

    def __post_init__(self):
        """Validate the mesh."""
        if self.points < 3 or self.hi <= self.lo:
            raise ValueError(f"invalid mesh [{self.lo}, {self.hi}] with {self.points} points")

    def nodes_and_weights(self) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes and trapezoidal weights."""
        z = np.linspace(self.lo, self.hi, self.points)
        q = np.full(self.points, z[1] - z[0])
        q[[0, -1]] *= 0.5
        return z, q

    def refined(self) -> "StateMesh":
        """Same interval with the spacing halved."""
        return StateMesh(self.lo, self.hi, 2 * self.points - 1)


@dataclass(frozen=True)
class GridReference:
    """Quadrature values of the discretised model."""

    log_z: float
    filter_mean: float
    smooth_mean: float


def grid_reference(model: FKModel, mesh: StateMesh) -> GridReference:
    """Normalising constant, filtering and smoothing means by quadrature on a mesh.

    Runs scaled forward and backward recursions of the discretised chain with the Gaussian
    transition density, so the only error is the mesh truncation and spacing.

    :param model: a one-dimensional model with euler or exact-ou transitions
    :param mesh: the state mesh
    """
    if model.dim != 1:
        raise UnsupportedDimensionError(f"grid reference needs d = 1, got {model.dim}")
    if model.transition not in (TransitionKind.euler, TransitionKind.exact_ou):
        raise UnsupportedTransitionError(f"no closed-form kernel for {model.transition.value}")
    if model.initial_density is None:
        raise ModelError("grid reference needs the initial density")

    z, q = mesh.nodes_and_weights()
    states = z.reshape(-1, 1)
    kernels: Dict[float, np.ndarray] = {}

    def kernel(dt: float) -> np.ndarray:
        if dt not in kernels:
            mean, sd = model.gaussian_kernel_moments(z, dt)
            # rows: from-state, columns: to-state, quadrature weight folded in
            kernels[dt] = norm.pdf(z[None, :], loc=mean[:, None], scale=sd[:, None]) * q[None, :]
        return kernels[dt]

    steps = range(model.n_steps)
    dts = np.diff(model.grid)
    potentials = [np.exp(model.log_potential(k, states)) for k in steps]

    alpha0 = np.asarray(model.initial_density(z), dtype=float)
    alpha = alpha0 * q
    log_z = 0.0
    for k in steps:
        weighted = alpha * potentials[k]
        mass = weighted.sum()
        if mass <= 0.0:
            raise DegenerateFilterError(k, f"quadrature mass vanished at step {k}")
        log_z += np.log(mass)
        alpha = (weighted / mass) @ kernel(dts[k])

    filter_mean = float(np.sum(z * alpha) / np.sum(alpha))

    beta = np.ones_like(z)
    for k in reversed(steps):
        beta = potentials[k] * (kernel(dts[k]) @ beta)
        beta /= beta.max()
    smooth_weights = alpha0 * q * beta
    smooth_mean = float(np.sum(z * smooth_weights) / np.sum(smooth_weights))
    return GridReference(float(log_z), filter_mean, smooth_mean)


def grid_reference_logZ(model: FKModel, mesh: StateMesh) -> float:  # noqa: N802
    """Log normalising constant of the discretised model by quadrature."""
    return grid_reference(model, mesh).log_z


@dataclass(frozen=True)
class FiniteStateModel:
    """Markov chain on states ``0..S-1`` with per-step log-potentials.

    ``transitions[k]`` is the (S, S) matrix used from step k to k + 1 and
    ``log_potentials[k]`` the (S,) log-potential at step k.
    """

    initial_probs: np.ndarray
    transitions: Sequence[np.ndarray]
    log_potentials: Sequence[np.ndarray]
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        """Validate the shapes and the stochastic matrices."""
        mu = np.asarray(self.initial_probs, dtype=float)
        size = mu.size
        if len(self.transitions) != len(self.log_potentials):
            raise ModelError("need one transition matrix per potential")
        if not np.isclose(mu.sum(), 1.0) or np.any(mu < 0):
            raise ModelError("initial probabilities must be a distribution")
        for matrix in self.transitions:
            matrix = np.asarray(matrix)
            if matrix.shape != (size, size) or not np.allclose(matrix.sum(axis=1), 1.0):
                raise ModelError("transition matrices must be row-stochastic (S, S)")
        object.__setattr__(self, "initial_probs", mu)
        if self.values is None:
            object.__setattr__(self, "values", np.arange(size, dtype=float))

    @property
    def n_states(self) -> int:
        """Number of states."""
        return self.initial_probs.size

    @property
    def n_steps(self) -> int:
        """Number of potentials."""
        return len(self.log_potentials)

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n initial state indices."""
        return rng.choice(self.n_states, size=n, p=self.initial_probs)

    def propagate(self, k: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw the next state of each particle."""
        cdf = np.cumsum(np.asarray(self.transitions[k])[x], axis=1)
        u = rng.random((x.size, 1))
        return np.minimum((u > cdf).sum(axis=1), self.n_states - 1)

    def log_potential(self, k: int, x: np.ndarray) -> np.ndarray:
        """Log-potential of each state."""
        return np.asarray(self.log_potentials[k], dtype=float)[x]

    def statistic(self, x: np.ndarray) -> np.ndarray:
        """State values as an (n, 1) array."""
        return self.values[x].reshape(-1, 1)


def exact_normaliser(model: FiniteStateModel) -> float:
    """Normalising constant of a finite-state model by the forward recursion."""
    alpha = model.initial_probs.copy()
    for k in range(model.n_steps):
        alpha = (alpha * np.exp(model.log_potentials[k])) @ np.asarray(model.transitions[k])
    return float(alpha.sum())


def expected_pf_normaliser(model: FiniteStateModel, scheme: SchemeId, n_particles: int) -> float:
    """Expectation of the particle filter's normaliser estimate, by enumeration.

    Sums over all initial clouds, resampling outcomes and transitions with their exact
    probabilities.

    :param model: a finite-state model
    :param scheme: resampling scheme
    :param n_particles: number of particles
    """
    size = model.n_states
    # cloud -> sum over histories of probability times the running product estimate
    clouds: Dict[Tuple[int, ...], float] = {}
    for cloud in itertools.product(range(size), repeat=n_particles):
        prob = float(np.prod(model.initial_probs[list(cloud)]))
        if prob > 0.0:
            clouds[cloud] = prob

    for k in range(model.n_steps):
        matrix = np.asarray(model.transitions[k])
        following: Dict[Tuple[int, ...], float] = {}
        for cloud, mass in clouds.items():
            log_g = model.log_potential(k, np.array(cloud))
            if not np.isfinite(log_g.max()):
                continue
            g = np.exp(log_g)
            factor = mass * g.mean()
            for a, prob_a in exact_distribution(scheme, g).items():
                parents = [cloud[i] for i in a]
                for moved in itertools.product(range(size), repeat=n_particles):
                    prob_move = float(np.prod(matrix[parents, list(moved)]))
                    if prob_move > 0.0:
                        following[moved] = following.get(moved, 0.0) + factor * prob_a * prob_move
        clouds = following
    return float(sum(clouds.values()))


def log_mean_exp(values: Sequence[float]) -> float:
    """``log(mean(exp(values)))`` computed stably."""
    values = np.asarray(values, dtype=float)
    return float(logsumexp(values) - np.log(values.size))
