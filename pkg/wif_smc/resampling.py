"""Resampling schemes and their exact finite-N distributions.

Each scheme maps unnormalised weights ``g`` to an ancestor vector. Besides the samplers,
:func:`exact_distribution` computes the law of every sampler exactly for small ``N``, which
the tests and the intensity module use as an oracle.
"""
import enum
import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import multinomial

from wif_smc.core import (
    TOL,
    AncestorVector,
    EventSignature,
    Permutation,
    WeightVector,
    mean_partition,
    normalize,
    repeat_indices,
)
from wif_smc.exceptions import (
    ResamplingFailureError,
    SymmetrisedConditionViolatedError,
    TooLargeForEnumerationError,
)

logger = logging.getLogger(__name__)

MAX_ENUMERATION_N = 12
MAX_OUTCOMES = 1 << 21

# slack on SSP's "p_i + p_j < 1" test, absorbs rounding of the fractional parts
_SSP_TOL = 1e-12


class SchemeKind(str, enum.Enum):
    """Resampling scheme families."""

    multinomial = "multinomial"
    residual = "residual"
    killing = "killing"
    stratified = "stratified"
    systematic = "systematic"
    ssp = "ssp"
    symmetrised = "symmetrised-systematic"


class Ordering(str, enum.Enum):
    """Processing order of the weights."""

    natural = "natural"
    mean_partition = "mean-partition"


_ORDERABLE = {SchemeKind.stratified, SchemeKind.systematic, SchemeKind.ssp}
_UNSTABLE = {SchemeKind.multinomial, SchemeKind.residual}


@dataclass(frozen=True)
class SchemeId:
    """A resampling scheme, its processing order and the symmetrised fallback flag."""

    kind: SchemeKind
    ordering: Ordering = Ordering.natural
    fallback: bool = True

    def __post_init__(self):
        """Check that only stratified, systematic and SSP take a mean partition order."""
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        object.__setattr__(self, "ordering", Ordering(self.ordering))
        if self.ordering is Ordering.mean_partition and self.kind not in _ORDERABLE:
            raise ValueError(f"{self.kind.value} has no mean-partition variant")

    @classmethod
    def parse(cls, name: str) -> "SchemeId":
        """Parse names such as ``systematic-partition`` or ``symmetrised-systematic-strict``.

        :param name: scheme name
        """
        name = name.strip().lower()
        fallback = True
        if name.endswith("-strict"):
            name, fallback = name[: -len("-strict")], False
        ordering = Ordering.natural
        if name.endswith("-partition"):
            name, ordering = name[: -len("-partition")], Ordering.mean_partition
        if name == "symmetrised":
            name = SchemeKind.symmetrised.value
        try:
            kind = SchemeKind(name)
        except ValueError:
            raise ValueError(f"unknown resampling scheme {name!r}") from None
        if not fallback and kind is not SchemeKind.symmetrised:
            raise ValueError("only symmetrised-systematic has a strict variant")
        return cls(kind, ordering, fallback)

    @property
    def name(self) -> str:
        """Canonical name, the inverse of :meth:`parse`."""
        name = self.kind.value
        if self.ordering is Ordering.mean_partition:
            name += "-partition"
        if self.kind is SchemeKind.symmetrised and not self.fallback:
            name += "-strict"
        return name

    @property
    def is_stable(self) -> bool:
        """Whether resampling stops as the weights become uniform."""
        return self.kind not in _UNSTABLE

    def __str__(self) -> str:
        """Canonical name."""
        return self.name


ALL_SCHEMES: Tuple[SchemeId, ...] = tuple(
    SchemeId.parse(name)
    for name in (
        "multinomial",
        "residual",
        "killing",
        "stratified",
        "stratified-partition",
        "systematic",
        "systematic-partition",
        "ssp",
        "ssp-partition",
        "symmetrised-systematic",
    )
)


def resampling_order(scheme: SchemeId, weights: WeightVector) -> Permutation:
    """Processing order a sampler uses for the given weights.

    Mean-partition variants put the weights at or below the mean first, which for
    ``g = exp(-delta * v)`` is a mean partition of ``-v`` once delta is small.
    """
    if scheme.ordering is Ordering.mean_partition:
        return mean_partition(weights.g)
    return Permutation.identity(weights.n)


def _uniforms(rng: np.random.Generator, size=None):
    # (0, 1] so that the inverse cdf never selects a leading zero weight
    return 1.0 - rng.random(size)


def symmetrised_p(weights: WeightVector) -> float:
    """Total excess ``sum((N w_i - 1)_+)`` of symmetrised systematic resampling."""
    return float(np.clip(weights.eps, 0.0, None).sum())


def _ordered_lookup(weights: WeightVector, order: Permutation, positions: np.ndarray):
    """Ancestors from stratified/systematic positions processed in ``order``."""
    w_ordered = normalize(weights.g[order.perm])
    picks = order.perm[w_ordered.inverse_cdf(positions)]
    a = np.empty(weights.n, dtype=int)
    a[order.perm] = picks
    return a


def _multinomial(weights: WeightVector, rng: np.random.Generator) -> np.ndarray:
    return weights.inverse_cdf(_uniforms(rng, weights.n))


def _residual(weights: WeightVector, rng: np.random.Generator) -> np.ndarray:
    n = weights.n
    counts = np.floor(n * weights.w).astype(int)
    remaining = n - counts.sum()
    if remaining > 0:
        residual = normalize(n * weights.w - counts)
        draws = residual.inverse_cdf(_uniforms(rng, remaining))
        counts += np.bincount(draws, minlength=n)
    return repeat_indices(counts)


def _killing(weights: WeightVector, rng: np.random.Generator) -> np.ndarray:
    survive = rng.random(weights.n) < weights.g / weights.g.max()
    a = np.arange(weights.n)
    dead = np.flatnonzero(~survive)
    if dead.size:
        a[dead] = weights.inverse_cdf(_uniforms(rng, dead.size))
    return a


def _stratified(weights: WeightVector, order: Permutation, rng: np.random.Generator):
    n = weights.n
    positions = (np.arange(n) + _uniforms(rng, n)) / n
    return _ordered_lookup(weights, order, positions)


def _systematic(weights: WeightVector, order: Permutation, rng: np.random.Generator):
    n = weights.n
    positions = (np.arange(n) + _uniforms(rng)) / n
    return _ordered_lookup(weights, order, positions)


class _SspState:
    """State of the SSP pairing sweep between two coin flips."""

    __slots__ = ("k", "i", "j", "counts", "frac")

    def __init__(self, k, i, j, counts, frac):
        self.k = k
        self.i = i
        self.j = j
        self.counts = counts
        self.frac = frac

    def copy(self) -> "_SspState":
        return _SspState(self.k, self.i, self.j, self.counts.copy(), self.frac.copy())


def _ssp_start(weights: WeightVector, order: Permutation) -> _SspState:
    nw = weights.n * weights.w
    counts = np.floor(nw).astype(int)
    frac = np.clip(nw - counts, 0.0, 1.0)
    second = order.perm[1] if weights.n > 1 else order.perm[0]
    return _SspState(1, int(order.perm[0]), int(second), counts, frac)


def _ssp_swap_probability(state: _SspState) -> float:
    p = state.frac
    delta_i = min(p[state.j], 1.0 - p[state.i])
    delta_j = min(p[state.i], 1.0 - p[state.j])
    return delta_i / (delta_i + delta_j) if delta_i > 0 else 0.0


def _ssp_advance(state: _SspState, swap: bool, order: Permutation) -> None:
    """Resolve the pair (i, j) after the coin, then move to the next index."""
    p = state.frac
    i, j = (state.j, state.i) if swap else (state.i, state.j)
    delta = min(p[j], 1.0 - p[i])
    following = int(order.perm[min(state.k + 1, order.n - 1)])
    if p[i] + p[j] < 1.0 - _SSP_TOL:
        p[i] += delta
        p[j] = 0.0
        j = following
    else:
        state.counts[i] += 1
        p[j] = max(p[j] - delta, 0.0)
        p[i] = 0.0
        i = following
    state.i, state.j, state.k = i, j, state.k + 1


def _ssp_finish(state: _SspState) -> np.ndarray:
    counts = state.counts
    n = counts.size
    missing = n - counts.sum()
    if missing == 1:
        # rounding left the last fractional part just below one
        last = state.i if state.frac[state.i] >= state.frac[state.j] else state.j
        counts[last] += 1
    elif missing != 0:
        raise ResamplingFailureError(f"ssp produced {counts.sum()} offspring for {n} particles")
    return repeat_indices(counts)


def _ssp(weights: WeightVector, order: Permutation, rng: np.random.Generator) -> np.ndarray:
    state = _ssp_start(weights, order)
    while state.k < weights.n:
        swap = rng.random() < _ssp_swap_probability(state)
        _ssp_advance(state, swap, order)
    return _ssp_finish(state)


def _symmetrised(weights: WeightVector, rng: np.random.Generator, fallback: bool):
    p = symmetrised_p(weights)
    if p > 1.0 + TOL:
        if not fallback:
            raise SymmetrisedConditionViolatedError(f"p = {p:.6g} exceeds one")
        logger.debug(f"symmetrised systematic falls back to ssp-partition, p = {p:.6g}")
        return _ssp(weights, mean_partition(weights.g), rng)
    n = weights.n
    if p <= 0.0 or rng.random() >= p:
        return np.arange(n)
    deficit = normalize(np.clip(-weights.eps, 0.0, None))
    excess = normalize(np.clip(weights.eps, 0.0, None))
    k = int(deficit.inverse_cdf(_uniforms(rng)))
    ell = int(excess.inverse_cdf(_uniforms(rng)))
    return AncestorVector.single_event(n, k, ell).a


def resample(scheme: SchemeId, g: Sequence[float], rng: np.random.Generator) -> AncestorVector:
    """Draw ancestor indices.

    :param scheme: resampling scheme
    :param g: nonnegative unnormalised weights
    :param rng: random generator owned by the caller
    :return: the ancestor vector
    """
    weights = g if isinstance(g, WeightVector) else normalize(g)
    if scheme.is_stable and weights.is_uniform:
        return AncestorVector.identity(weights.n)

    kind = scheme.kind
    if kind is SchemeKind.multinomial:
        a = _multinomial(weights, rng)
    elif kind is SchemeKind.residual:
        a = _residual(weights, rng)
    elif kind is SchemeKind.killing:
        a = _killing(weights, rng)
    elif kind is SchemeKind.symmetrised:
        a = _symmetrised(weights, rng, scheme.fallback)
    else:
        order = resampling_order(scheme, weights)
        if kind is SchemeKind.stratified:
            a = _stratified(weights, order, rng)
        elif kind is SchemeKind.systematic:
            a = _systematic(weights, order, rng)
        else:
            a = _ssp(weights, order, rng)
    return AncestorVector(a)


@dataclass(frozen=True)
class ResamplingDistribution:
    """Exact law of a resampling scheme: one row of ``outcomes`` per ancestor vector."""

    outcomes: np.ndarray
    probabilities: np.ndarray

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "ResamplingDistribution":
        """Merge (ancestor array, probability) pairs with equal outcomes.

        :param n: number of particles
        :param pairs: iterable of (array of length n, probability)
        """
        merged: Dict[tuple, float] = {}
        for a, prob in pairs:
            if prob <= 0.0:
                continue
            key = tuple(int(i) for i in a)
            merged[key] = merged.get(key, 0.0) + prob
        keys = sorted(merged)
        outcomes = np.array(keys, dtype=int).reshape(len(keys), n)
        probabilities = np.array([merged[k] for k in keys])
        return cls(outcomes, probabilities)

    @property
    def n(self) -> int:
        """Number of particles."""
        return self.outcomes.shape[1]

    def __len__(self) -> int:
        """Number of outcomes with positive probability."""
        return self.outcomes.shape[0]

    def items(self) -> Iterator[Tuple[tuple, float]]:
        """Iterate over (outcome tuple, probability)."""
        for row, prob in zip(self.outcomes, self.probabilities):
            yield tuple(int(i) for i in row), float(prob)

    def as_dict(self) -> Dict[tuple, float]:
        """Outcome tuple to probability."""
        return dict(self.items())

    def probability(self, a) -> float:
        """Probability of one ancestor vector."""
        key = a.as_tuple() if isinstance(a, AncestorVector) else tuple(int(i) for i in a)
        return self.as_dict().get(key, 0.0)

    def offspring(self) -> np.ndarray:
        """Offspring counts, one row per outcome."""
        n = self.n
        rows = self.outcomes + n * np.arange(len(self))[:, None]
        return np.bincount(rows.ravel(), minlength=n * len(self)).reshape(len(self), n)

    def expected_offspring(self) -> np.ndarray:
        """Expected number of copies of each index."""
        return self.probabilities @ self.offspring()

    def identity_mask(self) -> np.ndarray:
        """Rows equal to the no-resampling outcome."""
        return np.all(self.outcomes == np.arange(self.n), axis=1)

    def off_identity_mass(self) -> float:
        """Probability that resampling changes anything."""
        return float(self.probabilities[~self.identity_mask()].sum())

    def by_signature(self) -> Dict[Optional[EventSignature], float]:
        """Aggregate probabilities by single-event signature (None for other profiles)."""
        out: Dict[Optional[EventSignature], float] = {}
        for row, prob in zip(self.outcomes, self.probabilities):
            a = AncestorVector(row)
            if a.is_identity:
                continue
            key = a.signature()
            out[key] = out.get(key, 0.0) + float(prob)
        return out


def unbiasedness_residual(dist: ResamplingDistribution, g: Sequence[float]) -> np.ndarray:
    """Expected offspring minus ``N w`` per index, zero for unbiased schemes."""
    weights = normalize(g)
    return dist.expected_offspring() - weights.n * weights.w


def _product_distribution(marginals: np.ndarray, layout: Callable[[tuple], np.ndarray]):
    """Law of independent slots, ``marginals[i, j] = P(slot i picks j)``."""
    n = marginals.shape[0]
    supports = [np.flatnonzero(row > 0) for row in marginals]
    size = int(np.prod([s.size for s in supports], dtype=float))
    if size > MAX_OUTCOMES:
        raise TooLargeForEnumerationError(f"{size} outcomes exceed {MAX_OUTCOMES}")
    pairs = []
    for picks in itertools.product(*supports):
        prob = float(np.prod(marginals[np.arange(n), picks]))
        pairs.append((layout(picks), prob))
    return ResamplingDistribution.from_pairs(n, pairs)


def _interval_marginals(cdf: np.ndarray, n: int) -> np.ndarray:
    """``P(F^-1((i + U)/N) = j)`` for a uniform U, as an (N, N) matrix."""
    lo = np.arange(n)[:, None] / n
    hi = lo + 1.0 / n
    overlap = np.minimum(hi, cdf[None, 1:]) - np.maximum(lo, cdf[None, :-1])
    return np.clip(overlap, 0.0, None) * n


def _exact_killing(weights: WeightVector) -> ResamplingDistribution:
    survive = weights.g / weights.g.max()
    marginals = (1.0 - survive)[:, None] * weights.w[None, :]
    marginals[np.diag_indices(weights.n)] += survive
    return _product_distribution(marginals, np.array)


def _exact_multinomial(weights: WeightVector) -> ResamplingDistribution:
    marginals = np.tile(weights.w, (weights.n, 1))
    return _product_distribution(marginals, np.array)


def _exact_residual(weights: WeightVector) -> ResamplingDistribution:
    n = weights.n
    counts = np.floor(n * weights.w).astype(int)
    remaining = int(n - counts.sum())
    if remaining == 0:
        return ResamplingDistribution.from_pairs(n, [(repeat_indices(counts), 1.0)])
    residual = normalize(n * weights.w - counts)
    pairs = []
    for extra in _compositions(remaining, n):
        prob = float(multinomial.pmf(extra, remaining, residual.w))
        pairs.append((repeat_indices(counts + np.array(extra)), prob))
    return ResamplingDistribution.from_pairs(n, pairs)


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        edges = (-1,) + bars + (total + parts - 1,)
        yield tuple(edges[i + 1] - edges[i] - 1 for i in range(parts))


def _ordered_layout(order: Permutation):
    def layout(picks):
        a = np.empty(order.n, dtype=int)
        a[order.perm] = order.perm[np.asarray(picks)]
        return a

    return layout


def _exact_stratified(weights: WeightVector, order: Permutation) -> ResamplingDistribution:
    w_ordered = normalize(weights.g[order.perm])
    marginals = _interval_marginals(w_ordered.cumdist, weights.n)
    return _product_distribution(marginals, _ordered_layout(order))


def _exact_systematic(weights: WeightVector, order: Permutation) -> ResamplingDistribution:
    n = weights.n
    w_ordered = normalize(weights.g[order.perm])
    # the outcome only changes where U crosses N * F(j) - i for some i, j
    scaled = n * w_ordered.cumdist
    breaks = np.unique(np.concatenate(([0.0, 1.0], scaled - np.floor(scaled))))
    breaks = breaks[(breaks >= 0.0) & (breaks <= 1.0)]
    layout = _ordered_layout(order)
    pairs = []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        u = 0.5 * (lo + hi)
        picks = w_ordered.inverse_cdf((np.arange(n) + u) / n)
        pairs.append((layout(picks), hi - lo))
    return ResamplingDistribution.from_pairs(n, pairs)


def _exact_ssp(weights: WeightVector, order: Permutation) -> ResamplingDistribution:
    pairs = []
    stack: List[Tuple[_SspState, float]] = [(_ssp_start(weights, order), 1.0)]
    while stack:
        state, prob = stack.pop()
        if state.k >= weights.n:
            pairs.append((_ssp_finish(state), prob))
            continue
        q = _ssp_swap_probability(state)
        for swap, branch_prob in ((True, q), (False, 1.0 - q)):
            if branch_prob <= 0.0:
                continue
            child = state.copy()
            _ssp_advance(child, swap, order)
            stack.append((child, prob * branch_prob))
    return ResamplingDistribution.from_pairs(weights.n, pairs)


def _exact_symmetrised(weights: WeightVector, fallback: bool) -> ResamplingDistribution:
    p = symmetrised_p(weights)
    n = weights.n
    if p > 1.0 + TOL:
        if not fallback:
            raise SymmetrisedConditionViolatedError(f"p = {p:.6g} exceeds one")
        return _exact_ssp(weights, mean_partition(weights.g))
    pairs = [(np.arange(n), 1.0 - p)]
    if p > 0.0:
        deficit = np.clip(-weights.eps, 0.0, None) / p
        excess = np.clip(weights.eps, 0.0, None) / p
        for k in np.flatnonzero(deficit > 0):
            for ell in np.flatnonzero(excess > 0):
                event = AncestorVector.single_event(n, int(k), int(ell))
                pairs.append((event.a, p * deficit[k] * excess[ell]))
    return ResamplingDistribution.from_pairs(n, pairs)


def exact_distribution(scheme: SchemeId, g: Sequence[float]) -> ResamplingDistribution:
    """Exact law of :func:`resample` for small N.

    :param scheme: resampling scheme
    :param g: nonnegative unnormalised weights, at most 12 of them
    :return: the distribution over ancestor vectors
    """
    weights = g if isinstance(g, WeightVector) else normalize(g)
    n = weights.n
    if n > MAX_ENUMERATION_N:
        raise TooLargeForEnumerationError(f"N = {n} exceeds {MAX_ENUMERATION_N}")
    if scheme.is_stable and weights.is_uniform:
        return ResamplingDistribution.from_pairs(n, [(np.arange(n), 1.0)])

    kind = scheme.kind
    if kind is SchemeKind.multinomial:
        return _exact_multinomial(weights)
    if kind is SchemeKind.residual:
        return _exact_residual(weights)
    if kind is SchemeKind.killing:
        return _exact_killing(weights)
    if kind is SchemeKind.symmetrised:
        return _exact_symmetrised(weights, scheme.fallback)
    order = resampling_order(scheme, weights)
    if kind is SchemeKind.stratified:
        return _exact_stratified(weights, order)
    if kind is SchemeKind.systematic:
        return _exact_systematic(weights, order)
    return _exact_ssp(weights, order)
