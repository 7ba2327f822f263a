"""Continuous-time resampling intensities.

For potentials ``v`` and weights ``g = exp(-delta * v)``, a stable scheme resamples with
probability of order ``delta``. The limit of ``r(a | g) / delta`` is the intensity of event
``a``; this module gives it in closed form for killing, ordered stratified, ordered
systematic, ordered SSP and symmetrised systematic resampling, and numerically for any
scheme through the exact finite-N distribution.

Rates only depend on differences of potentials, so ``v`` may be shifted freely.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from wif_smc.core import TOL, AncestorVector, EventSignature, Permutation, mean_partition
from wif_smc.exceptions import InvalidOrderError, NoIntensityLimitError
from wif_smc.resampling import (
    Ordering,
    ResamplingDistribution,
    SchemeId,
    SchemeKind,
    exact_distribution,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PotentialValues:
    """Potential values of the N particles, with their mean and minimum."""

    v: np.ndarray
    vbar: float = field(init=False)
    vmin: float = field(init=False)

    def __post_init__(self):
        """Validate and derive the summaries."""
        v = np.array(self.v, dtype=float).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError(f"potential values must be finite and nonempty, got {v.tolist()}")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "vbar", float(v.mean()))
        object.__setattr__(self, "vmin", float(v.min()))

    @property
    def n(self) -> int:
        """Number of particles."""
        return self.v.size

    @property
    def is_constant(self) -> bool:
        """Whether all particles share the same potential."""
        return bool(np.all(self.v == self.v[0]))


PotentialLike = Union[PotentialValues, Sequence[float], np.ndarray]


def as_potential(v: PotentialLike) -> PotentialValues:
    """Wrap raw values into :class:`PotentialValues`."""
    return v if isinstance(v, PotentialValues) else PotentialValues(v)


@dataclass(frozen=True)
class IntensityTable:
    """Sparse map from ancestor layouts to rates.

    ``layouts[e]`` is the full ancestor vector of event ``e`` and ``rates[e]`` its rate.
    ``delta`` is set for tables estimated at a finite step size.
    """

    layouts: np.ndarray
    rates: np.ndarray
    total: float
    scheme: Optional[str] = None
    delta: Optional[float] = None

    @classmethod
    def build(
        cls,
        n: int,
        events: Sequence[Tuple[np.ndarray, float]],
        scheme: Optional[str] = None,
        delta: Optional[float] = None,
        total: Optional[float] = None,
    ) -> "IntensityTable":
        """Collect (layout, rate) pairs, merging equal layouts.

        :param n: number of particles
        :param events: (ancestor array, rate) pairs
        :param scheme: scheme name for reporting
        :param delta: finite step size of a numeric estimate
        :param total: overall rate, defaults to the sum of the rates
        """
        merged: Dict[tuple, float] = {}
        for a, rate in events:
            key = tuple(int(i) for i in a)
            merged[key] = merged.get(key, 0.0) + float(rate)
        keys = sorted(merged)
        layouts = np.array(keys, dtype=int).reshape(len(keys), n)
        rates = np.array([merged[k] for k in keys], dtype=float)
        if total is None:
            total = float(rates.sum())
        return cls(layouts, rates, float(total), scheme, delta)

    @classmethod
    def empty(cls, n: int, scheme: Optional[str] = None) -> "IntensityTable":
        """Table of a cloud that never resamples."""
        return cls.build(n, [], scheme=scheme, total=0.0)

    @property
    def n(self) -> int:
        """Number of particles."""
        return self.layouts.shape[1]

    def __len__(self) -> int:
        """Number of events."""
        return self.layouts.shape[0]

    def items(self) -> Iterator[Tuple[tuple, float]]:
        """Iterate over (layout tuple, rate)."""
        for row, rate in zip(self.layouts, self.rates):
            yield tuple(int(i) for i in row), float(rate)

    def as_dict(self) -> Dict[tuple, float]:
        """Layout tuple to rate."""
        return dict(self.items())

    def rate(self, a) -> float:
        """Rate of one ancestor layout, zero if absent."""
        key = a.as_tuple() if isinstance(a, AncestorVector) else tuple(int(i) for i in a)
        return self.as_dict().get(key, 0.0)

    def offspring(self) -> np.ndarray:
        """Offspring counts, one row per event."""
        n, k = self.n, len(self)
        rows = self.layouts + n * np.arange(k)[:, None]
        return np.bincount(rows.ravel(), minlength=n * k).reshape(k, n)

    def by_signature(self) -> Dict[Optional[EventSignature], float]:
        """Rates aggregated by single-event signature, None collecting other profiles."""
        out: Dict[Optional[EventSignature], float] = {}
        for row, rate in zip(self.layouts, self.rates):
            key = AncestorVector(row).signature()
            out[key] = out.get(key, 0.0) + float(rate)
        return out

    def max_difference(self, other: "IntensityTable") -> float:
        """Largest absolute rate difference over the union of layouts."""
        mine, theirs = self.as_dict(), other.as_dict()
        keys = set(mine) | set(theirs)
        if not keys:
            return 0.0
        return max(abs(mine.get(k, 0.0) - theirs.get(k, 0.0)) for k in keys)

    def to_records(self) -> List[dict]:
        """JSON-ready event list."""
        records = []
        for row, rate in zip(self.layouts, self.rates):
            signature = AncestorVector(row).signature()
            records.append(
                {
                    "eliminated": None if signature is None else signature.eliminated,
                    "duplicated": None if signature is None else signature.duplicated,
                    "ancestors": [int(i) for i in row],
                    "rate": float(rate),
                }
            )
        return records


def default_order(v: PotentialLike) -> Permutation:
    """Mean partition of ``-v``: the particles with potential at or above the mean first."""
    return mean_partition(-as_potential(v).v)


def _check_order(pot: PotentialValues, order: Optional[Permutation]) -> Permutation:
    if order is None:
        return default_order(pot)
    if order.n != pot.n or not order.is_mean_partition_of(-pot.v):
        raise InvalidOrderError(
            f"order {order.perm.tolist()} is not a mean partition of -v for v={pot.v.tolist()}"
        )
    return order


def _closed_form_kind(scheme: SchemeId) -> SchemeKind:
    kind = scheme.kind
    if kind in (SchemeKind.killing, SchemeKind.symmetrised):
        return kind
    if kind in (SchemeKind.stratified, SchemeKind.systematic, SchemeKind.ssp):
        if scheme.ordering is Ordering.mean_partition:
            return kind
    raise NoIntensityLimitError(f"no closed-form intensity for {scheme.name}")


def has_intensity_limit(scheme: SchemeId) -> bool:
    """Whether the scheme has a closed-form intensity table."""
    try:
        _closed_form_kind(scheme)
    except NoIntensityLimitError:
        return False
    return True


def _ordered_event(order: Permutation, k: int, ell: int) -> np.ndarray:
    """Layout of the sorted event ``[k -> ell]`` written in the coordinates of ``order``."""
    b = AncestorVector.single_event(order.n, k, ell).a
    a = np.empty(order.n, dtype=int)
    a[order.perm] = order.perm[b]
    return a


def _killing_events(pot: PotentialValues):
    n = pot.n
    events = []
    for i in np.flatnonzero(pot.v - pot.vmin > TOL):
        rate = (pot.v[i] - pot.vmin) / n
        for j in range(n):
            if j != i:
                a = np.arange(n)
                a[i] = j
                events.append((a, rate))
    return events


def _stratified_events(pot: PotentialValues, order: Permutation):
    partial = np.cumsum(pot.v[order.perm] - pot.vbar)
    events = []
    for i in range(pot.n - 1):
        if partial[i] > TOL:
            events.append((_ordered_event(order, i, i + 1), partial[i]))
    return events


def _systematic_events(pot: PotentialValues, order: Permutation):
    n = pot.n
    ordered = pot.v[order.perm] - pot.vbar
    partial = np.concatenate(([0.0], np.cumsum(ordered)))
    m = int(np.count_nonzero(ordered >= -TOL))
    events = []
    # k, ell are 1-based positions in the ordered sequence
    for k in range(1, m + 1):
        for ell in range(m + 1, n + 1):
            rate = min(partial[k], partial[ell - 1]) - max(partial[k - 1], partial[ell])
            if rate > TOL:
                events.append((_ordered_event(order, k - 1, ell - 1), rate))
    return events


def _pairing_events(pot: PotentialValues):
    excess = np.clip(pot.v - pot.vbar, 0.0, None)
    deficit = np.clip(pot.vbar - pot.v, 0.0, None)
    scale = excess.sum()
    events = []
    if scale <= TOL:
        return events
    for k in np.flatnonzero(excess > 0):
        for ell in np.flatnonzero(deficit > 0):
            rate = excess[k] * deficit[ell] / scale
            events.append((AncestorVector.single_event(pot.n, int(k), int(ell)).a, rate))
    return events


def overall_rate(
    scheme: SchemeId, v: PotentialLike, order: Optional[Permutation] = None
) -> float:
    """Overall resampling rate from its closed form.

    :param scheme: a scheme with a continuous-time limit
    :param v: potential values
    :param order: mean partition of ``-v`` for ordered schemes, :func:`default_order` if None
    """
    kind = _closed_form_kind(scheme)
    pot = as_potential(v)
    if kind is SchemeKind.killing:
        return (pot.n - 1) * (pot.vbar - pot.vmin)
    if kind is SchemeKind.stratified:
        order = _check_order(pot, order)
        positions = np.arange(1, pot.n + 1)
        return float(np.sum(positions * (pot.vbar - pot.v[order.perm])))
    if kind is SchemeKind.systematic:
        _check_order(pot, order)
    return float(np.clip(pot.vbar - pot.v, 0.0, None).sum())


def intensity_table(
    scheme: SchemeId, v: PotentialLike, order: Optional[Permutation] = None
) -> IntensityTable:
    """Closed-form resampling intensity of a scheme at potentials ``v``.

    :param scheme: killing, stratified-partition, systematic-partition, ssp-partition or
        symmetrised-systematic
    :param v: potential values
    :param order: mean partition of ``-v`` for the ordered schemes
    :return: the table, with ``total`` from the closed-form overall rate
    """
    kind = _closed_form_kind(scheme)
    pot = as_potential(v)
    if kind is SchemeKind.killing:
        events = _killing_events(pot)
    elif kind is SchemeKind.stratified:
        events = _stratified_events(pot, _check_order(pot, order))
    elif kind is SchemeKind.systematic:
        events = _systematic_events(pot, _check_order(pot, order))
    else:
        events = _pairing_events(pot)
    total = overall_rate(scheme, pot, order)
    return IntensityTable.build(pot.n, events, scheme=scheme.name, total=total)


def numeric_intensity(scheme: SchemeId, v: PotentialLike, delta: float) -> IntensityTable:
    """Exact ``r(a | exp(-delta v)) / delta`` for every ``a`` other than the identity.

    :param scheme: any resampling scheme
    :param v: potential values, at most 12 of them
    :param delta: step size in (0, 1)
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    pot = as_potential(v)
    # shifting by the minimum keeps exp from underflowing
    dist = exact_distribution(scheme, np.exp(-delta * (pot.v - pot.vmin)))
    off = ~dist.identity_mask()
    events = zip(dist.outcomes[off], dist.probabilities[off] / delta)
    return IntensityTable.build(pot.n, list(events), scheme=scheme.name, delta=delta)


def richardson(table_h: IntensityTable, table_h2: IntensityTable) -> IntensityTable:
    """First-order extrapolation ``2 T(delta/2) - T(delta)`` of two numeric tables."""
    coarse, fine = table_h.as_dict(), table_h2.as_dict()
    events = [
        (np.array(key), 2.0 * fine.get(key, 0.0) - coarse.get(key, 0.0))
        for key in set(coarse) | set(fine)
    ]
    return IntensityTable.build(table_h.n, events, scheme=table_h.scheme)


def check_unbiased_identity(table: IntensityTable, v: PotentialLike) -> np.ndarray:
    """Residual of ``sum_a rate(a) (offspring_i(a) - 1) = vbar - v_i`` for each ``i``."""
    pot = as_potential(v)
    if len(table) == 0:
        lhs = np.zeros(pot.n)
    else:
        lhs = table.rates @ (table.offspring() - 1)
    return lhs - (pot.vbar - pot.v)


@dataclass(frozen=True)
class MarginalRates:
    """Per-index rates at which a particle is eliminated or duplicated."""

    elimination: np.ndarray
    duplication: np.ndarray


def marginal_rates(table: IntensityTable) -> MarginalRates:
    """Elimination and duplication rates of each index."""
    if len(table) == 0:
        zeros = np.zeros(table.n)
        return MarginalRates(zeros, zeros.copy())
    change = table.offspring() - 1
    return MarginalRates(
        elimination=table.rates @ np.clip(-change, 0, None),
        duplication=table.rates @ np.clip(change, 0, None),
    )


def jump_distribution(table: IntensityTable) -> ResamplingDistribution:
    """Law of the event drawn at a resampling time, rates divided by their sum."""
    total = table.rates.sum()
    if total <= 0.0:
        raise ValueError("a table with zero overall rate has no jump distribution")
    return ResamplingDistribution(table.layouts, table.rates / total)


@dataclass(frozen=True)
class RateOrdering:
    """Overall rates of killing, ordered stratified and ordered systematic (= SSP)."""

    killing: float
    stratified: float
    systematic_ssp: float

    @property
    def killing_dominates_systematic(self) -> bool:
        """Killing resamples at least as often as systematic."""
        return self.killing >= self.systematic_ssp - TOL

    @property
    def stratified_dominates_systematic(self) -> bool:
        """Stratified resamples at least as often as systematic."""
        return self.stratified >= self.systematic_ssp - TOL

    @property
    def larger(self) -> str:
        """Which of killing and stratified has the larger rate."""
        if abs(self.killing - self.stratified) <= TOL:
            return "equal"
        return "killing" if self.killing > self.stratified else "stratified"


def rate_ordering(v: PotentialLike, order: Optional[Permutation] = None) -> RateOrdering:
    """Compare the overall rates of killing, stratified and systematic resampling.

    :param v: potential values
    :param order: mean partition of ``-v`` shared by the ordered schemes
    """
    pot = as_potential(v)
    order = _check_order(pot, order)
    return RateOrdering(
        killing=overall_rate(SchemeId(SchemeKind.killing), pot),
        stratified=overall_rate(
            SchemeId(SchemeKind.stratified, Ordering.mean_partition), pot, order
        ),
        systematic_ssp=overall_rate(
            SchemeId(SchemeKind.systematic, Ordering.mean_partition), pot, order
        ),
    )
