"""Weight arithmetic, permutations and ancestor vectors.

All indices are zero-based. The ``i``-th entry of an ancestor vector is the index of the
particle copied into slot ``i``.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from wif_smc.exceptions import (
    AllZeroWeightsError,
    IndexOutOfRangeError,
    NegativeWeightError,
    ResamplingFailureError,
)

TOL = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class WeightVector:
    """Unnormalised weights with their normalised and cumulative forms.

    ``eps[i] = N * w[i] - 1`` and ``csum[i] = -sum(eps[:i])`` for ``i = 0..N``, so that
    ``cumdist[i] = (i - csum[i]) / N``.
    """

    g: np.ndarray
    w: np.ndarray
    eps: np.ndarray
    cumdist: np.ndarray
    csum: np.ndarray

    @property
    def n(self) -> int:
        """Number of particles."""
        return len(self.g)

    @property
    def is_uniform(self) -> bool:
        """Whether all weights are equal."""
        return bool(np.all(self.g == self.g[0]))

    def inverse_cdf(self, u) -> np.ndarray:
        """Generalised inverse of the cumulative distribution.

        Returns, for each ``u`` in (0, 1], the index ``i`` with ``F(i) < u <= F(i + 1)``.

        :param u: scalar or array of uniforms in (0, 1]
        :return: integer array of indices
        """
        idx = np.searchsorted(self.cumdist[1:], u, side="left")
        return np.minimum(idx, self.n - 1)

    def satisfies_nearly_constant_partition(self) -> bool:
        """Check that the weights are nearly constant and mean partitioned.

        This requires ``sum(|eps|) < 2`` and that the non-positive ``eps`` all precede the
        positive ones.
        """
        if np.abs(self.eps).sum() >= 2.0:
            return False
        positive = self.eps > 0
        m = int(np.argmax(positive)) if positive.any() else self.n
        return m >= 1 and not positive[:m].any() and bool(positive[m:].all())


def normalize(g: Sequence[float]) -> WeightVector:
    """Normalise a vector of nonnegative weights.

    :param g: unnormalised weights
    :return: the WeightVector with all derived fields
    """
    g = np.array(g, dtype=float).ravel()
    if g.size == 0:
        raise AllZeroWeightsError("empty weight vector")
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise NegativeWeightError(f"weights must be finite and nonnegative, got {g.tolist()}")
    total = g.sum()
    if total <= 0:
        raise AllZeroWeightsError(f"all {g.size} weights are zero")

    n = g.size
    w = g / total
    eps = n * w - 1.0
    cumdist = np.concatenate(([0.0], np.cumsum(w)))
    cumdist[-1] = 1.0
    csum = np.concatenate(([0.0], -np.cumsum(eps)))
    csum[-1] = 0.0
    return WeightVector(
        g=_frozen(g),
        w=_frozen(w),
        eps=_frozen(eps),
        cumdist=_frozen(cumdist),
        csum=_frozen(csum),
    )


@dataclass(frozen=True)
class Permutation:
    """A bijection of ``0..N-1``.

    When produced by :func:`mean_partition`, ``m`` is the size of the block of values at or
    below the mean and ``values`` is the partitioned vector.
    """

    perm: np.ndarray
    m: Optional[int] = None
    values: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        """Validate the bijection."""
        perm = np.asarray(self.perm, dtype=int)
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError(f"not a permutation: {perm.tolist()}")
        object.__setattr__(self, "perm", _frozen(perm))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        """Identity permutation of size n."""
        return cls(np.arange(n))

    @property
    def n(self) -> int:
        """Size of the permutation."""
        return self.perm.size

    def is_mean_partition_of(self, u: Sequence[float], tol: float = TOL) -> bool:
        """Check the two-block mean partition property for ``u``.

        :param u: the partitioned values
        :param tol: absolute tolerance on comparisons with the mean
        """
        u = np.asarray(u, dtype=float)
        if u.size != self.n:
            return False
        ordered = u[self.perm]
        above = ordered > u.mean() + tol
        below = ordered <= u.mean() + tol
        if not below[0]:
            return False
        m = self.n if not above.any() else int(np.argmax(above))
        return bool(below[:m].all() and (ordered[m:] > u.mean() - tol).all())

    def __len__(self) -> int:
        """Size of the permutation."""
        return self.n


def mean_partition(u: Sequence[float]) -> Permutation:
    """Partition indices about the mean with Hoare's sweep.

    Values less than or equal to the mean come first. The sweep only looks at the
    predicate ``u[i] <= mean``, so two vectors with the same predicate pattern get the same
    permutation.

    :param u: values to partition
    :return: the permutation, with ``m`` the size of the lower block
    """
    u = np.asarray(u, dtype=float).ravel()
    n = u.size
    if n == 0:
        raise ValueError("cannot partition an empty vector")
    low = u <= u.mean()
    if not low.any():
        # only reachable through rounding of the mean of near-equal values
        low[:] = True

    perm = list(range(n))
    i, j = 0, n - 1
    while True:
        while i <= j and low[perm[i]]:
            i += 1
        while i <= j and not low[perm[j]]:
            j -= 1
        if i >= j:
            break
        perm[i], perm[j] = perm[j], perm[i]
    return Permutation(np.array(perm), m=i, values=_frozen(u.copy()))


@dataclass(frozen=True)
class EventSignature:
    """A single-death event: particle ``eliminated`` dies, ``duplicated`` is copied twice."""

    eliminated: int
    duplicated: int

    def __post_init__(self):
        """Check that the two indices differ."""
        if self.eliminated == self.duplicated:
            raise ValueError("eliminated and duplicated indices must differ")

    def ancestors(self, n: int) -> "AncestorVector":
        """Canonical nondecreasing ancestor vector of this event."""
        return AncestorVector.single_event(n, self.eliminated, self.duplicated)


@dataclass(frozen=True)
class AncestorVector:
    """Ancestor indices of a resampling step."""

    a: np.ndarray

    def __post_init__(self):
        """Validate the indices."""
        a = np.asarray(self.a, dtype=int).ravel()
        if a.size and (a.min() < 0 or a.max() >= a.size):
            raise IndexOutOfRangeError(f"ancestor indices out of range: {a.tolist()}")
        object.__setattr__(self, "a", _frozen(a))

    @classmethod
    def identity(cls, n: int) -> "AncestorVector":
        """The no-resampling outcome ``0..n-1``."""
        return cls(np.arange(n))

    @classmethod
    def single_event(cls, n: int, k: int, ell: int) -> "AncestorVector":
        """Sorted ``0..n-1`` with ``k`` omitted and ``ell`` duplicated.

        :param n: number of particles
        :param k: eliminated index
        :param ell: duplicated index
        """
        if k == ell or not (0 <= k < n and 0 <= ell < n):
            raise IndexOutOfRangeError(f"invalid single event ({k} -> {ell}) for n={n}")
        counts = np.ones(n, dtype=int)
        counts[k] = 0
        counts[ell] = 2
        return cls(np.repeat(np.arange(n), counts))

    @property
    def n(self) -> int:
        """Number of particles."""
        return self.a.size

    @property
    def offspring(self) -> np.ndarray:
        """Number of copies of each index."""
        return np.bincount(self.a, minlength=self.n)

    @property
    def is_identity(self) -> bool:
        """Whether this is the no-resampling outcome."""
        return bool(np.array_equal(self.a, np.arange(self.n)))

    def signature(self) -> Optional[EventSignature]:
        """The single-death signature, or None if the offspring profile is not one."""
        counts = self.offspring
        zeros = np.flatnonzero(counts == 0)
        twos = np.flatnonzero(counts == 2)
        if zeros.size == 1 and twos.size == 1 and np.count_nonzero(counts == 1) == self.n - 2:
            return EventSignature(int(zeros[0]), int(twos[0]))
        return None

    def as_tuple(self) -> tuple:
        """Hashable form."""
        return tuple(int(i) for i in self.a)


def apply_ancestors(x: np.ndarray, a: AncestorVector) -> np.ndarray:
    """Reindex a particle cloud by an ancestor vector.

    :param x: cloud with the particle index on the first axis
    :param a: ancestor vector
    :return: new cloud whose entry i is ``x[a[i]]``
    """
    x = np.asarray(x)
    if x.shape[0] != a.n:
        raise IndexOutOfRangeError(f"cloud has {x.shape[0]} particles, ancestors {a.n}")
    return x[a.a]


def repeat_indices(counts: np.ndarray) -> np.ndarray:
    """Nondecreasing index vector with ``counts[i]`` copies of ``i``."""
    counts = np.asarray(counts, dtype=int)
    if counts.min() < 0:
        raise ResamplingFailureError(f"negative offspring count in {counts.tolist()}")
    return np.repeat(np.arange(counts.size), counts)
