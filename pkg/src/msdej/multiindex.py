"""Multi-indices and the hierarchical / remainder index sets.

A multi-index is a finite word over {-1, 0, 1, ..., m}: component 0 stands
for a time integral, j >= 1 for the j-th Brownian component and -1 for the
jump measure.  The strong and weak scheme families are indexed by the
hierarchical sets built here; the remainder set of a hierarchical set
indexes the local truncation error.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product


class InvalidIndexError(ValueError):
    """Raised for malformed multi-indices or set parameters."""


@dataclass(frozen=True)
class MultiIndex:
    """An immutable word over {-1, 0, ..., m}.

    Sorting uses (length, lexicographic with -1 < 0 < 1 < ... < m), the
    canonical enumeration order used everywhere sets are materialized.
    """

    components: tuple[int, ...]
    m: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise InvalidIndexError(f"noise dimension m must be >= 1, got {self.m}")
        for j in self.components:
            if not (-1 <= j <= self.m):
                raise InvalidIndexError(
                    f"component {j} outside {{-1, 0, ..., {self.m}}}"
                )

    def __lt__(self, other: "MultiIndex") -> bool:
        return (len(self.components), self.components) < (
            len(other.components),
            other.components,
        )

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __str__(self) -> str:
        if not self.components:
            return "v"
        return ",".join(str(j) for j in self.components)


EMPTY = MultiIndex((), 1)


def empty_index(m: int = 1) -> MultiIndex:
    """The length-zero index v for noise dimension m."""
    return MultiIndex((), m)


def length(alpha: MultiIndex) -> int:
    """l(alpha): number of components."""
    return len(alpha.components)


def count_zeros(alpha: MultiIndex) -> int:
    """n(alpha): number of components equal to 0."""
    return sum(1 for j in alpha.components if j == 0)


def count_jumps(alpha: MultiIndex) -> int:
    """s(alpha): number of components equal to -1."""
    return sum(1 for j in alpha.components if j == -1)


def drop_first(alpha: MultiIndex) -> MultiIndex:
    """-alpha: delete the first component."""
    if not alpha.components:
        raise InvalidIndexError("cannot drop a component of the empty index v")
    return MultiIndex(alpha.components[1:], alpha.m)


def drop_last(alpha: MultiIndex) -> MultiIndex:
    """alpha-: delete the last component."""
    if not alpha.components:
        raise InvalidIndexError("cannot drop a component of the empty index v")
    return MultiIndex(alpha.components[:-1], alpha.m)


@dataclass(frozen=True)
class IndexSet:
    """A finite set of multi-indices sharing the same component bound m."""

    elements: frozenset[MultiIndex]
    m: int

    def __post_init__(self):
        for alpha in self.elements:
            if alpha.m != self.m:
                raise InvalidIndexError(
                    f"index {alpha} has m={alpha.m}, set has m={self.m}"
                )

    def __contains__(self, alpha: MultiIndex) -> bool:
        return alpha in self.elements

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.sorted())

    def sorted(self) -> list[MultiIndex]:
        """Canonical enumeration: by length, then lexicographic."""
        return sorted(self.elements, key=lambda a: (len(a.components), a.components))

    def is_hierarchical(self) -> bool:
        """Nonempty, bounded length, and closed under drop_first."""
        if EMPTY_OF(self.m) not in self.elements:
            return False
        for alpha in self.elements:
            if len(alpha) >= 1 and drop_first(alpha) not in self.elements:
                return False
        return True


def EMPTY_OF(m: int) -> MultiIndex:
    return MultiIndex((), m)


def _as_two_gamma(gamma) -> int:
    """Convert a half-integer order to the exact doubled integer 2*gamma.

    Accepts int, Fraction, str, or a float that is exactly a half-integer.
    Rejects anything that cannot be represented exactly: the set predicate
    l(alpha) = n(alpha) = gamma + 1/2 is evaluated on integers only.
    """
    if isinstance(gamma, bool):
        raise InvalidIndexError("gamma must be a half-integer, got bool")
    if isinstance(gamma, int):
        return 2 * gamma
    if isinstance(gamma, str):
        gamma = Fraction(gamma)
    if isinstance(gamma, float):
        doubled = gamma * 2
        if doubled != int(doubled):
            raise InvalidIndexError(f"gamma={gamma} is not a half-integer")
        return int(doubled)
    if isinstance(gamma, Fraction):
        doubled = gamma * 2
        if doubled.denominator != 1:
            raise InvalidIndexError(f"gamma={gamma} is not a half-integer")
        return int(doubled)
    raise InvalidIndexError(f"unsupported gamma type {type(gamma).__name__}")


def _all_words(max_len: int, m: int):
    alphabet = list(range(-1, m + 1))
    for n in range(max_len + 1):
        for word in product(alphabet, repeat=n):
            yield MultiIndex(word, m)


def strong_hierarchical_set(gamma, m: int = 1) -> IndexSet:
    """The strong-scheme index set of order gamma.

    Contains every alpha with l(alpha) + n(alpha) <= 2*gamma, plus the single
    all-zero word of length gamma + 1/2 when gamma is an odd half-integer.
    gamma must be a positive half-integer (0.5, 1.0, 1.5, ...).
    """
    two_gamma = _as_two_gamma(gamma)
    if two_gamma < 1:
        raise InvalidIndexError(f"gamma must be >= 0.5, got {gamma}")
    if m < 1:
        raise InvalidIndexError(f"m must be >= 1, got {m}")
    # l + n <= 2*gamma bounds l by 2*gamma; the special all-zero word has
    # length gamma + 1/2 <= 2*gamma for gamma >= 1/2.
    max_len = two_gamma
    members = set()
    for alpha in _all_words(max_len, m):
        l, n = length(alpha), count_zeros(alpha)
        if l + n <= two_gamma:
            members.add(alpha)
        elif two_gamma % 2 == 1 and 2 * l == two_gamma + 1 and l == n:
            members.add(alpha)
    return IndexSet(frozenset(members), m)


def weak_hierarchical_set(eta: int, m: int = 1) -> IndexSet:
    """The weak-scheme index set of order eta: all words with l(alpha) <= eta."""
    if not isinstance(eta, int) or isinstance(eta, bool) or eta < 1:
        raise InvalidIndexError(f"eta must be a positive integer, got {eta!r}")
    if m < 1:
        raise InvalidIndexError(f"m must be >= 1, got {m}")
    return IndexSet(frozenset(_all_words(eta, m)), m)


def remainder_set(hierarchical: IndexSet) -> IndexSet:
    """Indices not in the set whose first-deleted word is in the set.

    The input must be hierarchical (contains v, closed under drop_first);
    the closure is checked and violations raise InvalidIndexError.
    """
    if not hierarchical.is_hierarchical():
        raise InvalidIndexError("input set is not hierarchical")
    m = hierarchical.m
    candidates = set()
    for alpha in hierarchical.elements:
        for j in range(-1, m + 1):
            candidates.add(MultiIndex((j,) + alpha.components, m))
    return IndexSet(frozenset(candidates - hierarchical.elements), m)
