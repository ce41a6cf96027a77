"""Integer partitions (classifiers), set partitions and the moment/cumulant algebra.

A classifier is the decreasing multiplicity profile of a sequence of particle
labels.  For an exchangeable law, the joint cumulant of the energies carried by
a label sequence depends only on its classifier.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from functools import lru_cache
from itertools import chain
from math import factorial
from typing import Any, Union

from .errors import DomainError, IncompleteInputError, PreconditionError, SizeError

MAX_CLASSIFIER_ORDER = 12
MAX_SET_PARTITION_SIZE = 10

Block = tuple
SetPartition = tuple  # tuple of blocks, each a tuple of ground elements


class Classifier(tuple):
    """Decreasing tuple of positive parts; trailing zeros are stripped on construction."""

    def __new__(cls, parts: Iterable[int] = ()) -> "Classifier":
        values = [int(p) for p in parts]
        if any(p < 0 for p in values):
            raise DomainError(f"classifier parts must be nonnegative: {values}")
        return super().__new__(cls, sorted((p for p in values if p > 0), reverse=True))

    @property
    def parts(self) -> tuple[int, ...]:
        return tuple(self)

    @property
    def order(self) -> int:
        return sum(self)

    @property
    def length(self) -> int:
        return len(self)

    def is_nonrepeated(self) -> bool:
        return all(p == 1 for p in self)

    def __repr__(self) -> str:
        return f"Classifier({list(self)})"


LabelSource = Union[Mapping, Callable[[tuple], Any], "CumulantTable"]


class CumulantTable:
    """Exchangeable cumulants indexed by classifier.

    ``table[(2, 1)]`` is the joint cumulant of any label sequence whose
    multiplicity profile is (2, 1).  Calling the table with a label sequence
    looks up the cumulant of that sequence.
    """

    def __init__(self, entries: Mapping[Iterable[int], Any] | None = None) -> None:
        self._entries: dict[Classifier, Any] = {}
        for key, value in (entries or {}).items():
            self._entries[Classifier(key)] = value

    def __getitem__(self, key: Iterable[int]) -> Any:
        r = Classifier(key)
        try:
            return self._entries[r]
        except KeyError:
            raise IncompleteInputError(f"no cumulant for classifier {list(r)}") from None

    def __setitem__(self, key: Iterable[int], value: Any) -> None:
        self._entries[Classifier(key)] = value

    def __contains__(self, key: Iterable[int]) -> bool:
        return Classifier(key) in self._entries

    def __call__(self, labels: Sequence[int]) -> Any:
        return self[classifier_of(labels, labels=True)]

    def items(self):
        return self._entries.items()

    def orders(self) -> list[int]:
        return sorted({r.order for r in self._entries})


def enumerate_classifiers(n: int, max_order: int = MAX_CLASSIFIER_ORDER) -> list[Classifier]:
    """All integer partitions of ``n`` in lexicographically decreasing order."""
    if n < 1:
        raise DomainError(f"order must be positive, got {n}")
    if n > max_order:
        raise SizeError(f"order {n} exceeds the configured maximum {max_order}")
    return list(_classifiers(n))


@lru_cache(maxsize=None)
def _classifiers(n: int) -> tuple[Classifier, ...]:
    out: list[Classifier] = []

    def rec(remaining: int, largest: int, prefix: list[int]) -> None:
        if remaining == 0:
            out.append(Classifier(prefix))
            return
        for p in range(min(remaining, largest), 0, -1):
            prefix.append(p)
            rec(remaining - p, p, prefix)
            prefix.pop()

    rec(n, n, [])
    return tuple(out)


def repeated_classifiers(n: int) -> list[Classifier]:
    """Classifiers of order ``n`` other than the all-ones one."""
    return [r for r in enumerate_classifiers(n) if not r.is_nonrepeated()]


def nonrepeated(n: int) -> Classifier:
    return Classifier([1] * n)


def classifier_len(r: Iterable[int]) -> int:
    return sum(1 for p in r if p != 0)


def canonical_label_sequence(r: Sequence[int]) -> tuple[int, ...]:
    """Label sequence in which label j (1-based) appears ``r[j-1]`` times, in order."""
    if any(c < 0 for c in r):
        raise DomainError(f"multi-index components must be nonnegative: {list(r)}")
    if sum(r) < 1:
        raise DomainError("multi-index must have positive total order")
    return tuple(chain.from_iterable([j + 1] * c for j, c in enumerate(r)))


def classifier_of(values: Iterable, *, labels: bool = False) -> Classifier:
    """Classifier of a multi-index, or of a label sequence when ``labels`` is true."""
    values = list(values)
    if labels:
        return Classifier(Counter(values).values())
    return Classifier(values)


def remove_index(r: Sequence[int], ell: int, i: int) -> tuple[int, ...]:
    """Multi-index with component ``i`` (1-based) lowered by ``ell``."""
    _check_position(r, i)
    if r[i - 1] < ell:
        raise DomainError(f"component {i} of {list(r)} is smaller than {ell}")
    out = list(r)
    out[i - 1] -= ell
    return tuple(out)


def add_index(r: Sequence[int], ell: int, i: int) -> tuple[int, ...]:
    """Multi-index with component ``i`` (1-based) raised by ``ell``."""
    _check_position(r, i)
    out = list(r)
    out[i - 1] += ell
    return tuple(out)


def _check_position(r: Sequence[int], i: int) -> None:
    if not 1 <= i <= len(r):
        raise IndexError(f"position {i} outside 1..{len(r)}")


def break_set(r: Iterable[int], ell: int | None = None) -> set[Classifier]:
    """Classifiers reached by splitting part ``ell`` (1-based) into two positive parts.

    Without ``ell`` the union over all parts is returned.
    """
    parts = list(r)
    order = sum(parts)
    if ell is None:
        return set().union(*(break_set(parts, k) for k in range(1, len(parts) + 1))) if parts else set()
    if not 1 <= ell <= max(order, len(parts)):
        raise IndexError(f"part index {ell} outside 1..{order}")
    if ell > len(parts):
        return set()
    p = parts[ell - 1]
    rest = parts[: ell - 1] + parts[ell:]
    return {Classifier(rest + [q, p - q]) for q in range(1, p)}


def layer_sets(n: int) -> list[list[Classifier]]:
    """Layers of the classifiers of order n; layer k holds those of length n-k+1."""
    layers: list[list[Classifier]] = [[] for _ in range(n)]
    for r in enumerate_classifiers(n):
        layers[n - len(r)].append(r)
    return layers


def enumerate_set_partitions(ground: Iterable | int, max_size: int = MAX_SET_PARTITION_SIZE) -> list[SetPartition]:
    """All set partitions of ``ground`` (an iterable, or ``range(n)`` for an int).

    Order follows restricted growth strings, so it is deterministic.
    """
    elems = tuple(range(ground)) if isinstance(ground, int) else tuple(ground)
    if len(elems) > max_size:
        raise SizeError(f"ground set of size {len(elems)} exceeds the maximum {max_size}")
    return [tuple(tuple(elems[i] for i in block) for block in p) for p in _set_partitions(len(elems))]


@lru_cache(maxsize=None)
def _set_partitions(n: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    if n == 0:
        return ((),)
    out = []
    for p in _set_partitions(n - 1):
        for k in range(len(p)):
            out.append(p[:k] + (p[k] + (n - 1,),) + p[k + 1 :])
        out.append(p + ((n - 1,),))
    # restricted-growth order: sort by block membership of each element
    out.sort(key=_growth_string)
    return tuple(out)


def _growth_string(p: tuple[tuple[int, ...], ...]) -> tuple[int, ...]:
    where = {}
    for b, block in enumerate(p):
        for x in block:
            where[x] = b
    return tuple(where[x] for x in sorted(where))


def mobius_weight(k: int) -> int:
    """(-1)^(k-1) (k-1)!, the Möbius function of the partition lattice for k blocks."""
    return (-1) ** (k - 1) * factorial(k - 1)


def _resolver(source: LabelSource) -> Callable[[tuple], Any]:
    if isinstance(source, CumulantTable):
        return source
    if isinstance(source, Mapping):
        normalized = {tuple(sorted(k)): v for k, v in source.items()}

        def lookup(labels: tuple) -> Any:
            key = tuple(sorted(labels))
            try:
                return normalized[key]
            except KeyError:
                raise IncompleteInputError(f"missing entry for labels {list(labels)}") from None

        return lookup
    if callable(source):
        return source
    raise TypeError(f"unsupported source type {type(source).__name__}")


def moments_to_cumulants(moments: LabelSource, target: Sequence[int]) -> Any:
    """Joint cumulant of the variables labelled by ``target``.

    ``moments`` maps label sub-sequences to moments (or is a callable doing so).
    Values may be numpy arrays, which are combined elementwise.
    """
    get = _resolver(moments)
    target = tuple(target)
    total: Any = 0
    for p in _set_partitions(len(target)):
        term: Any = mobius_weight(len(p))
        for block in p:
            term = term * get(tuple(target[i] for i in block))
        total = total + term
    return total


def cumulants_to_moments(cumulants: LabelSource, target: Sequence[int]) -> Any:
    """Moment of the product over ``target`` as a sum over set partitions of cumulant products."""
    get = _resolver(cumulants)
    target = tuple(target)
    total: Any = 0
    for p in _set_partitions(len(target)):
        term: Any = 1
        for block in p:
            term = term * get(tuple(target[i] for i in block))
        total = total + term
    return total


def truncated_moment(wick: Sequence[int], plain: Sequence[int], cumulants: LabelSource) -> Any:
    """E[:Y_wick: Y^plain], the moment with every Wick-internal block removed.

    Sums over set partitions of the concatenated sequence, keeping only
    partitions whose blocks all meet the plain part.
    """
    get = _resolver(cumulants)
    seq = tuple(wick) + tuple(plain)
    first_plain = len(wick)
    total: Any = 0
    for p in _set_partitions(len(seq)):
        if any(max(block) < first_plain for block in p):
            continue
        term: Any = 1
        for block in p:
            term = term * get(tuple(seq[i] for i in block))
        total = total + term
    return total


def coloring_bound_holds(
    ground: Iterable,
    coloring: Mapping[Any, int],
    J: Iterable,
    partition: Iterable[Iterable],
) -> bool:
    """Check sum_l |c(A_l)| >= |c(R minus J)| + k - m for a partition whose blocks all meet J.

    ``m`` is the number of colors shared between J and its complement.
    """
    R = set(ground)
    J = set(J)
    blocks = [set(b) for b in partition]
    if set().union(*blocks) != R or sum(len(b) for b in blocks) != len(R):
        raise PreconditionError("blocks do not partition the ground set")
    if not J <= R or not J:
        raise PreconditionError("J must be a nonempty subset of the ground set")
    if any(not (b & J) for b in blocks):
        raise PreconditionError("a block is internal to the complement of J")
    rest_colors = {coloring[x] for x in R - J}
    m = len({coloring[x] for x in J} & rest_colors)
    lhs = sum(len({coloring[x] for x in b}) for b in blocks)
    return lhs >= len(rest_colors) + len(blocks) - m
