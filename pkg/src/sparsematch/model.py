"""Sparse bag-of-words vectors and cosine scoring.

Counts are integers, so dot products and squared norms are accumulated
exactly; the only floating point step is the final normalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import PreconditionError

KEY_LIMIT = 1 << 19
MAX_COUNT = 4095
ID_LIMIT = 1 << 31


class TermEntry(NamedTuple):
    key: int
    value: int


@dataclass(frozen=True, slots=True)
class SparseVector:
    """A document or query: pattern id plus strictly ascending entries.

    Stored entries are nonzero; a count of 0 is simply absent.
    """

    id: int
    entries: tuple[TermEntry, ...] = ()

    def __post_init__(self):
        if not 0 <= self.id < ID_LIMIT:
            raise PreconditionError(f"pattern id {self.id} outside [0, 2^31)")
        prev = -1
        for key, value in self.entries:
            if key <= prev:
                raise PreconditionError(f"keys of vector {self.id} not strictly ascending at key {key}")
            if key >= KEY_LIMIT:
                raise PreconditionError(f"key {key} does not fit 19 bits")
            if not 1 <= value <= MAX_COUNT:
                raise PreconditionError(f"count {value} for key {key} outside [1, {MAX_COUNT}]")
            prev = key

    @classmethod
    def from_pairs(cls, id: int, pairs: Iterable[tuple[int, int]] | Mapping[int, int]) -> SparseVector:
        """Build from (key, value) pairs in any order; pairs must have distinct keys."""
        if isinstance(pairs, Mapping):
            pairs = pairs.items()
        return cls(id, tuple(TermEntry(int(k), int(v)) for k, v in sorted(pairs)))

    @property
    def nnz(self) -> int:
        return len(self.entries)

    @property
    def keys(self) -> tuple[int, ...]:
        return tuple(e.key for e in self.entries)

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(e.value for e in self.entries)

    def norm_sq(self) -> int:
        return sum(v * v for _, v in self.entries)

    def as_dict(self) -> dict[int, int]:
        return dict(self.entries)


@dataclass(frozen=True, slots=True)
class MatchResult:
    doc_id: int
    dot: int
    norm_q_sq: int
    norm_c_sq: int
    cosine: float
    pp_count: int


def cosine_from_sums(dot: int, norm_q_sq: int, norm_c_sq: int) -> float:
    """Cosine from exact integer sums; 0 when either vector is all-zero.

    sqrt(a)*sqrt(b) is evaluated as sqrt(a*b) so self-similarity lands on
    exactly 1.0.  Vectorised callers must use the same operation order to
    stay bit-identical.
    """
    if norm_q_sq == 0 or norm_c_sq == 0:
        return 0.0
    return min(1.0, dot / math.sqrt(float(norm_q_sq) * float(norm_c_sq)))


def score_pair(query: SparseVector, candidate: SparseVector) -> MatchResult:
    """Score one candidate against a query with a sorted merge join."""
    q, c = query.entries, candidate.entries
    i = j = 0
    dot = pp = 0
    while i < len(q) and j < len(c):
        qk, ck = q[i].key, c[j].key
        if qk < ck:
            i += 1
        elif qk > ck:
            j += 1
        else:
            dot += q[i].value * c[j].value
            pp += 1
            i += 1
            j += 1
    nq = query.norm_sq()
    nc = candidate.norm_sq()
    return MatchResult(candidate.id, dot, nq, nc, cosine_from_sums(dot, nq, nc), pp)


def oracle_score_dense(query: SparseVector, candidate: SparseVector, dim: int) -> MatchResult:
    """Reference scorer: expand both vectors to dense arrays of length ``dim``.

    Deliberately shares no traversal code with :func:`score_pair`.
    """
    top = max([e.key for e in query.entries] + [e.key for e in candidate.entries], default=-1)
    if dim <= top:
        raise PreconditionError(f"dim {dim} must exceed the largest key {top}")
    a = np.zeros(dim, dtype=np.int64)
    b = np.zeros(dim, dtype=np.int64)
    for key, value in query.entries:
        a[key] = value
    for key, value in candidate.entries:
        b[key] = value
    products = a * b
    dot = int(products.sum())
    nq = int((a * a).sum())
    nc = int((b * b).sum())
    if nq == 0 or nc == 0:
        cosine = 0.0
    else:
        cosine = min(1.0, dot / (math.sqrt(nq) * math.sqrt(nc)))
    return MatchResult(candidate.id, dot, nq, nc, cosine, int(np.count_nonzero(products)))
