"""One matching kernel: query memory, key comparator, distance accumulator.

Two equivalent entry points are provided.  :func:`run_kernel` is the
functional form used for bulk scans; its inner merge join is compiled with
numba and releases the GIL so several kernels can run on threads.
:func:`run_kernel_simulated` steps the pipeline cycle by cycle, modelling
the query prefetcher and its epoch tags.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .codec import KEY_MASK, KEY_SHIFT, VALUE_MASK, StreamIndex, index_stream
from .errors import PreconditionError, QueryTooLarge
from .model import MatchResult, SparseVector, TermEntry, cosine_from_sums

DEFAULT_CAPACITY = 2048  # 8 KB of 4-byte entries
DEFAULT_READ_LATENCY = 2
DEFAULT_DEPTH = 4


@dataclass(frozen=True)
class QueryMemory:
    query_id: int
    entries: tuple[TermEntry, ...]
    capacity: int
    norm_q_sq: int
    read_latency: int = DEFAULT_READ_LATENCY

    @property
    def keys(self) -> np.ndarray:
        return np.fromiter((e.key for e in self.entries), dtype=np.int64, count=len(self.entries))

    @property
    def values(self) -> np.ndarray:
        return np.fromiter((e.value for e in self.entries), dtype=np.int64, count=len(self.entries))


def load_query(q: SparseVector, capacity: int = DEFAULT_CAPACITY,
               read_latency: int = DEFAULT_READ_LATENCY) -> QueryMemory:
    if q.nnz > capacity:
        raise QueryTooLarge(q.nnz, capacity)
    if read_latency < 1:
        raise PreconditionError("read_latency must be at least 1")
    return QueryMemory(q.id, q.entries, capacity, q.norm_sq(), read_latency)


class Action(enum.Enum):
    ADVANCE_Q = "advance_q"
    ADVANCE_C = "advance_c"
    MATCH_BOTH = "match_both"


@dataclass
class ComparatorState:
    qp: int = 0
    epoch: int = 0
    current_doc: int | None = None
    dot_acc: int = 0
    norm_c_acc: int = 0
    pp_acc: int = 0
    comparisons: int = 0

    def start_document(self, doc_id: int) -> None:
        self.current_doc = doc_id
        self.qp = 0
        self.dot_acc = self.norm_c_acc = self.pp_acc = 0


def comparator_step(state: ComparatorState, q: TermEntry, c: TermEntry) -> Action:
    """Compare the query entry at ``state.qp`` with the current candidate entry.

    Advances ``qp`` itself; advancing the candidate cursor (and adding the
    candidate's square to the norm) is the caller's job.
    """
    state.comparisons += 1
    if q.key < c.key:
        state.qp += 1
        return Action.ADVANCE_Q
    if q.key > c.key:
        return Action.ADVANCE_C
    state.dot_acc += q.value * c.value
    state.pp_acc += 1
    state.qp += 1
    return Action.MATCH_BOTH


@dataclass
class KernelStats:
    docs_processed: int = 0
    items_consumed: int = 0
    comparisons: int = 0
    partial_products: int = 0
    rewinds: int = 0
    mispredicted_prefetches: int = 0
    cycles: int = 0

    def __add__(self, other: KernelStats) -> KernelStats:
        return KernelStats(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def total(cls, parts: Iterable[KernelStats]) -> KernelStats:
        acc = cls()
        for part in parts:
            acc = acc + part
        return acc


@njit(cache=True, nogil=True)
def _scan(q_keys, q_vals, q_off, items, starts, ends, dot, pp, norm_c, comparisons):
    """Merge-join every record against every query.

    Records are visited once each; the record's pairs are fanned out to all
    queries before moving on.  Results land in ``dot[l, j]``, ``pp[l, j]``,
    ``norm_c[j]`` and ``comparisons[l]``.
    """
    n_queries = q_off.size - 1
    for j in range(starts.size):
        s = starts[j]
        e = ends[j]
        nc = 0
        for t in range(s, e):
            cv = np.int64(items[t]) & VALUE_MASK
            nc += cv * cv
        norm_c[j] = nc
        for l in range(n_queries):
            base = q_off[l]
            m = q_off[l + 1] - base
            qi = 0
            d = 0
            p = 0
            c = 0
            for t in range(s, e):
                if qi >= m:
                    break
                it = np.int64(items[t])
                ck = (it >> KEY_SHIFT) & KEY_MASK
                while qi < m and q_keys[base + qi] < ck:
                    qi += 1
                    c += 1
                if qi < m:
                    c += 1
                    if q_keys[base + qi] == ck:
                        d += q_vals[base + qi] * (it & VALUE_MASK)
                        p += 1
                        qi += 1
            dot[l, j] = d
            pp[l, j] = p
            comparisons[l] += c


@dataclass
class ScanResult:
    """Raw per-record sums from scanning one stream with L queries."""

    doc_ids: np.ndarray
    dot: np.ndarray        # (L, n)
    pp: np.ndarray         # (L, n)
    norm_c: np.ndarray     # (n,)
    stats: list[KernelStats] = field(default_factory=list)


def scan(queries: Sequence[QueryMemory], index: StreamIndex,
         ordinals: np.ndarray | None = None) -> ScanResult:
    """Run the compiled kernel for each query over the selected records."""
    starts, ends, doc_ids = index.starts, index.ends, index.doc_ids
    if ordinals is not None:
        starts, ends, doc_ids = starts[ordinals], ends[ordinals], doc_ids[ordinals]
    n = starts.size
    q_off = np.zeros(len(queries) + 1, dtype=np.int64)
    np.cumsum([len(q.entries) for q in queries], out=q_off[1:])
    q_keys = np.concatenate([q.keys for q in queries]) if queries else np.zeros(0, np.int64)
    q_vals = np.concatenate([q.values for q in queries]) if queries else np.zeros(0, np.int64)
    dot = np.zeros((len(queries), n), dtype=np.int64)
    pp = np.zeros((len(queries), n), dtype=np.int64)
    norm_c = np.zeros(n, dtype=np.int64)
    comparisons = np.zeros(len(queries), dtype=np.int64)
    _scan(q_keys.astype(np.int64), q_vals.astype(np.int64), q_off, index.items,
          starts, ends, dot, pp, norm_c, comparisons)
    consumed = int(n + (ends - starts).sum())
    stats = [
        KernelStats(
            docs_processed=n,
            items_consumed=consumed,
            comparisons=int(comparisons[l]),
            partial_products=int(pp[l].sum()),
            rewinds=n,
        )
        for l in range(len(queries))
    ]
    return ScanResult(doc_ids, dot, pp, norm_c, stats)


def cosines(dot: np.ndarray, norm_q_sq: int, norm_c: np.ndarray) -> np.ndarray:
    """Vectorised :func:`cosine_from_sums`, bit-identical to it."""
    denom = np.sqrt(np.float64(norm_q_sq) * norm_c.astype(np.float64))
    out = np.zeros(dot.shape, dtype=np.float64)
    ok = denom > 0
    np.divide(dot.astype(np.float64), denom, out=out, where=ok)
    return np.minimum(out, 1.0)


def _as_index(items: Iterable[int] | np.ndarray | StreamIndex) -> StreamIndex:
    if isinstance(items, StreamIndex):
        return items
    if not isinstance(items, np.ndarray):
        items = np.fromiter(items, dtype=np.uint32)
    return index_stream(items)


def run_kernel(qm: QueryMemory, items: Iterable[int] | np.ndarray | StreamIndex
               ) -> tuple[list[MatchResult], KernelStats]:
    """Score every record of an in-order item stream against ``qm``."""
    index = _as_index(items)
    res = scan([qm], index)
    results = [
        MatchResult(doc, d, qm.norm_q_sq, nc, cosine_from_sums(d, qm.norm_q_sq, nc), p)
        for doc, d, nc, p in zip(res.doc_ids.tolist(), res.dot[0].tolist(),
                                 res.norm_c.tolist(), res.pp[0].tolist())
    ]
    return results, res.stats[0]


@dataclass
class _Read:
    serial: int
    index: int
    epoch: int
    ready_at: int


def run_kernel_simulated(qm: QueryMemory, items: Iterable[int] | np.ndarray | StreamIndex,
                         depth: int = DEFAULT_DEPTH, read_latency: int | None = None,
                         trace: list | None = None) -> tuple[list[MatchResult], KernelStats]:
    """Cycle-stepped kernel with an epoch-tagged query prefetcher.

    Per cycle, in order:

    1. ready reads at the head of the prefetch FIFO whose epoch is stale are
       dropped and counted as mispredicted;
    2. the comparator does at most one thing: consume a header (closing the
       previous record, which rewinds the query pointer and bumps the
       epoch), compare the FIFO head against the candidate pair, drain a
       candidate pair once the query is exhausted, or stall;
    3. the prefetcher issues the next sequential query read, tagged with
       the current epoch, if the FIFO has room.

    If ``trace`` is a list, ``(cycle, event, serial, query_index, tag_epoch,
    current_epoch)`` tuples are appended for issue/consume/discard events.
    """
    if depth < 1:
        raise PreconditionError("prefetch depth must be at least 1")
    latency = qm.read_latency if read_latency is None else read_latency
    if latency < 1:
        raise PreconditionError("read_latency must be at least 1")
    index = _as_index(items)
    stream = index.items.tolist()
    n_items = len(stream)
    q = qm.entries
    m = len(q)

    stats = KernelStats()
    results: list[MatchResult] = []
    fifo: deque[_Read] = deque()
    state: ComparatorState | None = None
    epoch = 0
    issue_next = 0
    serial = 0
    pos = 0
    cycle = 0
    last_emit = -1

    def close_record() -> None:
        nonlocal epoch, issue_next, last_emit
        results.append(MatchResult(state.current_doc, state.dot_acc, qm.norm_q_sq, state.norm_c_acc,
                                   cosine_from_sums(state.dot_acc, qm.norm_q_sq, state.norm_c_acc),
                                   state.pp_acc))
        stats.docs_processed += 1
        stats.partial_products += state.pp_acc
        stats.rewinds += 1
        epoch += 1
        issue_next = 0
        last_emit = cycle

    while True:
        while fifo and fifo[0].epoch != epoch and fifo[0].ready_at <= cycle:
            stale = fifo.popleft()
            stats.mispredicted_prefetches += 1
            if trace is not None:
                trace.append((cycle, "discard", stale.serial, stale.index, stale.epoch, epoch))

        if pos == n_items:
            if state is not None:
                close_record()
            break
        raw = stream[pos]
        if raw >> 31:
            if state is not None:
                close_record()
            else:
                state = ComparatorState()
            state.epoch = epoch
            state.start_document(raw & 0x7FFF_FFFF)
            pos += 1
            stats.items_consumed += 1
        else:
            cand = TermEntry((raw >> KEY_SHIFT) & KEY_MASK, raw & VALUE_MASK)
            if state.qp >= m:
                state.norm_c_acc += cand.value * cand.value
                pos += 1
                stats.items_consumed += 1
            elif fifo and fifo[0].epoch == epoch and fifo[0].ready_at <= cycle:
                head = fifo[0]
                assert head.index == state.qp
                action = comparator_step(state, q[head.index], cand)
                if action is not Action.ADVANCE_C:
                    fifo.popleft()
                    if trace is not None:
                        trace.append((cycle, "consume", head.serial, head.index, head.epoch, epoch))
                if action is not Action.ADVANCE_Q:
                    state.norm_c_acc += cand.value * cand.value
                    pos += 1
                    stats.items_consumed += 1

        if len(fifo) < depth and issue_next < m:
            fifo.append(_Read(serial, issue_next, epoch, cycle + latency))
            if trace is not None:
                trace.append((cycle, "issue", serial, issue_next, epoch, epoch))
            serial += 1
            issue_next += 1
        cycle += 1

    # reads still in flight after the last rewind are dropped the same way
    for stale in fifo:
        stats.mispredicted_prefetches += 1
        if trace is not None:
            trace.append((cycle, "discard", stale.serial, stale.index, stale.epoch, epoch))
    if state is not None:
        stats.comparisons = state.comparisons
    stats.cycles = last_emit + 1
    return results, stats


_warm = False


def warm_up() -> None:
    """Force JIT compilation of the compiled scan (cached on disk afterwards)."""
    global _warm
    if _warm:
        return
    from .codec import encode_record

    _warm = True
    qm = load_query(SparseVector.from_pairs(0, {1: 1}))
    items = np.asarray(encode_record(SparseVector.from_pairs(1, {1: 2})), dtype=np.uint32)
    run_kernel(qm, items)
    # arrays mapped from file buffers are read-only and get their own specialisation
    items.flags.writeable = False
    run_kernel(qm, items)
