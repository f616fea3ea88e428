"""Multi-kernel orchestration.

The corpus is dealt round-robin to K partitions.  Each partition is
streamed once per batch and fanned out to the L kernel instances of that
batch, so K*L kernels run in total.  Each instance keeps its own local
top-N; a single aggregator merges them.
"""

from __future__ import annotations

import heapq
import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .codec import DEFAULT_PAGE_SIZE, StreamIndex, encode_corpus, index_stream, load_stream
from .errors import EngineIOError, PreconditionError
from .kernel import (
    DEFAULT_CAPACITY,
    DEFAULT_DEPTH,
    DEFAULT_READ_LATENCY,
    KernelStats,
    QueryMemory,
    cosines,
    load_query,
    run_kernel_simulated,
    scan,
    warm_up,
)
from .model import SparseVector

THREADS_ENV = "SPARSEMATCH_THREADS"


@dataclass(frozen=True)
class EngineConfig:
    kernels: int = 8
    batch: int = 1
    top_n: int = 1
    query_capacity: int = DEFAULT_CAPACITY
    prefetch_depth: int = DEFAULT_DEPTH
    read_latency: int = DEFAULT_READ_LATENCY
    simulate: bool = False
    page_size: int = DEFAULT_PAGE_SIZE
    reorder_window: int = 8
    threads: int | None = None

    def __post_init__(self):
        for name in ("kernels", "batch", "top_n", "query_capacity", "prefetch_depth",
                     "read_latency", "page_size"):
            if getattr(self, name) < 1:
                raise PreconditionError(f"{name} must be positive")
        if self.reorder_window < 0:
            raise PreconditionError("reorder_window must be non-negative")

    def worker_count(self) -> int:
        cap = self.threads
        if cap is None:
            env = os.environ.get(THREADS_ENV)
            cap = int(env) if env else (os.cpu_count() or 1)
        return max(1, min(self.kernels, cap))

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class ScoredDoc(NamedTuple):
    doc_id: int
    cosine: float


def _rank_key(entry: ScoredDoc) -> tuple[float, int]:
    return (-entry.cosine, entry.doc_id)


@dataclass(frozen=True)
class TopNTable:
    """Best documents for one query, by descending cosine then ascending id."""

    query_id: int
    entries: tuple[ScoredDoc, ...] = ()

    def to_json(self) -> str:
        return json.dumps({"query_id": self.query_id,
                           "top": [[d, c] for d, c in self.entries]})

    def to_text(self, names: Sequence[str] | None = None) -> str:
        lines = [f"query {self.query_id}"]
        for rank, (doc, cos) in enumerate(self.entries, start=1):
            label = f"  {names[doc]}" if names and 0 <= doc < len(names) else ""
            lines.append(f"{rank:4d}  {doc:>10d}  {cos:.6f}{label}")
        return "\n".join(lines)


def merge_topn(partials: Iterable[TopNTable | Sequence[ScoredDoc]], top_n: int,
               query_id: int | None = None) -> TopNTable:
    """Global top-N from per-partition tables that are each already ranked."""
    partials = list(partials)
    if query_id is None:
        query_id = next((p.query_id for p in partials if isinstance(p, TopNTable)), -1)
    runs = [p.entries if isinstance(p, TopNTable) else p for p in partials]
    merged = heapq.merge(*runs, key=_rank_key)
    return TopNTable(query_id, tuple(ScoredDoc(*e) for e in itertools.islice(merged, top_n)))


def local_topn(doc_ids: np.ndarray, scores: np.ndarray, top_n: int, query_id: int) -> TopNTable:
    if scores.size > top_n:
        cut = np.partition(scores, scores.size - top_n)[scores.size - top_n]
        keep = np.flatnonzero(scores >= cut)
    else:
        keep = np.arange(scores.size)
    order = keep[np.lexsort((doc_ids[keep], -scores[keep]))][:top_n]
    return TopNTable(query_id, tuple(map(ScoredDoc, doc_ids[order].tolist(), scores[order].tolist())))


def partition(corpus: Sequence, kernels: int) -> list:
    """Deal documents round-robin by ordinal into ``kernels`` partitions."""
    if kernels < 1:
        raise PreconditionError("kernels must be >= 1")
    return [corpus[k::kernels] for k in range(kernels)]


def partition_ordinals(num_docs: int, kernels: int) -> list[np.ndarray]:
    """Record ordinals of each partition of a packed stream (no copying)."""
    if kernels < 1:
        raise PreconditionError("kernels must be >= 1")
    return [np.arange(k, num_docs, kernels, dtype=np.int64) for k in range(kernels)]


@dataclass
class Metrics:
    """Wall-clock throughput of one run; documents count each batch pass."""

    wall_seconds: float
    total_docs: int
    total_partial_products: int

    @property
    def docs_per_sec(self) -> float:
        return self.total_docs / self.wall_seconds

    @property
    def partial_products_per_sec(self) -> float:
        return self.total_partial_products / self.wall_seconds


@dataclass
class RunResult:
    tables: list[TopNTable]
    stats: KernelStats
    per_kernel: list[KernelStats]
    metrics: Metrics
    config: EngineConfig = field(default_factory=EngineConfig)

    @property
    def table(self) -> TopNTable:
        return self.tables[0]


CorpusSource = StreamIndex | Sequence[SparseVector] | np.ndarray | str | os.PathLike


def open_corpus(source: CorpusSource, window: int = 8) -> StreamIndex:
    """Normalise any supported corpus source into a validated stream."""
    if isinstance(source, StreamIndex):
        return source
    if isinstance(source, (str, os.PathLike)):
        try:
            return load_stream(source, window)
        except OSError as exc:
            raise EngineIOError(f"{source}: {exc.strerror or exc}") from exc
    if isinstance(source, np.ndarray):
        return index_stream(source)
    return index_stream(encode_corpus(source))


def _scan_partition(qms: Sequence[QueryMemory], index: StreamIndex, ordinals: np.ndarray,
                    config: EngineConfig) -> tuple[list[TopNTable], list[KernelStats]]:
    if config.simulate:
        part = index.select(ordinals)
        tables, stats = [], []
        for qm in qms:
            results, st = run_kernel_simulated(qm, part, config.prefetch_depth, config.read_latency)
            ids = np.fromiter((r.doc_id for r in results), dtype=np.int64, count=len(results))
            scores = np.fromiter((r.cosine for r in results), dtype=np.float64, count=len(results))
            tables.append(local_topn(ids, scores, config.top_n, qm.query_id))
            stats.append(st)
        return tables, stats
    res = scan(qms, index, ordinals)
    tables = [
        local_topn(res.doc_ids, cosines(res.dot[l], qm.norm_q_sq, res.norm_c), config.top_n, qm.query_id)
        for l, qm in enumerate(qms)
    ]
    return tables, res.stats


def run_batch(corpus: CorpusSource, queries: Sequence[SparseVector],
              config: EngineConfig = EngineConfig()) -> RunResult:
    """Score every query against the whole corpus.

    Queries are taken in FIFO batches of ``config.batch``; within a batch
    each partition is read once for all of its queries.
    """
    if not queries:
        raise PreconditionError("run_batch needs at least one query")
    qms = [load_query(q, config.query_capacity, config.read_latency) for q in queries]
    index = open_corpus(corpus, config.reorder_window)
    parts = partition_ordinals(len(index), config.kernels)

    warm_up()
    tables: list[TopNTable] = []
    per_kernel: list[KernelStats] = []
    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=config.worker_count()) as pool:
        for lo in range(0, len(qms), config.batch):
            group = qms[lo:lo + config.batch]
            futures = [pool.submit(_scan_partition, group, index, ords, config) for ords in parts]
            outcomes = [f.result() for f in futures]
            for l, qm in enumerate(group):
                tables.append(merge_topn([o[0][l] for o in outcomes], config.top_n, qm.query_id))
            per_kernel.extend(o[1][l] for o in outcomes for l in range(len(group)))
    wall = max(time.perf_counter() - start, 1e-9)

    stats = KernelStats.total(per_kernel)
    passes = -(-len(qms) // config.batch)
    metrics = Metrics(wall, len(index) * passes, stats.partial_products)
    return RunResult(tables, stats, per_kernel, metrics, config)


def run_query(corpus: CorpusSource, query: SparseVector,
              config: EngineConfig = EngineConfig()) -> RunResult:
    return run_batch(corpus, [query], config)
