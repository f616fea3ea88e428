"""Deterministic corpus synthesizer.

Scales a small base corpus to an arbitrary number of documents by
perturbing copies of base documents: recount some entries, delete one
present word, insert one absent word.

Randomness is drawn per block of ``BLOCK_DOCS`` documents from a stream
seeded by ``(seed, block)``; each document consumes a fixed number of
uniforms at a fixed offset inside its block, so document ``i`` depends only
on ``(base, params, i)`` and blocks can be generated independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .codec import HEADER_FLAG, KEY_SHIFT, StreamIndex, index_stream
from .errors import EmptyBaseError, PreconditionError
from .model import MAX_COUNT, SparseVector, TermEntry

BLOCK_DOCS = 4096
FIXED_DRAWS = 4  # add?, add word, remove?, remove index


@dataclass(frozen=True)
class SynthParams:
    target_docs: int
    p_add: float = 0.5
    p_remove: float = 0.5
    p_recount: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("p_add", "p_remove", "p_recount"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise PreconditionError(f"{name}={p} outside [0, 1]")
        if self.target_docs < 0:
            raise PreconditionError("target_docs must be non-negative")
        if self.seed < 0:
            raise PreconditionError("seed must be non-negative")


@njit(cache=True, nogil=True)
def _perturb_block(base_keys, base_vals, base_off, lo, hi, u, p_add, p_remove, p_recount, vocab, out):
    n_base = base_off.size - 1
    w = 0
    ptr = 0
    keys = np.empty(base_keys.size + 1, dtype=np.int64)
    vals = np.empty(base_keys.size + 1, dtype=np.int64)
    for i in range(lo, hi):
        b = i % n_base
        s = base_off[b]
        n = base_off[b + 1] - s
        u_add = u[ptr]
        u_word = u[ptr + 1]
        u_rem = u[ptr + 2]
        u_idx = u[ptr + 3]
        for k in range(n):
            keys[k] = base_keys[s + k]
            v = base_vals[s + k]
            if u[ptr + FIXED_DRAWS + 2 * k] < p_recount:
                v = 1 + int(u[ptr + FIXED_DRAWS + 2 * k + 1] * MAX_COUNT)
                if v > MAX_COUNT:
                    v = MAX_COUNT
            vals[k] = v
        ptr += FIXED_DRAWS + 2 * n

        if n > 0 and u_rem < p_remove:
            r = int(u_idx * n)
            if r >= n:
                r = n - 1
            for k in range(r, n - 1):
                keys[k] = keys[k + 1]
                vals[k] = vals[k + 1]
            n -= 1

        if u_add < p_add:
            present = 0
            for k in range(n):
                if 1 <= keys[k] <= vocab:
                    present += 1
            absent = vocab - present
            if absent > 0:
                r = int(u_word * absent)
                if r >= absent:
                    r = absent - 1
                # r-th (0-based) word of [1, vocab] not present in keys
                word = r + 1
                pos = 0
                while pos < n and keys[pos] <= word:
                    if keys[pos] >= 1:
                        word += 1
                    pos += 1
                for k in range(n, pos, -1):
                    keys[k] = keys[k - 1]
                    vals[k] = vals[k - 1]
                keys[pos] = word
                vals[pos] = 1
                n += 1

        out[w] = HEADER_FLAG | i
        w += 1
        for k in range(n):
            out[w] = (keys[k] << KEY_SHIFT) | vals[k]
            w += 1
    return w


def _flatten(base: Sequence[SparseVector] | StreamIndex):
    if isinstance(base, StreamIndex):
        base = list(base.vectors())
    keys = np.fromiter((e.key for d in base for e in d.entries), dtype=np.int64)
    vals = np.fromiter((e.value for d in base for e in d.entries), dtype=np.int64)
    off = np.zeros(len(base) + 1, dtype=np.int64)
    np.cumsum([d.nnz for d in base], out=off[1:])
    return keys, vals, off


def synthesize(base: Sequence[SparseVector] | StreamIndex, params: SynthParams,
               vocab_size: int | None = None) -> StreamIndex:
    """Generate ``params.target_docs`` documents with ids ``0..target_docs-1``.

    Document ``i`` is a perturbation of base document ``i mod len(base)``.
    Added words are drawn uniformly from the absent words of ``[1, vocab_size]``
    and get count 1; recounted entries get a uniform count in ``[1, 4095]``.
    """
    if len(base) == 0:
        raise EmptyBaseError("cannot synthesize from an empty base corpus")
    keys, vals, off = _flatten(base)
    top = int(keys.max()) if keys.size else 0
    vocab = top if vocab_size is None else vocab_size
    if vocab < top:
        raise PreconditionError(f"vocab_size {vocab} below largest base key {top}")

    draws = FIXED_DRAWS + 2 * np.diff(off)
    n_base = off.size - 1
    chunks = []
    for block_lo in range(0, params.target_docs, BLOCK_DOCS):
        block_hi = min(block_lo + BLOCK_DOCS, params.target_docs)
        members = np.arange(block_lo, block_hi) % n_base
        rng = np.random.default_rng([params.seed, block_lo // BLOCK_DOCS])
        u = rng.random(int(draws[members].sum()))
        bound = int((np.diff(off)[members] + 2).sum())
        out = np.empty(bound, dtype=np.uint32)
        used = _perturb_block(keys, vals, off, block_lo, block_hi, u,
                              params.p_add, params.p_remove, params.p_recount, vocab, out)
        chunks.append(out[:used])
    items = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint32)
    return index_stream(items)


def sample_base(num_docs: int, vocab_size: int, mean_nnz: float, seed: int = 0) -> list[SparseVector]:
    """A UCI-shaped base corpus: Poisson document lengths, uniform word ids
    in ``[1, vocab_size]``, small geometric counts, ids ``1..num_docs``."""
    rng = np.random.default_rng(seed)
    lengths = np.clip(rng.poisson(mean_nnz, num_docs), 1, vocab_size)
    docs = []
    for doc, n in enumerate(lengths, start=1):
        words = np.sort(rng.choice(vocab_size, size=int(n), replace=False) + 1)
        counts = np.minimum(rng.geometric(0.35, size=int(n)), MAX_COUNT)
        docs.append(SparseVector(doc, tuple(map(TermEntry, words.tolist(), counts.tolist()))))
    return docs
