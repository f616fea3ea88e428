"""UCI bag-of-words ingestion.

A docword file is three header lines (D, W, NNZ) followed by
``docID wordID count`` triples. Word ids stay 1-based so they keep lining
up with the vocabulary file.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO


from .codec import StreamIndex
from .errors import IntegrityWarning, ParseError, RangeError
from .model import ID_LIMIT, KEY_LIMIT, MAX_COUNT, SparseVector, TermEntry

Triple = tuple[int, int, int]


@dataclass(frozen=True)
class DocwordHeader:
    num_docs: int
    vocab_size: int
    nnz: int


@dataclass
class Corpus:
    """Documents in source order plus how many counts were clamped."""

    docs: list[SparseVector] = field(default_factory=list)
    saturated_count: int = 0

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self) -> Iterator[SparseVector]:
        return iter(self.docs)

    def __getitem__(self, i):
        return self.docs[i]


@dataclass(frozen=True)
class CorpusStats:
    num_docs: int
    vocab_size: int
    total_nnz: int
    avg_nnz_per_doc: float
    sparsity: float
    saturated_count: int = 0

    def as_dict(self) -> dict:
        return {
            "num_docs": self.num_docs,
            "vocab_size": self.vocab_size,
            "total_nnz": self.total_nnz,
            "avg_nnz_per_doc": self.avg_nnz_per_doc,
            "sparsity": self.sparsity,
            "saturated_count": self.saturated_count,
        }

    def to_text(self) -> str:
        return (
            f"docs={self.num_docs} vocab={self.vocab_size} nnz={self.total_nnz} "
            f"avg_nnz={self.avg_nnz_per_doc:.3f} sparsity={self.sparsity * 100:.4f}% "
            f"saturated={self.saturated_count}"
        )


def _ints(line: str, lineno: int, n: int) -> list[int]:
    parts = line.split()
    if len(parts) != n:
        raise ParseError(f"expected {n} integers, got {line.strip()!r}", lineno)
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ParseError(f"non-integer field in {line.strip()!r}", lineno) from None


def parse_uci_docword(stream: TextIO | Iterable[str]) -> tuple[DocwordHeader, list[Triple]]:
    """Read a docword file, checking ids against the declared D and W.

    A triple count that disagrees with NNZ only emits an
    :class:`IntegrityWarning`.
    """
    lines = iter(stream)
    dims = []
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            raise ParseError("blank line in header", lineno)
        dims.append(_ints(line, lineno, 1)[0])
        if len(dims) == 3:
            break
    if len(dims) < 3:
        raise ParseError("missing D/W/NNZ header", lineno + 1)
    header = DocwordHeader(*dims)

    triples: list[Triple] = []
    for lineno, line in enumerate(lines, start=lineno + 1):
        if not line.strip():
            continue
        doc, word, count = _ints(line, lineno, 3)
        if doc < 1 or word < 1 or count < 0:
            raise ParseError(f"ids must be positive and counts non-negative: {line.strip()!r}", lineno)
        if doc > header.num_docs:
            raise RangeError(f"line {lineno}: document {doc} exceeds D={header.num_docs}")
        if word > header.vocab_size:
            raise RangeError(f"line {lineno}: word {word} exceeds W={header.vocab_size}")
        triples.append((doc, word, count))
    if len(triples) != header.nnz:
        warnings.warn(
            f"docword header declares NNZ={header.nnz} but {len(triples)} triples were read",
            IntegrityWarning,
            stacklevel=2,
        )
    return header, triples


def load_vocab(stream: TextIO | Iterable[str]) -> list[str]:
    """Vocabulary lines; word id ``i`` is ``vocab[i - 1]``."""
    return [line.rstrip("\n") for line in stream]


def build_corpus(triples: Iterable[Triple]) -> Corpus:
    """Group triples into vectors: merge duplicates, drop zeros, clamp counts."""
    grouped: dict[int, dict[int, int]] = {}
    for doc, word, count in triples:
        if word >= KEY_LIMIT:
            raise RangeError(f"word id {word} does not fit 19 bits")
        if not 0 <= doc < ID_LIMIT - 1:
            raise RangeError(f"document id {doc} outside [0, 2^31 - 1)")
        bag = grouped.setdefault(doc, {})
        if count:
            bag[word] = bag.get(word, 0) + count
    corpus = Corpus()
    for doc, bag in grouped.items():
        entries = []
        for word in sorted(bag):
            count = bag[word]
            if count > MAX_COUNT:
                corpus.saturated_count += 1
                count = MAX_COUNT
            entries.append(TermEntry(word, count))
        corpus.docs.append(SparseVector(doc, tuple(entries)))
    return corpus


def corpus_stats(corpus: Corpus | StreamIndex | Sequence[SparseVector], vocab_size: int) -> CorpusStats:
    if isinstance(corpus, StreamIndex):
        num_docs, total = len(corpus), corpus.total_nnz
    else:
        num_docs = len(corpus)
        total = sum(doc.nnz for doc in corpus)
    saturated = corpus.saturated_count if isinstance(corpus, Corpus) else 0
    if num_docs == 0:
        return CorpusStats(0, vocab_size, 0, 0.0, 0.0, saturated)
    avg = total / num_docs
    sparsity = avg / vocab_size if vocab_size else 0.0
    return CorpusStats(num_docs, vocab_size, total, avg, sparsity, saturated)


def infer_vocab_size(index: StreamIndex) -> int:
    """Largest key present, used when no vocabulary bound is supplied."""
    if index.total_nnz == 0:
        return 0
    pairs = index.items[(index.items & 0x8000_0000) == 0]
    return int(((pairs >> 12) & (KEY_LIMIT - 1)).max())
