"""Encoders that turn domain objects into bag-of-words vectors.

Proteins become counts of overlapping 3-mers; subgraphs become counts of
labelled edges.  Edges are directed: callers with undirected graphs should
put each pair in a canonical order first.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Sequence, TextIO

from .errors import AlphabetError, VocabOverflow
from .model import KEY_LIMIT, MAX_COUNT, SparseVector

# 20 canonical residues, then the IUPAC ambiguity / rare codes
PROTEIN_ALPHABET = "ACDEFGHIKLMNPQRSTVWY" + "BZXUO"
_ORDINAL = {sym: i for i, sym in enumerate(PROTEIN_ALPHABET)}
_BASE = len(PROTEIN_ALPHABET)
KMER = 3
NUM_KMERS = _BASE**KMER


def kmer_id(kmer: str) -> int:
    o0, o1, o2 = (_ORDINAL[s] for s in kmer.upper())
    return o0 * _BASE * _BASE + o1 * _BASE + o2


def kmer_from_id(word: int) -> str:
    if not 0 <= word < NUM_KMERS:
        raise ValueError(f"3-mer id {word} outside [0, {NUM_KMERS})")
    o0, rest = divmod(word, _BASE * _BASE)
    o1, o2 = divmod(rest, _BASE)
    return PROTEIN_ALPHABET[o0] + PROTEIN_ALPHABET[o1] + PROTEIN_ALPHABET[o2]


def protein_to_bow(sequence: str, id: int) -> SparseVector:
    ords = []
    for pos, sym in enumerate(sequence):
        o = _ORDINAL.get(sym.upper())
        if o is None:
            raise AlphabetError(sym, pos)
        ords.append(o)
    counts = Counter(
        ords[i] * _BASE * _BASE + ords[i + 1] * _BASE + ords[i + 2] for i in range(len(ords) - KMER + 1)
    )
    return SparseVector.from_pairs(id, ((k, min(c, MAX_COUNT)) for k, c in counts.items()))


def read_fasta(stream: TextIO | Iterable[str]) -> Iterator[tuple[str, str]]:
    """Yield ``(header, sequence)``; header is the text after '>' up to the first blank."""
    header = None
    chunks: list[str] = []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            if header is not None:
                yield header, "".join(chunks)
            parts = line[1:].split(maxsplit=1)
            header = parts[0] if parts else ""
            chunks = []
        else:
            if header is None:
                raise ValueError("FASTA sequence data before first '>' header")
            chunks.append(line)
    if header is not None:
        yield header, "".join(chunks)


@dataclass
class EdgeVocabulary:
    """Labelled edge -> word id, assigned sequentially on first sight."""

    ids: dict[tuple[Hashable, Hashable], int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.ids)

    def lookup(self, edge: tuple[Hashable, Hashable]) -> int:
        word = self.ids.get(edge)
        if word is None:
            if len(self.ids) >= KEY_LIMIT:
                raise VocabOverflow(f"more than {KEY_LIMIT} distinct edges")
            word = self.ids[edge] = len(self.ids)
        return word

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for (src, dst), word in sorted(self.ids.items(), key=lambda kv: kv[1]):
                fh.write(f"{word}\t{src}\t{dst}\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> EdgeVocabulary:
        vocab = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    word, src, dst = line.rstrip("\n").split("\t")
                    vocab.ids[(src, dst)] = int(word)
        return vocab


def subgraph_to_bow(edges: Iterable[tuple[Hashable, Hashable]], vocab: EdgeVocabulary, id: int) -> SparseVector:
    counts = Counter(vocab.lookup(tuple(edge)) for edge in edges)
    return SparseVector.from_pairs(id, ((k, min(c, MAX_COUNT)) for k, c in counts.items()))


def read_edge_lists(stream: TextIO | Iterable[str]) -> Iterator[list[tuple[str, str]]]:
    """Blank-line separated blocks of ``src dst`` lines, one block per subgraph."""
    block: list[tuple[str, str]] = []
    for lineno, line in enumerate(stream, start=1):
        parts = line.split()
        if not parts:
            if block:
                yield block
                block = []
            continue
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'src dst', got {line.strip()!r}")
        block.append((parts[0], parts[1]))
    if block:
        yield block


def encode_proteins(records: Sequence[tuple[str, str]]) -> list[SparseVector]:
    """Vectors for FASTA records; pattern ids are record ordinals."""
    return [protein_to_bow(seq, i) for i, (_, seq) in enumerate(records)]
