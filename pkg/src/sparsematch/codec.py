"""32-bit pattern stream format, flash-style pages and the ``.spm`` container.

Item layout (one 32-bit word each)::

    bit 31 = 1   header   bits 30..0  pattern id
    bit 31 = 0   pair     bits 30..12 key (19 bits), bits 11..0 count

Pattern id 2^31-1 is reserved so that 0xFFFFFFFF can pad the last page.
Records may straddle page boundaries.
"""

from __future__ import annotations

import heapq
import io
import math
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from .errors import EncodingError, FormatError, ReorderOverflow, StreamIntegrityError
from .model import KEY_LIMIT, MAX_COUNT, SparseVector, TermEntry

HEADER_FLAG = 0x8000_0000
ID_MASK = 0x7FFF_FFFF
SENTINEL = 0xFFFF_FFFF
RESERVED_ID = ID_MASK
KEY_SHIFT = 12
KEY_MASK = KEY_LIMIT - 1
VALUE_MASK = 0xFFF

DEFAULT_PAGE_SIZE = 8192
SPM_MAGIC = b"SPM1"
_FILE_HEADER = struct.Struct("<4sI")
_SEQ = struct.Struct("<Q")


def header_item(pattern_id: int) -> int:
    if not 0 <= pattern_id < RESERVED_ID:
        raise EncodingError(f"pattern id {pattern_id} outside [0, 2^31 - 1)")
    return HEADER_FLAG | pattern_id


def pair_item(key: int, value: int) -> int:
    if not 0 <= key < KEY_LIMIT or not 0 <= value <= MAX_COUNT:
        raise EncodingError(f"pair ({key}, {value}) does not fit 19/12 bits")
    return (key << KEY_SHIFT) | value


def is_header(raw: int) -> bool:
    return bool(raw & HEADER_FLAG)


def split_pair(raw: int) -> tuple[int, int]:
    return (raw >> KEY_SHIFT) & KEY_MASK, raw & VALUE_MASK


def encode_record(doc: SparseVector) -> list[int]:
    """Header item followed by one pair item per entry."""
    return [header_item(doc.id)] + [(k << KEY_SHIFT) | v for k, v in doc.entries]


def encode_corpus(docs: Iterable[SparseVector]) -> np.ndarray:
    """Concatenate the encodings of ``docs`` into one uint32 stream."""
    out: list[int] = []
    for doc in docs:
        out.extend(encode_record(doc))
    return np.asarray(out, dtype=np.uint32)


def decode_stream(items: Iterable[int]) -> Iterator[SparseVector]:
    """Split a stream at header items, yielding one vector per record.

    Decoding stops at the first padding sentinel; anything other than
    further sentinels after it is rejected.
    """
    doc_id: int | None = None
    entries: list[TermEntry] = []
    prev_key = -1
    padded = False
    for offset, raw in enumerate(items):
        raw = int(raw)
        if raw == SENTINEL:
            padded = True
            continue
        if padded:
            raise FormatError("data after padding sentinel", offset)
        if raw & HEADER_FLAG:
            if doc_id is not None:
                yield SparseVector(doc_id, tuple(entries))
            doc_id = raw & ID_MASK
            entries = []
            prev_key = -1
            continue
        if doc_id is None:
            raise FormatError("pair item before first header", offset)
        key, value = split_pair(raw)
        if key <= prev_key:
            raise FormatError(f"key {key} not above previous key {prev_key}", offset)
        if value == 0:
            raise FormatError(f"zero count for key {key}", offset)
        entries.append(TermEntry(key, value))
        prev_key = key
    if doc_id is not None:
        yield SparseVector(doc_id, tuple(entries))


@dataclass(frozen=True)
class StreamIndex:
    """A validated, sentinel-trimmed item stream with per-record offsets.

    Record ``i`` has id ``doc_ids[i]`` and its pair items occupy
    ``items[starts[i]:ends[i]]``; the header sits at ``starts[i] - 1``.
    """

    items: np.ndarray
    doc_ids: np.ndarray
    starts: np.ndarray
    ends: np.ndarray

    def __len__(self) -> int:
        return int(self.doc_ids.size)

    @property
    def total_nnz(self) -> int:
        return int(self.items.size - self.doc_ids.size)

    def nnz(self) -> np.ndarray:
        return self.ends - self.starts

    def vector(self, i: int) -> SparseVector:
        seg = self.items[self.starts[i]:self.ends[i]]
        keys = ((seg >> KEY_SHIFT) & KEY_MASK).tolist()
        values = (seg & VALUE_MASK).tolist()
        return SparseVector(int(self.doc_ids[i]), tuple(map(TermEntry, keys, values)))

    def vectors(self) -> Iterator[SparseVector]:
        for i in range(len(self)):
            yield self.vector(i)

    def find(self, doc_id: int) -> int:
        """Ordinal of the first record with ``doc_id``."""
        hits = np.flatnonzero(self.doc_ids == doc_id)
        if hits.size == 0:
            raise KeyError(doc_id)
        return int(hits[0])

    def select(self, ordinals: np.ndarray) -> StreamIndex:
        """Copy the given records, in the given order, into a new stream."""
        ordinals = np.asarray(ordinals, dtype=np.int64)
        heads = self.starts[ordinals] - 1
        lengths = self.ends[ordinals] - heads
        out_starts = np.concatenate(([0], np.cumsum(lengths)))
        total = int(out_starts[-1])
        # position p of the output maps to heads[r] + (p - out_starts[r])
        rec = np.repeat(np.arange(ordinals.size), lengths)
        src = heads[rec] + (np.arange(total) - out_starts[:-1][rec])
        return StreamIndex(
            self.items[src],
            self.doc_ids[ordinals].copy(),
            out_starts[:-1] + 1,
            out_starts[1:].copy(),
        )


def index_stream(items: Sequence[int] | np.ndarray) -> StreamIndex:
    """Vectorised counterpart of :func:`decode_stream` for bulk streams."""
    a = np.ascontiguousarray(np.asarray(items, dtype=np.uint32).ravel())
    pad = np.flatnonzero(a == SENTINEL)
    if pad.size:
        first = int(pad[0])
        tail = np.flatnonzero(a[first:] != SENTINEL)
        if tail.size:
            raise FormatError("data after padding sentinel", first + int(tail[0]))
        a = a[:first]
    if a.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return StreamIndex(a, empty, empty, empty.copy())
    hdr = (a & HEADER_FLAG) != 0
    if not hdr[0]:
        raise FormatError("pair item before first header", 0)
    keys = (a >> KEY_SHIFT) & KEY_MASK
    zero = np.flatnonzero(~hdr & ((a & VALUE_MASK) == 0))
    if zero.size:
        raise FormatError("zero count in pair item", int(zero[0]))
    bad = np.flatnonzero(~hdr[1:] & ~hdr[:-1] & (keys[1:] <= keys[:-1]))
    if bad.size:
        raise FormatError("keys not strictly ascending", int(bad[0]) + 1)
    hpos = np.flatnonzero(hdr).astype(np.int64)
    ends = np.empty_like(hpos)
    ends[:-1] = hpos[1:]
    ends[-1] = a.size
    return StreamIndex(a, (a[hpos] & ID_MASK).astype(np.int64), hpos + 1, ends)


def index_corpus(docs: Iterable[SparseVector]) -> StreamIndex:
    return index_stream(encode_corpus(docs))


@dataclass(frozen=True)
class Page:
    seq: int
    payload: bytes

    def items(self) -> np.ndarray:
        return np.frombuffer(self.payload, dtype="<u4")


def paginate(items: Sequence[int] | np.ndarray, page_size: int = DEFAULT_PAGE_SIZE) -> list[Page]:
    """Pack items into fixed-size pages, padding the last with sentinels."""
    if page_size <= 0 or page_size % 4:
        raise ValueError(f"page_size must be a positive multiple of 4, got {page_size}")
    a = np.asarray(items, dtype=np.uint32).ravel()
    per_page = page_size // 4
    n_pages = -(-a.size // per_page)
    padded = np.full(n_pages * per_page, SENTINEL, dtype="<u4")
    padded[: a.size] = a
    rows = padded.reshape(n_pages, per_page)
    return [Page(seq, rows[seq].tobytes()) for seq in range(n_pages)]


def reorder_pages(pages: Iterable[Page], window: int) -> Iterator[Page]:
    """Restore sequence order, buffering at most ``window`` early pages.

    A page that arrives ``d`` positions after its ordinal slot forces ``d``
    later pages to wait, so a stream whose pages are at most ``window``
    positions late always fits.
    """
    expected = 0
    pending: list[tuple[int, Page]] = []
    seen: set[int] = set()
    for page in pages:
        if page.seq < expected or page.seq in seen:
            raise StreamIntegrityError(f"duplicate page {page.seq}")
        seen.add(page.seq)
        heapq.heappush(pending, (page.seq, page))
        while pending and pending[0][0] == expected:
            yield heapq.heappop(pending)[1]
            seen.discard(expected)
            expected += 1
        if len(pending) > window:
            raise ReorderOverflow(expected, window)
    if pending:
        raise StreamIntegrityError(f"page {expected} missing from stream")


def reorder(pages: Iterable[Page], window: int) -> Iterator[int]:
    """In-order item stream from possibly out-of-order pages."""
    for page in reorder_pages(pages, window):
        yield from page.items().tolist()


def write_spm(dest: str | os.PathLike | BinaryIO, pages: Iterable[Page], page_size: int) -> None:
    own = not hasattr(dest, "write")
    fh = open(dest, "wb") if own else dest
    try:
        fh.write(_FILE_HEADER.pack(SPM_MAGIC, page_size))
        for page in pages:
            if len(page.payload) != page_size:
                raise FormatError(f"page {page.seq} has {len(page.payload)} bytes, expected {page_size}")
            fh.write(_SEQ.pack(page.seq))
            fh.write(page.payload)
    finally:
        if own:
            fh.close()


def iter_spm(src: BinaryIO) -> tuple[int, Iterator[Page]]:
    """Read the file header and return (page_size, lazy page iterator)."""
    head = src.read(_FILE_HEADER.size)
    if len(head) < _FILE_HEADER.size:
        raise FormatError("file too short for SPM header")
    magic, page_size = _FILE_HEADER.unpack(head)
    if magic != SPM_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SPM_MAGIC!r}")
    if page_size <= 0 or page_size % 4:
        raise FormatError(f"invalid page size {page_size}")

    def pages() -> Iterator[Page]:
        while True:
            seq_raw = src.read(_SEQ.size)
            if not seq_raw:
                return
            payload = src.read(page_size)
            if len(seq_raw) < _SEQ.size or len(payload) < page_size:
                raise FormatError("truncated page at end of file")
            yield Page(_SEQ.unpack(seq_raw)[0], payload)

    return page_size, pages()


def save_stream(path: str | os.PathLike, items: Sequence[int] | np.ndarray,
                page_size: int = DEFAULT_PAGE_SIZE) -> int:
    """Paginate ``items`` and write them as ``.spm``; returns the page count."""
    pages = paginate(items, page_size)
    write_spm(path, pages, page_size)
    return len(pages)


def load_stream(path: str | os.PathLike, window: int = 8) -> StreamIndex:
    with open(path, "rb") as fh:
        _, pages = iter_spm(fh)
        payload = b"".join(p.payload for p in reorder_pages(pages, window))
    return index_stream(np.frombuffer(payload, dtype="<u4"))


def spm_bytes(items: Sequence[int] | np.ndarray, page_size: int = DEFAULT_PAGE_SIZE) -> bytes:
    buf = io.BytesIO()
    write_spm(buf, paginate(items, page_size), page_size)
    return buf.getvalue()


_POW10 = 10 ** np.arange(19, dtype=np.int64)


def _digits(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.searchsorted(_POW10, np.asarray(x, dtype=np.int64), side="right"), 1)


def text_bytes(index: StreamIndex) -> int:
    """Size of the "doc word count" one-triple-per-line rendering."""
    pairs = index.items[(index.items & HEADER_FLAG) == 0]
    id_digits = np.repeat(_digits(index.doc_ids), index.nnz())
    keys = (pairs >> KEY_SHIFT) & KEY_MASK
    values = pairs & VALUE_MASK
    return int(id_digits.sum() + _digits(keys).sum() + _digits(values).sum() + 3 * pairs.size)


def measure_savings(corpus: StreamIndex | Iterable[SparseVector]) -> float:
    """Binary stream bytes divided by UCI text bytes; ``inf`` when no text."""
    index = corpus if isinstance(corpus, StreamIndex) else index_corpus(corpus)
    if len(index) == 0:
        raise ValueError("measure_savings needs a nonempty corpus")
    text = text_bytes(index)
    binary = 4 * int(index.items.size)
    return binary / text if text else math.inf
