"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class SparseMatchError(Exception):
    """Base class for all errors raised by sparsematch."""


class PreconditionError(SparseMatchError, ValueError):
    """An operation was called with arguments outside its contract."""


class EncodingError(SparseMatchError, ValueError):
    pass


class FormatError(SparseMatchError, ValueError):
    """A stream or file does not follow the pattern stream layout."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (item offset {offset})"
        super().__init__(message)


class ReorderOverflow(SparseMatchError):
    def __init__(self, seq: int, window: int):
        self.seq = seq
        self.window = window
        super().__init__(f"page {seq} still missing with {window} pages buffered; window exceeded")


class StreamIntegrityError(SparseMatchError):
    pass


class ParseError(SparseMatchError, ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class RangeError(SparseMatchError, ValueError):
    pass


class IntegrityWarning(UserWarning):
    """Non-fatal mismatch between a file's declared and observed totals."""


class EmptyBaseError(SparseMatchError, ValueError):
    pass


class QueryTooLarge(SparseMatchError, ValueError):
    def __init__(self, nnz: int, capacity: int):
        self.nnz = nnz
        self.capacity = capacity
        super().__init__(f"query has {nnz} nonzeros but query memory holds {capacity}")


class AlphabetError(SparseMatchError, ValueError):
    def __init__(self, symbol: str, position: int):
        self.symbol = symbol
        self.position = position
        super().__init__(f"unknown residue {symbol!r} at position {position}")


class VocabOverflow(SparseMatchError):
    pass


class EngineIOError(SparseMatchError, OSError):
    pass
