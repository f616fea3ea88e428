"""Streaming sparse pattern matching over bag-of-words corpora."""

__version__ = "0.1.0"

from .model import MatchResult, SparseVector, TermEntry, oracle_score_dense, score_pair
from .engine import EngineConfig, TopNTable, run_batch, run_query

__all__ = [
    "EngineConfig",
    "MatchResult",
    "SparseVector",
    "TermEntry",
    "TopNTable",
    "oracle_score_dense",
    "run_batch",
    "run_query",
    "score_pair",
]
