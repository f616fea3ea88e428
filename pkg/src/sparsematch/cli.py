"""Command line driver: ``sparsematch <command> ...``.

Every command is a thin composition of library calls; exit status is 0 on
success, 1 on a runtime error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .codec import DEFAULT_PAGE_SIZE, SPM_MAGIC, encode_corpus, index_stream, iter_spm, load_stream, save_stream, split_pair
from .engine import EngineConfig, RunResult, run_batch
from .errors import SparseMatchError
from .frontends import EdgeVocabulary, encode_proteins, read_edge_lists, read_fasta, subgraph_to_bow
from .ingest import build_corpus, corpus_stats, infer_vocab_size, parse_uci_docword
from .synth import SynthParams, sample_base, synthesize

SCHEMA_VERSION = 1


@dataclass
class MetricsReport:
    docs_per_sec: float
    partial_products_per_sec: float
    total_docs: int
    total_partial_products: int
    wall_seconds: float
    per_kernel: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)

    @classmethod
    def from_run(cls, run: RunResult) -> MetricsReport:
        m = run.metrics
        return cls(
            docs_per_sec=m.docs_per_sec,
            partial_products_per_sec=m.partial_products_per_sec,
            total_docs=m.total_docs,
            total_partial_products=m.total_partial_products,
            wall_seconds=m.wall_seconds,
            per_kernel=[s.as_dict() for s in run.per_kernel],
            config=run.config.as_dict(),
            totals=run.stats.as_dict(),
        )

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "docs_per_sec": self.docs_per_sec,
            "partial_products_per_sec": self.partial_products_per_sec,
            "total_docs": self.total_docs,
            "total_partial_products": self.total_partial_products,
            "wall_seconds": self.wall_seconds,
            "totals": self.totals,
            "per_kernel": self.per_kernel,
            "config": self.config,
        }


TIMING_FIELDS = ("docs_per_sec", "partial_products_per_sec", "wall_seconds")


def emit_metrics(report: MetricsReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n").encode()
    if fmt == "text":
        rows = [
            ("docs", f"{report.total_docs}"),
            ("partial products", f"{report.total_partial_products}"),
            ("wall seconds", f"{report.wall_seconds:.6f}"),
            ("docs/sec", f"{report.docs_per_sec:,.0f}"),
            ("partial products/sec", f"{report.partial_products_per_sec:,.0f}"),
            ("kernel instances", f"{len(report.per_kernel)}"),
        ]
        width = max(len(k) for k, _ in rows)
        return ("\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n").encode()
    raise ValueError(f"unknown metrics format {fmt!r}")


def _out(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _config(args) -> EngineConfig:
    return EngineConfig(
        kernels=args.kernels,
        batch=getattr(args, "batch", 1),
        top_n=args.top,
        query_capacity=args.capacity,
        prefetch_depth=args.depth,
        read_latency=args.latency,
        simulate=args.simulate,
        reorder_window=args.window,
    )


def _queries(args, corpus):
    if args.query_file:
        return list(load_stream(args.query_file, args.window).vectors())
    try:
        return [corpus.vector(corpus.find(args.query_doc))]
    except KeyError:
        raise SparseMatchError(f"document {args.query_doc} not found in {args.corpus}") from None


def _report_run(run: RunResult, args) -> None:
    for table in run.tables:
        _out(table.to_text())
    report = MetricsReport.from_run(run)
    _out(emit_metrics(report, "text").decode())
    if args.json:
        Path(args.json).write_bytes(emit_metrics(report, "json"))


def cmd_encode(args) -> int:
    with open(args.docword, encoding="utf-8") as fh:
        header, triples = parse_uci_docword(fh)
    corpus = build_corpus(triples)
    save_stream(args.out, encode_corpus(corpus), args.page_size)
    _out(corpus_stats(corpus, header.vocab_size).to_text())
    return 0


def cmd_synth(args) -> int:
    if args.base:
        base = load_stream(args.base, args.window)
    else:
        base = sample_base(args.base_docs, args.vocab_size, args.mean_nnz, args.seed)
    params = SynthParams(args.docs, args.p_add, args.p_remove, args.p_recount, args.seed)
    out = synthesize(base, params, args.vocab_size)
    save_stream(args.out, out.items, args.page_size)
    _out(corpus_stats(out, args.vocab_size).to_text())
    return 0


def cmd_query(args) -> int:
    corpus = load_stream(args.corpus, args.window)
    run = run_batch(corpus, _queries(args, corpus), _config(args))
    _report_run(run, args)
    return 0


def cmd_batch(args) -> int:
    corpus = load_stream(args.corpus, args.window)
    queries = list(load_stream(args.queries, args.window).vectors())
    run = run_batch(corpus, queries, _config(args))
    _report_run(run, args)
    return 0


def cmd_bench(args) -> int:
    corpus = load_stream(args.corpus, args.window)
    if args.queries:
        queries = list(load_stream(args.queries, args.window).vectors())
    else:
        queries = [corpus.vector(i) for i in range(min(args.batch, len(corpus)))]
    config = _config(args)
    best = None
    for _ in range(args.repeat):
        run = run_batch(corpus, queries, config)
        if best is None or run.metrics.wall_seconds < best.metrics.wall_seconds:
            best = run
    report = MetricsReport.from_run(best)
    _out(emit_metrics(report, "text").decode())
    if args.json:
        Path(args.json).write_bytes(emit_metrics(report, "json"))
    return 0


def cmd_stats(args) -> int:
    corpus = load_stream(args.corpus, args.window)
    vocab = args.vocab_size or infer_vocab_size(corpus)
    stats = corpus_stats(corpus, vocab)
    _out(json.dumps(stats.as_dict(), sort_keys=True) if args.json_out else stats.to_text())
    return 0


def cmd_protein_encode(args) -> int:
    with open(args.fasta, encoding="utf-8") as fh:
        records = list(read_fasta(fh))
    vectors = encode_proteins(records)
    save_stream(args.out, encode_corpus(vectors), args.page_size)
    names = Path(args.names) if args.names else Path(str(args.out) + ".ids.tsv")
    names.write_text("".join(f"{i}\t{name}\n" for i, (name, _) in enumerate(records)), encoding="utf-8")
    _out(f"encoded {len(vectors)} sequences")
    return 0


def cmd_graph_encode(args) -> int:
    vocab = EdgeVocabulary.load(args.vocab_in) if args.vocab_in else EdgeVocabulary()
    with open(args.edges, encoding="utf-8") as fh:
        vectors = [subgraph_to_bow(edges, vocab, i) for i, edges in enumerate(read_edge_lists(fh))]
    save_stream(args.out, encode_corpus(vectors), args.page_size)
    vocab.save(args.vocab_out or str(args.out) + ".vocab.tsv")
    _out(f"encoded {len(vectors)} subgraphs over {len(vocab)} distinct edges")
    return 0


def cmd_inspect(args) -> int:
    with open(args.corpus, "rb") as fh:
        page_size, pages = iter_spm(fh)
        pages = list(pages)
    _out(f"magic={SPM_MAGIC.decode()} page_size={page_size} pages={len(pages)}")
    index = load_stream(args.corpus, args.window)
    for i in range(min(args.limit, len(index))):
        lo, hi = int(index.starts[i]) - 1, int(index.ends[i])
        if args.hex:
            _out(" ".join(f"{int(w):08x}" for w in index.items[lo:hi]))
        else:
            pairs = " ".join("%d:%d" % split_pair(int(w)) for w in index.items[lo + 1:hi])
            _out(f"doc {int(index.doc_ids[i])} nnz={hi - lo - 1} {pairs}")
    return 0


def _engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernels", type=int, default=8)
    p.add_argument("--top", type=int, default=1)
    p.add_argument("--capacity", type=int, default=2048)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--latency", type=int, default=2)
    p.add_argument("--simulate", action="store_true", help="use the cycle-stepped kernel")
    p.add_argument("--json", metavar="PATH", help="also write the metrics report as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsematch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--page-size", type=int, default=DEFAULT_PAGE_SIZE)
    common.add_argument("--window", type=int, default=8, help="page reorder window")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[common], help="UCI docword -> .spm")
    p.add_argument("--docword", required=True)
    p.add_argument("--vocab", help="vocabulary file (informational)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--base", help=".spm base corpus (default: a sampled UCI-shaped base)")
    p.add_argument("--base-docs", type=int, default=1000)
    p.add_argument("--mean-nnz", type=float, default=60.0)
    p.add_argument("--docs", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=141_000)
    p.add_argument("--p-add", type=float, default=0.5)
    p.add_argument("--p-remove", type=float, default=0.5)
    p.add_argument("--p-recount", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("query", parents=[common], help="top-N search for one or more queries")
    p.add_argument("--corpus", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--query-doc", type=int, help="use the corpus document with this id")
    src.add_argument("--query-file", help=".spm file of query records")
    _engine_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("batch", parents=[common], help="run a query file in batches of L")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--batch", type=int, default=3)
    _engine_flags(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("bench", parents=[common], help="throughput benchmark")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", help=".spm queries (default: first --batch corpus documents)")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--repeat", type=int, default=3)
    _engine_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, default=0, help="default: largest key")
    p.add_argument("--json-out", action="store_true", help="print JSON instead of text")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("protein-encode", parents=[common], help="FASTA -> 3-mer .spm")
    p.add_argument("--fasta", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--names", help="id/name sidecar (default: OUT.ids.tsv)")
    p.set_defaults(func=cmd_protein_encode)

    p = sub.add_parser("graph-encode", parents=[common], help="edge lists -> .spm")
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-in", help="existing edge vocabulary to extend")
    p.add_argument("--vocab-out", help="where to save the vocabulary (default: OUT.vocab.tsv)")
    p.set_defaults(func=cmd_graph_encode)

    p = sub.add_parser("inspect", parents=[common], help="dump records of a .spm file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--limit", type=int, default=10)
    p.add_argument("--hex", action="store_true")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SparseMatchError, OSError, ValueError) as exc:
        sys.stderr.write(f"sparsematch {args.command}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
