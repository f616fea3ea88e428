import io
import warnings
from collections import Counter

import numpy as np
import pytest

from sparsematch.codec import decode_stream, encode_corpus
from sparsematch.errors import IntegrityWarning, ParseError, RangeError
from sparsematch.ingest import build_corpus, corpus_stats, load_vocab, parse_uci_docword
from sparsematch.model import SparseVector, TermEntry


def test_parse_minimal():
    header, triples = parse_uci_docword(io.StringIO("2\n10\n2\n1 1 10\n2 7 4\n"))
    assert (header.num_docs, header.vocab_size, header.nnz) == (2, 10, 2)
    assert triples == [(1, 1, 10), (2, 7, 4)]


def test_word_out_of_range():
    with pytest.raises(RangeError):
        parse_uci_docword(io.StringIO("1\n5\n1\n1 9 1\n"))


def test_doc_out_of_range():
    with pytest.raises(RangeError):
        parse_uci_docword(io.StringIO("1\n5\n1\n2 1 1\n"))


@pytest.mark.parametrize("text, line", [("2\n10\n1\n1 1\n", 4), ("2\nten\n1\n", 2), ("2\n10\n", 3),
                                        ("1\n10\n2\n1 1 1\n1 x 2\n", 5)])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as exc:
        parse_uci_docword(io.StringIO(text))
    assert exc.value.line == line


def test_nnz_mismatch_warns():
    with pytest.warns(IntegrityWarning):
        _, triples = parse_uci_docword(io.StringIO("1\n10\n3\n1 1 1\n"))
    assert triples == [(1, 1, 1)]


def test_enron_shaped_file(rng):
    # D and W of the UCI Enron collection; a thinned triple set keeps it fast
    num_docs, vocab = 39861, 28102
    lines = [f"{num_docs}\n{vocab}\n"]
    docs = np.sort(rng.integers(1, num_docs + 1, 20000))
    words = rng.integers(1, vocab + 1, 20000)
    counts = rng.integers(1, 20, 20000)
    body = "".join(f"{d} {w} {c}\n" for d, w, c in zip(docs, words, counts))
    text = f"{num_docs}\n{vocab}\n20000\n" + body
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        header, triples = parse_uci_docword(io.StringIO(text))
    assert len(triples) == 20000 and header.num_docs == num_docs


class TestBuildCorpus:
    def test_sorts(self):
        assert build_corpus([(1, 7, 5), (1, 3, 2)]).docs == [SparseVector.from_pairs(1, {3: 2, 7: 5})]

    def test_saturates(self):
        c = build_corpus([(1, 7, 5000)])
        assert c.docs[0].entries == (TermEntry(7, 4095),)
        assert c.saturated_count == 1

    def test_merges_duplicates(self):
        assert build_corpus([(1, 7, 3), (1, 7, 4)]).docs[0].entries == (TermEntry(7, 7),)

    def test_drops_zero_counts(self):
        assert build_corpus([(1, 7, 0), (1, 8, 1)]).docs[0].entries == (TermEntry(8, 1),)

    def test_preserves_document_order(self):
        c = build_corpus([(5, 1, 1), (2, 1, 1), (9, 1, 1)])
        assert [d.id for d in c] == [5, 2, 9]

    def test_word_too_large(self):
        with pytest.raises(RangeError):
            build_corpus([(1, 1 << 19, 1)])

    def test_fuzz_shuffled_duplicated(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 80))
            triples = list(zip(rng.integers(1, 6, n).tolist(), rng.integers(1, 50, n).tolist(),
                               rng.integers(0, 3000, n).tolist()))
            corpus = build_corpus(triples)
            expected = Counter()
            for d, w, c in triples:
                expected[(d, w)] += c
            got = {(d.id, k): v for d in corpus for k, v in d.entries}
            want = {dw: min(c, 4095) for dw, c in expected.items() if c}
            assert got == want
            # pipeline through the codec is lossless
            assert list(decode_stream(encode_corpus(corpus))) == corpus.docs


class TestStats:
    def test_arithmetic(self):
        docs = [SparseVector.from_pairs(i, {1: 1, 2: 1, 3: 1, 4: 1}) for i in range(2)]
        s = corpus_stats(docs, 141_000)
        assert (s.num_docs, s.total_nnz, s.avg_nnz_per_doc) == (2, 8, 4.0)
        assert s.sparsity == 4 / 141_000

    def test_empty(self):
        s = corpus_stats([], 141_000)
        assert (s.num_docs, s.total_nnz, s.sparsity) == (0, 0, 0.0)

    def test_saturation_reported(self):
        assert corpus_stats(build_corpus([(1, 1, 9999)]), 10).saturated_count == 1


def test_load_vocab():
    assert load_vocab(io.StringIO("feature\nsearch\n")) == ["feature", "search"]
