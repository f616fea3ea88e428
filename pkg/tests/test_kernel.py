import numpy as np
import pytest

from sparsematch.codec import encode_corpus, encode_record
from sparsematch.errors import FormatError, PreconditionError, QueryTooLarge
from sparsematch.kernel import (
    Action,
    ComparatorState,
    KernelStats,
    comparator_step,
    cosines,
    load_query,
    run_kernel,
    run_kernel_simulated,
)
from sparsematch.model import SparseVector, TermEntry, cosine_from_sums, oracle_score_dense, score_pair

from conftest import DOC_A, DOC_B, random_corpus, random_vector


def small_case(rng, vocab=48):
    q = random_vector(rng, 0, vocab, 24)
    corpus = random_corpus(rng, int(rng.integers(0, 5)), vocab, 24)
    return q, corpus


class TestLoadQuery:
    def test_capacity_boundary(self):
        full = SparseVector.from_pairs(0, {k: 1 for k in range(2048)})
        assert load_query(full).capacity == 2048
        over = SparseVector.from_pairs(0, {k: 1 for k in range(2049)})
        with pytest.raises(QueryTooLarge):
            load_query(over)

    def test_norm(self):
        assert load_query(DOC_A).norm_q_sq == 186

    def test_latency_positive(self):
        with pytest.raises(PreconditionError):
            load_query(DOC_A, read_latency=0)


@pytest.mark.parametrize("qk, ck, action", [(3, 5, Action.ADVANCE_Q), (7, 7, Action.MATCH_BOTH),
                                            (9, 2, Action.ADVANCE_C)])
def test_comparator_step(qk, ck, action):
    state = ComparatorState()
    assert comparator_step(state, TermEntry(qk, 3), TermEntry(ck, 4)) is action
    assert state.comparisons == 1
    assert state.dot_acc == (12 if action is Action.MATCH_BOTH else 0)
    assert state.qp == (0 if action is Action.ADVANCE_C else 1)


class TestRunKernel:
    def test_fig2(self):
        results, stats = run_kernel(load_query(DOC_A), encode_record(DOC_B))
        assert len(results) == 1
        assert results[0].pp_count == 2 and results[0].dot == 70

    def test_empty_stream(self):
        results, stats = run_kernel(load_query(DOC_A), [])
        assert results == [] and stats == KernelStats()

    def test_three_docs(self, rng):
        docs = random_corpus(rng, 3, 30, 10)
        results, stats = run_kernel(load_query(DOC_A), encode_corpus(docs))
        assert results == [oracle_score_dense(DOC_A, d, 30) for d in docs]
        assert stats.rewinds == stats.docs_processed == 3

    def test_format_error_propagates(self):
        with pytest.raises(FormatError):
            run_kernel(load_query(DOC_A), [0x00007005])
        with pytest.raises(FormatError):
            run_kernel_simulated(load_query(DOC_A), [0x00007005])

    def test_sentinel_tail_ignored(self):
        items = list(encode_record(DOC_B)) + [0xFFFFFFFF] * 3
        assert run_kernel(load_query(DOC_A), items)[0][0].dot == 70

    def test_comparison_bound(self, rng):
        for _ in range(200):
            q, corpus = small_case(rng)
            _, stats = run_kernel(load_query(q), encode_corpus(corpus))
            assert stats.comparisons <= sum(q.nnz + d.nnz for d in corpus)
            assert stats.partial_products == sum(score_pair(q, d).pp_count for d in corpus)


def test_vectorised_cosine_is_bit_identical(rng):
    dots = rng.integers(0, 10**9, 5000)
    norms = rng.integers(1, 10**12, 5000)
    nq = 123_456_789
    fast = cosines(dots, nq, norms)
    assert fast.tolist() == [cosine_from_sums(int(d), nq, int(n)) for d, n in zip(dots, norms)]
    assert cosines(np.array([0]), 0, np.array([5])).tolist() == [0.0]


class TestSimulated:
    def test_serial_baseline(self, rng):
        for _ in range(100):
            q, corpus = small_case(rng)
            qm = load_query(q)
            items = encode_corpus(corpus)
            want, fstats = run_kernel(qm, items)
            got, stats = run_kernel_simulated(qm, items, depth=1, read_latency=1)
            assert got == want
            assert stats.cycles >= stats.comparisons

    def test_equivalence_over_configs(self, rng):
        for _ in range(60):
            q, corpus = small_case(rng)
            qm = load_query(q)
            items = encode_corpus(corpus)
            want, fstats = run_kernel(qm, items)
            for depth in (1, 2, 3, 5, 16):
                for latency in (1, 2, 3, 8):
                    got, stats = run_kernel_simulated(qm, items, depth, latency)
                    assert got == want
                    assert stats.partial_products == fstats.partial_products
                    assert stats.comparisons == fstats.comparisons
                    assert stats.items_consumed == fstats.items_consumed
                    assert stats.rewinds == stats.docs_processed == len(corpus)
                    assert stats.mispredicted_prefetches <= depth * stats.rewinds

    def test_single_document_misprediction_bound(self, rng):
        for _ in range(200):
            q = random_vector(rng, 0, 64, 40, min_nnz=1)
            doc = random_vector(rng, 1, 64, 40)
            _, stats = run_kernel_simulated(load_query(q), encode_record(doc), depth=4, read_latency=2)
            assert stats.mispredicted_prefetches <= 4

    def test_mispredictions_happen(self):
        # candidate ends long before the query, so reads are in flight at rewind
        q = SparseVector.from_pairs(0, {k: 1 for k in range(10, 40)})
        doc = SparseVector.from_pairs(1, {12: 1})
        _, stats = run_kernel_simulated(load_query(q), encode_corpus([doc, doc]), depth=4, read_latency=2)
        assert 0 < stats.mispredicted_prefetches <= 8

    def test_stale_reads_never_compared(self, rng):
        for _ in range(200):
            q, corpus = small_case(rng)
            trace = []
            run_kernel_simulated(load_query(q), encode_corpus(corpus), int(rng.integers(1, 9)),
                                 int(rng.integers(1, 6)), trace=trace)
            issued = {e[2]: e for e in trace if e[1] == "issue"}
            consumed = [e for e in trace if e[1] == "consume"]
            discarded = {e[2] for e in trace if e[1] == "discard"}
            for cycle, _, serial, idx, tag, current in consumed:
                assert tag == current
                assert serial not in discarded
                assert cycle >= issued[serial][0]
            assert discarded | {e[2] for e in consumed} == set(issued)

    def test_deeper_prefetch_never_slower(self, rng):
        for _ in range(150):
            q, corpus = small_case(rng)
            qm = load_query(q)
            items = encode_corpus(corpus)
            for latency in (2, 4, 8):
                cycles = [run_kernel_simulated(qm, items, d, latency)[1].cycles for d in range(1, 12)]
                assert all(a >= b for a, b in zip(cycles, cycles[1:])), (latency, cycles)

    def test_prefetch_hides_latency(self):
        q = SparseVector.from_pairs(0, {k: 1 for k in range(0, 200, 2)})
        doc = SparseVector.from_pairs(1, {k: 1 for k in range(1, 200, 2)})
        qm = load_query(q)
        slow = run_kernel_simulated(qm, encode_record(doc), depth=1, read_latency=4)[1].cycles
        fast = run_kernel_simulated(qm, encode_record(doc), depth=4, read_latency=4)[1].cycles
        assert fast < slow / 2

    def test_bad_depth(self):
        with pytest.raises(PreconditionError):
            run_kernel_simulated(load_query(DOC_A), [], depth=0)
