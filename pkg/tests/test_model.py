import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsematch.errors import PreconditionError
from sparsematch.model import MatchResult, SparseVector, TermEntry, oracle_score_dense, score_pair

from conftest import DOC_A, DOC_B, random_vector

FIG2_COSINE = 70 / math.sqrt(186 * 54)


def vectors(id=0, vocab=64, max_nnz=20):
    return st.dictionaries(
        st.integers(0, vocab - 1), st.integers(1, 4095), max_size=max_nnz
    ).map(lambda d: SparseVector.from_pairs(id, d))


class TestSparseVector:
    def test_sorted_construction(self):
        v = SparseVector.from_pairs(3, [(7, 5), (3, 2)])
        assert v.entries == (TermEntry(3, 2), TermEntry(7, 5))

    @pytest.mark.parametrize(
        "entries",
        [
            ((3, 1), (3, 2)),
            ((5, 1), (2, 1)),
            ((1 << 19, 1),),
            ((1, 0),),
            ((1, 4096),),
        ],
    )
    def test_rejects_invalid_entries(self, entries):
        with pytest.raises(PreconditionError):
            SparseVector(0, tuple(TermEntry(*e) for e in entries))

    def test_rejects_id_out_of_range(self):
        with pytest.raises(PreconditionError):
            SparseVector(1 << 31)

    def test_empty_allowed(self):
        assert SparseVector(5).nnz == 0


class TestScorePair:
    def test_fig3_partial_products(self):
        r = score_pair(DOC_A, DOC_B)
        assert r.pp_count == 2
        assert r.dot == 10 * 5 + 5 * 4 == 70
        assert (r.norm_q_sq, r.norm_c_sq) == (186, 54)
        assert r.cosine == pytest.approx(FIG2_COSINE, rel=1e-12)

    def test_self_similarity(self):
        v = SparseVector.from_pairs(0, {1: 10, 3: 6})
        r = score_pair(v, v)
        assert r.cosine == 1.0
        assert r.dot == r.norm_q_sq == r.norm_c_sq == 136

    def test_empty_vectors_score_zero(self):
        r = score_pair(SparseVector(0), DOC_B)
        assert r == MatchResult(2, 0, 0, 54, 0.0, 0)


class TestOracle:
    def test_matches_score_pair_on_fig2(self):
        assert oracle_score_dense(DOC_A, DOC_B, 12) == score_pair(DOC_A, DOC_B)

    def test_orthogonal(self):
        r = oracle_score_dense(SparseVector.from_pairs(0, {1: 3}), SparseVector.from_pairs(1, {2: 3}), 4)
        assert r.dot == 0 and r.cosine == 0.0

    def test_empty_query(self):
        assert oracle_score_dense(SparseVector(0), DOC_B, 11).cosine == 0.0

    def test_dim_too_small(self):
        with pytest.raises(PreconditionError):
            oracle_score_dense(DOC_A, DOC_B, 10)


def test_randomized_oracle_equivalence(rng):
    for i in range(10_000):
        q = random_vector(rng, 0, 300, 40)
        c = random_vector(rng, i, 300, 40)
        fast, slow = score_pair(q, c), oracle_score_dense(q, c, 300)
        assert (fast.doc_id, fast.dot, fast.norm_q_sq, fast.norm_c_sq, fast.pp_count) == (
            slow.doc_id, slow.dot, slow.norm_q_sq, slow.norm_c_sq, slow.pp_count)
        assert fast.cosine == pytest.approx(slow.cosine, rel=1e-12, abs=0)


@given(vectors(0), vectors(1))
def test_symmetry(q, c):
    a, b = score_pair(q, c), score_pair(c, q)
    assert a.dot == b.dot
    assert a.cosine == b.cosine


@given(vectors(0), vectors(1))
def test_invariants(q, c):
    r = score_pair(q, c)
    assert r.pp_count == len(set(q.keys) & set(c.keys))
    assert r.pp_count <= min(q.nnz, c.nnz)
    assert 0.0 <= r.cosine <= 1.0
    assert r.dot**2 <= r.norm_q_sq * r.norm_c_sq


@settings(max_examples=50)
@given(vectors(0, max_nnz=10), st.lists(vectors(max_nnz=10), min_size=2, max_size=8),
       st.integers(1, 4))
def test_scaling_candidates_preserves_ranking(q, cands, k):
    cands = [SparseVector(i, c.entries) for i, c in enumerate(cands)]
    scaled = [SparseVector.from_pairs(c.id, {key: min(4095, v * k) for key, v in c.entries}) for c in cands]
    # keep within the pre-saturation regime
    if any(v * k > 4095 for c in cands for _, v in c.entries):
        return
    before = [score_pair(q, c).cosine for c in cands]
    after = [score_pair(q, c).cosine for c in scaled]
    # exact rational equality is lost to rounding, so compare orderings of distinct scores
    order = np.argsort(np.round(before, 9), kind="stable")
    assert np.all(np.diff(np.round(np.asarray(after)[order], 9)) >= 0)
