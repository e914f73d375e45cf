import numpy as np
import pytest
from hypothesis import given, strategies as st

from ttedge.gradcheck import compare_grads, finite_difference
from ttedge.tensor import ShapeError, TTMTable
from ttedge.ttm_embedding import TTMEmbedding, embed_sum, embed_sum_backward


def small_embedding(rng, embed_modes=(3, 2), vocab_modes=(2, 3), rank=2, dtype=np.float64):
    ranks = (1,) + (rank,) * (len(embed_modes) - 1) + (1,)
    return TTMEmbedding.random(embed_modes, vocab_modes, ranks, rng, dtype=dtype, name="E")


class TestLookup:
    def test_single_core_is_column_select(self):
        rng = np.random.default_rng(0)
        core = rng.standard_normal((1, 5, 7, 1))
        emb = TTMEmbedding(TTMTable([core], (5,), (7,)), name="E")
        out = emb.lookup([3, 0, 6])
        np.testing.assert_array_equal(out, core[0, :, [3, 0, 6], 0].T)

    def test_rank_one_all_ones(self):
        cores = [np.ones((1, 2, 3, 1)), np.ones((1, 2, 2, 1))]
        emb = TTMEmbedding(TTMTable(cores, (2, 2), (3, 2)), name="E")
        np.testing.assert_array_equal(emb.lookup([0, 5]), np.ones((4, 2)))

    def test_table_shapes_match_reconstruction(self):
        rng = np.random.default_rng(1)
        emb = TTMEmbedding.random((12, 8, 8), (10, 10, 10), (1, 30, 30, 1), rng,
                                  dtype=np.float32, name="E")
        dense = emb.as_matrix()
        ids = rng.integers(0, 1000, size=5)
        out = emb.lookup(ids)
        err = np.abs(out - dense[:, ids]).max() / np.abs(dense).max()
        assert err <= 1e-5

    def test_all_columns_small_table(self):
        rng = np.random.default_rng(2)
        emb = small_embedding(rng, (2, 2), (4, 4), rank=3)
        dense = emb.as_matrix()
        out = emb.lookup(np.arange(16))
        np.testing.assert_allclose(out, dense, rtol=1e-10, atol=1e-12)

    def test_out_of_range(self):
        rng = np.random.default_rng(3)
        emb = small_embedding(rng)
        with pytest.raises(ValueError, match="out of range"):
            emb.lookup([emb.vocab_size])

    @given(st.integers(0, 2 ** 31 - 1), st.lists(st.integers(1, 4), min_size=1, max_size=3))
    def test_id_mapping_bijective(self, seed, modes):
        rng = np.random.default_rng(seed)
        emb = small_embedding(rng, (2,) * len(modes), tuple(modes), rank=1)
        for token in range(emb.vocab_size):
            assert emb.encode_id(emb.decode_id(token)) == token


class TestBackward:
    def test_zero_gradient(self):
        rng = np.random.default_rng(4)
        emb = small_embedding(rng)
        emb.lookup([0, 1], training=True)
        grads = emb.backward_table(np.zeros((emb.embed_dim, 2)))
        for g in grads:
            np.testing.assert_array_equal(g, 0.0)

    def test_single_token_d1_scatter(self):
        rng = np.random.default_rng(5)
        core = rng.standard_normal((1, 4, 6, 1))
        emb = TTMEmbedding(TTMTable([core], (4,), (6,)), name="E")
        emb.lookup([2], training=True)
        dz = rng.standard_normal((4, 1))
        grads = emb.backward_table(dz)
        want = np.zeros_like(core)
        want[0, :, 2, 0] = dz[:, 0]
        np.testing.assert_array_equal(grads[0], want)

    def test_shared_mode_digit_accumulates(self):
        rng = np.random.default_rng(6)
        emb = small_embedding(rng, (2, 2), (2, 3), rank=2)
        ids = [emb.encode_id((1, 0)), emb.encode_id((1, 2))]  # share the first digit
        emb.lookup(ids, training=True)
        dz = rng.standard_normal((emb.embed_dim, 2))

        def loss():
            return float((dz * emb.lookup(ids, training=True)).sum())

        loss()
        grads = emb.backward_table(dz)
        analytic = {f"E.core{i}": g for i, g in enumerate(grads)}
        numeric = finite_difference(emb.parameters(), loss)
        assert compare_grads(analytic, numeric).max_rel_err <= 1e-4
        assert np.abs(grads[0][:, :, 1, :]).max() > 0
        np.testing.assert_array_equal(grads[0][:, :, 0, :], 0.0)

    def test_gradient_sparsity(self):
        rng = np.random.default_rng(7)
        emb = small_embedding(rng, (2, 2), (3, 4), rank=2)
        ids = [0, 1, 5]
        emb.lookup(ids, training=True)
        grads = emb.backward_table(rng.standard_normal((emb.embed_dim, 3)))
        digit_sets = [set() for _ in range(emb.table.d)]
        for t in ids:
            for k, j in enumerate(emb.decode_id(t)):
                digit_sets[k].add(j)
        for k, g in enumerate(grads):
            for j in range(emb.table.col_modes[k]):
                if j not in digit_sets[k]:
                    np.testing.assert_array_equal(g[:, :, j, :], 0.0)

    def test_finite_differences_every_element(self):
        rng = np.random.default_rng(8)
        emb = small_embedding(rng, (2, 3), (3, 2), rank=2)
        ids = [0, 3, 5, 3]
        dz = rng.standard_normal((emb.embed_dim, len(ids)))

        def loss():
            return float((dz * emb.lookup(ids, training=True)).sum())

        loss()
        grads = emb.backward_table(dz)
        analytic = {f"E.core{i}": g for i, g in enumerate(grads)}
        numeric = finite_difference(emb.parameters(), loss)
        assert compare_grads(analytic, numeric).max_rel_err <= 1e-4

    def test_missing_cache(self):
        rng = np.random.default_rng(9)
        emb = small_embedding(rng)
        emb.lookup([0])  # not training
        with pytest.raises(RuntimeError):
            emb.backward_table(np.zeros((emb.embed_dim, 1)))


class TestEmbedSum:
    def make_three(self, rng, dtype=np.float64):
        tok = small_embedding(rng, (2, 2), (2, 2), rank=2, dtype=dtype)
        pos = TTMEmbedding.random((4,), (8,), (1, 1), rng, dtype=dtype, name="P")
        seg = TTMEmbedding.random((4,), (2,), (1, 1), rng, dtype=dtype, name="S")
        return tok, pos, seg

    def test_all_zero_tables(self):
        rng = np.random.default_rng(10)
        tok, pos, seg = self.make_three(rng)
        for emb in (tok, pos, seg):
            for c in emb.table.cores:
                c[:] = 0.0
        out = embed_sum(tok, pos, seg, [0, 1], [0, 1], [0, 0])
        np.testing.assert_array_equal(out, 0.0)

    def test_zeroed_pos_seg_equals_token_lookup(self):
        rng = np.random.default_rng(11)
        tok, pos, seg = self.make_three(rng)
        for emb in (pos, seg):
            for c in emb.table.cores:
                c[:] = 0.0
        ids = [3, 0, 2]
        out = embed_sum(tok, pos, seg, ids, [0, 1, 2], [0, 0, 1])
        np.testing.assert_array_equal(out, tok.lookup(ids))

    def test_sum_matches_dense_oracles(self):
        rng = np.random.default_rng(12)
        tok, pos, seg = self.make_three(rng)
        ids, positions, segments = [1, 2], [0, 1], [1, 0]
        out = embed_sum(tok, pos, seg, ids, positions, segments)
        want = (tok.as_matrix()[:, ids] + pos.as_matrix()[:, positions]
                + seg.as_matrix()[:, segments])
        np.testing.assert_allclose(out, want, rtol=1e-10)

    def test_backward_distributes_unchanged(self):
        rng = np.random.default_rng(13)
        tok, pos, seg = self.make_three(rng)
        embed_sum(tok, pos, seg, [0, 1], [0, 1], [0, 1], training=True)
        dz = rng.standard_normal((4, 2))
        g_tok, g_pos, g_seg = embed_sum_backward(tok, pos, seg, dz)
        np.testing.assert_array_equal(g_tok[0], tok.backward_table(dz)[0])
        np.testing.assert_array_equal(g_pos[0], pos.backward_table(dz)[0])
        np.testing.assert_array_equal(g_seg[0], seg.backward_table(dz)[0])

    def test_length_mismatch(self):
        rng = np.random.default_rng(14)
        tok, pos, seg = self.make_three(rng)
        with pytest.raises(ShapeError):
            embed_sum(tok, pos, seg, [0, 1], [0], [0, 0])
