import numpy as np

from ttedge.config import TrainConfig, seed_streams
from ttedge.data import generate_synthetic
from ttedge.gradcheck import check_model_grads, compare_grads, finite_difference
from ttedge.model import (ActivationStore, DenseReference, EncoderBlock,
                          TensorTransformer, compression_summary, factor_inventory)
from ttedge.ops import layernorm
from ttedge.train import train_epoch, train_model


def tiny_cfg(**overrides):
    base = dict(num_encoders=2, hidden=16, hidden_out_modes=(4, 4), hidden_in_modes=(4, 4),
                tt_rank=2, vocab_size=16, vocab_modes=(4, 4), embed_modes=(4, 4),
                embed_rank=2, seq_len=6, num_classes=2, num_slots=3, epochs=1, seed=3)
    base.update(overrides)
    return TrainConfig(**base)


def build(cfg, dtype=np.float32, store=None):
    return TensorTransformer(cfg, seed_streams(cfg.seed)["init"], dtype=dtype, store=store)


def zero_block_weights(block):
    for layer in block.layers:
        for c in layer.weight.cores:
            c[:] = 0.0
        layer.bias[:] = 0.0


class TestAttention:
    def test_single_token_softmax_is_one(self):
        cfg = tiny_cfg(num_encoders=1)
        blk = EncoderBlock(cfg, seed_streams(0)["init"], np.float64, "b")
        x = np.random.default_rng(0).standard_normal((16, 1))
        blk.forward(x, training=True)
        p = blk._cache["probs"][0]
        np.testing.assert_allclose(p, np.ones((1, 1)))
        # with one key the attention output is just V
        v = blk._cache["v"]
        want, _ = layernorm(blk.o.as_matrix() @ v + blk.o.bias[:, None] + x,
                            blk.ln1_gain, blk.ln1_offset)
        f1 = blk.ffn1.as_matrix() @ want + blk.ffn1.bias[:, None]
        assert np.allclose(blk._cache["f1"], f1, rtol=1e-10)

    def test_zero_weights_residual_passthrough(self):
        cfg = tiny_cfg(num_encoders=1)
        blk = EncoderBlock(cfg, seed_streams(1)["init"], np.float64, "b")
        zero_block_weights(blk)
        x = np.random.default_rng(1).standard_normal((16, 4))
        out = blk.forward(x, training=True)
        ln_x, _ = layernorm(x, blk.ln1_gain, blk.ln1_offset)
        want, _ = layernorm(ln_x, blk.ln2_gain, blk.ln2_offset)
        np.testing.assert_allclose(out, want, rtol=1e-12)

    def test_multihead_matches_dense_reference(self):
        cfg = tiny_cfg(heads=4)
        model = build(cfg)
        ref = DenseReference(model)
        ids = [1, 5, 9, 2]
        got, _ = model.forward(ids)
        want, _ = ref.forward(ids)
        assert np.abs(got - want).max() / max(np.abs(want).max(), 1e-9) <= 1e-4


class TestEquivalence:
    def test_logits_match_dense_reference_f32(self):
        model = build(tiny_cfg())
        ref = DenseReference(model)
        rng = np.random.default_rng(2)
        for _ in range(5):
            ids = rng.integers(0, 16, size=6)
            segs = rng.integers(0, 2, size=6)
            got_i, got_s = model.forward(ids, segs)
            want_i, want_s = ref.forward(ids, segs)
            scale = max(np.abs(want_i).max(), 1e-9)
            assert np.abs(got_i - want_i).max() / scale <= 1e-4
            scale = max(np.abs(want_s).max(), 1e-9)
            assert np.abs(got_s - want_s).max() / scale <= 1e-4

    def test_tiny_block_dense_reference_f64(self):
        cfg = tiny_cfg(hidden=8, hidden_out_modes=(8,), hidden_in_modes=(8,),
                       vocab_size=8, vocab_modes=(8,), embed_modes=(8,), embed_rank=1,
                       num_encoders=1, tt_rank=2)
        model = build(cfg, dtype=np.float64)
        ref = DenseReference(model)
        ids = [0, 3, 7]
        got, _ = model.forward(ids)
        want, _ = ref.forward(ids)
        assert np.abs(got - want).max() / max(np.abs(want).max(), 1e-9) <= 1e-5


class TestBackward:
    def test_zero_output_gradient(self):
        model = build(tiny_cfg(), dtype=np.float64)
        model.forward([0, 1, 2], training=True)
        grads = model.backward(np.zeros((2, 1)), np.zeros((3, 3)))
        for name, g in grads.items():
            np.testing.assert_array_equal(g, 0.0, err_msg=name)

    def test_encoder_block_finite_differences(self):
        cfg = tiny_cfg(num_encoders=1)
        blk = EncoderBlock(cfg, seed_streams(4)["init"], np.float64, "b")
        rng = np.random.default_rng(4)
        x = rng.standard_normal((16, 3))
        dy = rng.standard_normal((16, 3))

        def loss():
            return float((dy * blk.forward(x, training=True)).sum())

        loss()
        _, grads = blk.backward(dy)

        numeric = finite_difference(blk.parameters(), loss)
        assert compare_grads(grads, numeric).max_rel_err <= 1e-3

    def test_stacked_blocks_chain_rule(self):
        cfg = tiny_cfg(num_encoders=2)
        rng = np.random.default_rng(5)
        b1 = EncoderBlock(cfg, seed_streams(5)["init"], np.float64, "b1")
        b2 = EncoderBlock(cfg, seed_streams(6)["init"], np.float64, "b2")
        x = rng.standard_normal((16, 2))
        dy = rng.standard_normal((16, 2))

        def loss():
            return float((dy * b2.forward(b1.forward(x, training=True), training=True)).sum())

        loss()
        dh, _ = b2.backward(dy)
        _, g1 = b1.backward(dh)
        numeric = finite_difference(b1.parameters(), loss)
        assert compare_grads(g1, numeric).max_rel_err <= 1e-3

    def test_full_model_finite_differences(self):
        cfg = tiny_cfg(seq_len=4)
        model = build(cfg, dtype=np.float64)
        ex = generate_synthetic(1, 4, 2, 16, seed=5, num_slots=3)[0]
        report = check_model_grads(model, ex)
        assert report.max_rel_err <= 1e-3


class TestTraining:
    def test_zero_lr_leaves_parameters_bitwise(self):
        cfg = tiny_cfg(lr=0.0)
        model = build(cfg)
        data = generate_synthetic(4, 6, 2, 16, seed=6, num_slots=3)
        before = {n: a.copy() for n, a in model.parameters()}
        train_epoch(model, data, 0.0, None, epoch=0)
        for n, a in model.parameters():
            np.testing.assert_array_equal(before[n], a, err_msg=n)

    def test_same_seed_identical_trajectories(self):
        cfg = tiny_cfg(epochs=2)
        data = generate_synthetic(6, 6, 2, 16, seed=7, num_slots=3)
        runs = []
        for _ in range(2):
            streams = seed_streams(cfg.seed)
            model = TensorTransformer(cfg, streams["init"])
            hist = train_model(model, data, cfg, shuffle_rng=streams["shuffle"])
            runs.append([(m.loss, m.intent_acc, m.slot_acc) for m in hist])
        assert runs[0] == runs[1]

    def test_parallel_mode_identical_trajectory(self):
        cfg = tiny_cfg(epochs=2)
        data = generate_synthetic(6, 6, 2, 16, seed=8, num_slots=3)
        histories = []
        for parallel in (False, True):
            streams = seed_streams(cfg.seed)
            model = TensorTransformer(cfg, streams["init"])
            model.set_parallel(parallel)
            hist = train_model(model, data, cfg, shuffle_rng=streams["shuffle"])
            histories.append([(m.loss, m.intent_acc) for m in hist])
        assert histories[0] == histories[1]

    def test_loss_decreases_on_separable_task(self):
        cfg = tiny_cfg(num_slots=0, epochs=5, seq_len=8)
        data = generate_synthetic(30, 8, 2, 16, seed=9)
        streams = seed_streams(cfg.seed)
        model = TensorTransformer(cfg, streams["init"])
        hist = train_model(model, data, cfg, shuffle_rng=streams["shuffle"])
        losses = [m.loss for m in hist]
        assert losses[-1] < losses[0]

    def test_spill_mode_bit_exact(self, tmp_path):
        cfg = tiny_cfg(epochs=1)
        data = generate_synthetic(3, 6, 2, 16, seed=10, num_slots=3)
        results = []
        for store in (None, ActivationStore(str(tmp_path / "spill"))):
            streams = seed_streams(cfg.seed)
            model = TensorTransformer(cfg, streams["init"], store=store)
            hist = train_model(model, data, cfg, shuffle_rng=streams["shuffle"])
            results.append(([(m.loss, m.intent_acc) for m in hist],
                            {n: a.copy() for n, a in model.parameters()}))
        assert results[0][0] == results[1][0]
        for n in results[0][1]:
            np.testing.assert_array_equal(results[0][1][n], results[1][1][n], err_msg=n)


class TestSummaries:
    def test_factor_inventory_covers_all_factors(self):
        model = build(tiny_cfg())
        arrays = factor_inventory(model)
        factor_elems = sum(a.elems for a in arrays)
        want = sum(c.size for emb in (model.tok, model.pos, model.seg)
                   for c in emb.table.cores)
        for blk in model.blocks:
            want += sum(c.size for layer in blk.layers for c in layer.weight.cores)
        want += sum(c.size for c in model.classifier.proj.weight.cores)
        assert factor_elems == want
        same_stage = [a for a in arrays if a.conflict == "enc0.q/s1"]
        assert len(same_stage) == 4  # both ends of both chains load together

    def test_compression_summary_paper_shapes(self):
        cfg = TrainConfig()  # table defaults
        model = build(cfg)
        summary = compression_summary(model)
        assert summary["ratio"] >= 25.0
        assert summary["compressed_bytes"] == summary["compressed_params"] * 4
