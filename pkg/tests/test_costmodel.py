import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttedge.costmodel import (LayerConfig, compare_report, mem_btt, mem_mm, mem_tt_rtl,
                              mem_ttm, mul_btt, mul_mm, mul_tt_rtl, mul_ttm,
                              report_csv, run_btt, run_tt_rtl, run_ttm, sweep,
                              sweep_csv, sweep_json, tt_weight_elems, ttm_weight_elems)

RANKS12 = (1, 12, 12, 12, 12, 12, 1)
# ordering from the layer table: output modes lead the folded tensor shape
TABLE_CFG = LayerConfig((12, 8, 8), (8, 8, 12), RANKS12, 32)
# ordering used in the worked contraction example
EXAMPLE_CFG = LayerConfig((8, 8, 12), (12, 8, 8), RANKS12, 32)


def random_cfg(rng, d_max=4, mode_max=6, rank_max=8, k_max=64):
    d = int(rng.integers(1, d_max + 1))
    m = tuple(int(x) for x in rng.integers(1, mode_max + 1, size=d))
    n = tuple(int(x) for x in rng.integers(1, mode_max + 1, size=d))
    ranks = (1,) + tuple(int(x) for x in rng.integers(1, rank_max + 1, size=2 * d - 1)) + (1,)
    ttm_ranks = (1,) + tuple(int(x) for x in rng.integers(1, rank_max + 1, size=d - 1)) + (1,)
    k = int(rng.integers(1, k_max + 1))
    return LayerConfig(m, n, ranks, k, ttm_ranks)


class TestDense:
    def test_known_product(self):
        cfg = LayerConfig((768,), (768,), (1, 1, 1), 32)
        assert mul_mm(cfg) == 18_874_368
        assert cfg.rows * cfg.cols == 589_824

    def test_degenerate(self):
        assert mul_mm(LayerConfig((1,), (1,), (1, 1, 1), 1)) == 1

    def test_training_multiplier(self):
        cfg = LayerConfig((768,), (768,), (1, 1, 1), 32)
        assert mul_mm(cfg, train_multiplier=3) == 56_623_104

    def test_no_intermediates(self):
        assert mem_mm(TABLE_CFG) == 0


class TestRightToLeft:
    def test_d1_single_term(self):
        cfg = LayerConfig((5,), (7,), (1, 3, 1), 4)
        r0, r1, r2 = 1, 3, 1
        assert mul_tt_rtl(cfg) == 4 * (r1 * r2 * 7 + r0 * r1 * 5)

    def test_matches_instrumented_counter(self):
        rng = np.random.default_rng(0)
        muls, live = run_tt_rtl(TABLE_CFG, rng)
        assert muls == mul_tt_rtl(TABLE_CFG)
        assert live == mem_tt_rtl(TABLE_CFG)

    def test_degenerate_chain(self):
        for d in (1, 2, 3):
            cfg = LayerConfig((1,) * d, (1,) * d, (1,) * (2 * d + 1), 9)
            assert mul_tt_rtl(cfg) == 2 * d * 9


class TestBidirectional:
    def test_example_mul_count(self):
        assert mul_btt(EXAMPLE_CFG) == 829_440

    def test_example_mem_count(self):
        assert mem_btt(EXAMPLE_CFG) == 20_352

    def test_only_boundary_term_scales_with_workload(self):
        doubled = TABLE_CFG.with_workload(64)
        k_term = 32 * 12 * (768 + 768)
        assert mul_btt(doubled) - mul_btt(TABLE_CFG) == k_term
        assert mem_btt(doubled) - mem_btt(TABLE_CFG) == 32 * 12

    def test_matches_instrumented_counter(self):
        rng = np.random.default_rng(1)
        muls, live = run_btt(TABLE_CFG, rng)
        assert muls == mul_btt(TABLE_CFG)
        assert live == mem_btt(TABLE_CFG)

    def test_cheaper_than_rtl_when_workload_dominates_uniform_modes(self):
        # exact for uniform modes and ranks: the two orders tie at K == n
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = int(rng.integers(1, 5))
            n = int(rng.integers(1, 7))
            r = int(rng.integers(1, 9))
            k = int(rng.integers(n, 65))
            cfg = LayerConfig((n,) * d, (n,) * d,
                              (1,) + (r,) * (2 * d - 1) + (1,), k)
            assert mul_btt(cfg) <= mul_tt_rtl(cfg)
        tie = LayerConfig((4, 4), (4, 4), (1, 3, 3, 3, 1), 4)
        assert mul_btt(tie) == mul_tt_rtl(tie)


class TestTTM:
    def test_d1_is_dense(self):
        cfg = LayerConfig((6,), (7,), (1, 4, 1), 3, ttm_ranks=(1, 1))
        assert mul_ttm(cfg) == 3 * 6 * 7
        assert mem_ttm(cfg) == 0

    def test_d2_hand_expansion(self):
        cfg = LayerConfig((4, 4), (4, 4), (1, 2, 2, 2, 1), 5, ttm_ranks=(1, 3, 1))
        want = 5 * (3 * 1 * (4 * 4) * 4 + 1 * 3 * 4 * (4 * 4))
        assert mul_ttm(cfg) == want
        assert mem_ttm(cfg) == 5 * (3 * 4 * 4)

    def test_leading_term_growth(self):
        # for m = n the cost divided by K * n**(d+1) approaches a constant in n
        d, r = 3, 4
        ratios = []
        for n in (4, 8, 16, 32):
            cfg = LayerConfig((n,) * d, (n,) * d, (1,) + (r,) * (2 * d - 1) + (1,), 2,
                              ttm_ranks=(1,) + (r,) * (d - 1) + (1,))
            ratios.append(mul_ttm(cfg) / (2 * n ** (d + 1)))
        assert ratios[-1] == pytest.approx((d - 2) * r * r + 2 * r)
        assert max(ratios) - min(ratios) <= 1e-9

    def test_matches_instrumented_execution(self):
        rng = np.random.default_rng(3)
        cfg = LayerConfig((3, 4), (4, 2), (1, 2, 2, 2, 1), 6, ttm_ranks=(1, 3, 1))
        muls, live, y, oracle = run_ttm(cfg, rng)
        assert muls == mul_ttm(cfg)
        assert live == mem_ttm(cfg)
        np.testing.assert_allclose(y, oracle, rtol=1e-10)


class TestReports:
    def test_fig_ratio_bands(self):
        rep = compare_report(TABLE_CFG)
        assert rep.ratio_compute("btt") == pytest.approx(22.51, rel=0.07)
        assert rep.ratio_memory("btt") == pytest.approx(22.67, rel=0.07)
        rtl_over_btt_muls = rep.schemes["tt_rtl"].muls / rep.schemes["btt"].muls
        rtl_over_btt_mem = rep.schemes["tt_rtl"].total_mem / rep.schemes["btt"].total_mem
        assert rtl_over_btt_muls == pytest.approx(1.49, rel=0.07)
        assert rtl_over_btt_mem == pytest.approx(2.31, rel=0.07)

    def test_rank_sweep_ratios_non_increasing(self):
        points = sweep(EXAMPLE_CFG, "rank", range(1, 49))
        for scheme in ("ttm", "tt_rtl", "btt"):
            comp = [rep.ratio_compute(scheme) for _, rep in points]
            mem = [rep.ratio_memory(scheme) for _, rep in points]
            assert all(a >= b - 1e-12 for a, b in zip(comp, comp[1:]))
            assert all(a >= b - 1e-12 for a, b in zip(mem, mem[1:]))

    def test_rank_one_memory_ratio_is_sweep_maximum(self):
        points = sweep(EXAMPLE_CFG, "rank", range(1, 49))
        btt_mem = [rep.ratio_memory("btt") for _, rep in points]
        assert btt_mem[0] == max(btt_mem)

    def test_csv_and_json_emission(self):
        rep = compare_report(TABLE_CFG)
        text = report_csv(rep)
        assert text.splitlines()[0] == "scheme,muls,weight_mem,act_mem,ratio_compute,ratio_memory"
        assert len(text.splitlines()) == 5
        pts = sweep(TABLE_CFG, "K", [8, 16])
        assert "ratio_compute" in sweep_json("K", pts)
        assert sweep_csv("K", pts).count("\n") == 1 + 2 * 4

    def test_weight_elements(self):
        assert tt_weight_elems(TABLE_CFG) == 4896
        emb_cfg = LayerConfig((12, 8, 8), (10, 10, 10), (1,) * 7, 1, ttm_ranks=(1, 30, 30, 1))
        assert ttm_weight_elems(emb_cfg) == 78000


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_counts_equal_execution_property(seed):
    rng = np.random.default_rng(seed)
    cfg = random_cfg(rng)
    muls, live = run_tt_rtl(cfg, rng)
    assert (muls, live) == (mul_tt_rtl(cfg), mem_tt_rtl(cfg))
    muls, live = run_btt(cfg, rng)
    assert (muls, live) == (mul_btt(cfg), mem_btt(cfg))
    muls, live, y, oracle = run_ttm(cfg, rng)
    assert (muls, live) == (mul_ttm(cfg), mem_ttm(cfg))
    np.testing.assert_allclose(y, oracle, rtol=1e-8, atol=1e-10)
