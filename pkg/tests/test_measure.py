from __future__ import annotations

import math

import numpy as np
import pytest

from fkcoupling import geometry as g
from fkcoupling.connectivity import AdHocGraph, BoundaryCondition, ClusterIndex
from fkcoupling.measure import (
    CONDITION_NONE,
    CONDITION_TB_DISCONNECTED,
    ExactTable,
    FKParams,
    comparison_parameter,
    exact_distribution,
    exact_mean,
    heat_bath_close_prob,
    log_weight,
    total_variation,
    weight,
)

FREE = BoundaryCondition.FREE
WIRED = BoundaryCondition.WIRED
TB = BoundaryCondition.TB


class TestFKParams:
    def test_rejects_q_below_one(self):
        with pytest.raises(ValueError):
            FKParams(0.5, 0.5)

    def test_rejects_p_outside_unit_interval(self):
        with pytest.raises(ValueError):
            FKParams(-0.1, 2.0)
        with pytest.raises(ValueError):
            FKParams(1.5, 2.0)

    def test_threshold_ordering(self):
        for p in (0.1, 0.5, 0.9):
            for q in (1.0, 2.0, 10.0):
                params = FKParams(p, q)
                assert params.close_prob_disconnected >= params.close_prob_connected

    def test_thresholds_values(self):
        params = FKParams(0.9, 2.0)
        assert params.close_prob_connected == pytest.approx(0.1)
        assert params.close_prob_disconnected == pytest.approx(0.1 / 0.55)

    def test_spin_dictionary_roundtrip(self):
        params = FKParams(0.75, 2.0)
        assert params.ising_beta == pytest.approx(math.log(2.0))
        back = FKParams.from_ising_beta(params.ising_beta)
        assert back.p == pytest.approx(0.75)


class TestWeight:
    def test_single_edge_hand_values(self):
        graph = AdHocGraph(2, [(0, 1)])
        params = FKParams(0.5, 2.0)
        assert weight(graph, [1], FREE, params) == pytest.approx(1.0)
        assert weight(graph, [0], FREE, params) == pytest.approx(2.0)

    def test_q_one_is_bernoulli_product_after_normalization(self):
        graph = AdHocGraph(3, [(0, 1), (1, 2), (0, 2)])
        params = FKParams(0.3, 1.0)
        table = exact_distribution(graph, FREE, params)
        for mask in range(8):
            n_open = bin(mask).count("1")
            expect = 0.3**n_open * 0.7 ** (3 - n_open)
            assert table.prob(mask) == pytest.approx(expect, abs=1e-12)

    def test_all_open_single_cluster(self):
        graph = AdHocGraph(3, [(0, 1), (1, 2)])
        params = FKParams(0.4, 3.0)
        assert weight(graph, [1, 1], FREE, params) == pytest.approx(0.4**2 * 3.0)


class TestHeatBath:
    def test_connected_without_gives_one_minus_p(self):
        graph = AdHocGraph(3, [(0, 1), (1, 2), (0, 2)])
        params = FKParams(0.9, 2.0)
        idx = ClusterIndex(graph, np.ones(3, np.uint8), FREE)
        assert heat_bath_close_prob(idx, 0, params) == pytest.approx(0.1)

    def test_q_one_disconnected(self):
        graph = AdHocGraph(2, [(0, 1)])
        params = FKParams(0.6, 1.0)
        idx = ClusterIndex(graph, np.zeros(1, np.uint8), FREE)
        assert heat_bath_close_prob(idx, 0, params) == pytest.approx(0.4)

    def test_lemma_threshold_value(self):
        graph = AdHocGraph(2, [(0, 1)])
        params = FKParams(0.9, 2.0)
        idx = ClusterIndex(graph, np.zeros(1, np.uint8), FREE)
        got = heat_bath_close_prob(idx, 0, params)
        assert got == pytest.approx(0.1 / (0.1 + 0.45))
        # cross-check against the exact weight ratio
        wc = weight(graph, [0], FREE, params)
        wo = weight(graph, [1], FREE, params)
        assert got == pytest.approx(wc / (wc + wo))

    def test_exhaustive_ratio_small_graph(self):
        rng = np.random.default_rng(2)
        pairs = [(i, j) for i in range(5) for j in range(i + 1, 5)]
        chosen = rng.choice(len(pairs), size=6, replace=False)
        graph = AdHocGraph(5, [pairs[i] for i in chosen])
        params = FKParams(0.7, 2.5)
        for mask in range(1 << 6):
            cfg = np.array([(mask >> j) & 1 for j in range(6)], np.uint8)
            idx = ClusterIndex(graph, cfg, FREE)
            for e in range(6):
                lo = cfg.copy()
                lo[e] = 0
                hi = cfg.copy()
                hi[e] = 1
                wc = log_weight(graph, lo, FREE, params)
                wo = log_weight(graph, hi, FREE, params)
                ratio = 1.0 / (1.0 + math.exp(wo - wc))
                assert abs(heat_bath_close_prob(idx, e, params) - ratio) < 1e-12


class TestComparisonParameter:
    def test_q_one_is_p(self):
        assert comparison_parameter(FKParams(0.37, 1.0)) == pytest.approx(0.37)

    def test_p_one_is_one(self):
        assert comparison_parameter(FKParams(1.0, 7.0)) == pytest.approx(1.0)

    def test_formula_value(self):
        assert comparison_parameter(FKParams(0.9, 2.0)) == pytest.approx(0.9 / 1.1)


class TestExactDistribution:
    def test_single_edge_free(self):
        graph = AdHocGraph(2, [(0, 1)])
        table = exact_distribution(graph, FREE, FKParams(0.5, 2.0))
        assert table.prob(1) == pytest.approx(1.0 / 3.0)
        assert table.prob(0) == pytest.approx(2.0 / 3.0)

    def test_probabilities_sum_to_one(self):
        box = g.build_box(2, 1, center=(0.5, 0.5))
        for bc in (FREE, WIRED, TB):
            table = exact_distribution(box, bc, FKParams(0.7, 2.0))
            assert abs(table.probs.sum() - 1.0) < 1e-12

    def test_conditioning_zeroes_connected_configs(self):
        box = g.build_box(2, 1, center=(0.5, 0.5))
        table = exact_distribution(
            box, TB, FKParams(0.7, 2.0), condition=CONDITION_TB_DISCONNECTED
        )
        assert np.all(table.probs[table.tb_connected == 1] == 0.0)
        assert abs(table.probs.sum() - 1.0) < 1e-12
        # some connected configs exist and would otherwise carry mass
        assert table.tb_connected.sum() > 0

    def test_too_large_graph_rejected(self):
        box = g.build_box(2, 6)
        with pytest.raises(ValueError):
            exact_distribution(box, FREE, FKParams(0.5, 2.0))

    def test_unknown_condition(self):
        graph = AdHocGraph(2, [(0, 1)])
        with pytest.raises(ValueError):
            exact_distribution(graph, FREE, FKParams(0.5, 2.0), condition="nope")

    def test_wired_vs_free_differ(self):
        box = g.build_box(2, 1, center=(0.5, 0.5))
        free = exact_distribution(box, FREE, FKParams(0.6, 2.0))
        wired = exact_distribution(box, WIRED, FKParams(0.6, 2.0))
        assert not np.allclose(free.probs, wired.probs)


class TestExactMean:
    def test_constant(self):
        graph = AdHocGraph(2, [(0, 1)])
        table = exact_distribution(graph, FREE, FKParams(0.5, 2.0))
        assert exact_mean(table, lambda m: 7.5) == pytest.approx(7.5)

    def test_indicator_of_everything(self):
        graph = AdHocGraph(2, [(0, 1)])
        table = exact_distribution(graph, FREE, FKParams(0.5, 2.0))
        assert exact_mean(table, lambda m: 1.0) == pytest.approx(1.0)

    def test_open_indicator_single_edge(self):
        graph = AdHocGraph(2, [(0, 1)])
        table = exact_distribution(graph, FREE, FKParams(0.5, 2.0))
        assert exact_mean(table, lambda m: m & 1) == pytest.approx(1.0 / 3.0)


class TestDetailedBalance:
    def test_single_edge_kernel_balances_exactly(self):
        rng = np.random.default_rng(5)
        pairs = [(i, j) for i in range(5) for j in range(i + 1, 5)]
        chosen = rng.choice(len(pairs), size=6, replace=False)
        graph = AdHocGraph(5, [pairs[i] for i in chosen])
        params = FKParams(0.8, 3.0)
        table = exact_distribution(graph, FREE, params)
        m = graph.n_edges
        for mask in range(1 << m):
            cfg = np.array([(mask >> j) & 1 for j in range(m)], np.uint8)
            idx = ClusterIndex(graph, cfg, FREE)
            for e in range(m):
                other = mask ^ (1 << e)
                close = heat_bath_close_prob(idx, e, params)
                if mask & (1 << e):
                    flow = table.prob(mask) * close / m
                    back = table.prob(other) * close / m
                else:
                    flow = table.prob(mask) * (1.0 - close) / m
                    back = table.prob(other) * (1.0 - close) / m
                assert abs(flow - back) < 1e-15


class TestTableInterfaces:
    def test_export_lines(self, tmp_path):
        graph = AdHocGraph(2, [(0, 1)])
        table = exact_distribution(graph, FREE, FKParams(0.5, 2.0))
        path = tmp_path / "table.txt"
        table.save(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# fkcoupling-exact-table v1")
        assert len(lines) == 1 + 2
        mask, prob = lines[1].split()
        assert int(mask) == 0 and float(prob) == pytest.approx(2.0 / 3.0)

    def test_sampling_matches_probabilities(self):
        graph = AdHocGraph(3, [(0, 1), (1, 2)])
        table = exact_distribution(graph, FREE, FKParams(0.6, 2.0))
        rng = np.random.default_rng(0)
        draws = table.sample_masks(rng, 50_000)
        counts = np.bincount(draws, minlength=4)
        assert total_variation(counts, table) < 0.02

    def test_total_variation_validates(self):
        graph = AdHocGraph(2, [(0, 1)])
        table = exact_distribution(graph, FREE, FKParams(0.5, 2.0))
        with pytest.raises(ValueError):
            total_variation(np.zeros(7), table)
        with pytest.raises(ValueError):
            total_variation(np.zeros(2), table)

    def test_mask_roundtrip(self):
        graph = AdHocGraph(3, [(0, 1), (1, 2), (0, 2)])
        table = exact_distribution(graph, FREE, FKParams(0.5, 2.0))
        for mask in range(8):
            assert table.mask_of(table.mask_to_config(mask)) == mask
