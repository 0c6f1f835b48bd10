import itertools
import re

import numpy as np
import pytest
from scipy.special import rel_entr

from rankdescent import (
    ConfigError,
    Dataset,
    DescentConfig,
    EuclideanRankingSystem,
    ExactKnnGraph,
    KlRankingSystem,
    RankingDigraph,
    build_ranking_digraph,
    exact_knn,
    find_cycle_witness,
    format_cycle,
    kl_divergence,
    recall,
    run,
    sample_simplex_uniform,
    search_non_metric_witness,
    to_dot,
    uniform_recall_sample,
)
from rankdescent.evaluation import _smallest_k

from conftest import ComparatorOnlyRanking


class TestSmallestK:
    def test_matches_full_sort_on_random_rows(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 200))
            k = int(rng.integers(1, n))
            scores = rng.random(n)
            expected = np.argsort(scores, kind="stable")[:k]
            assert np.array_equal(_smallest_k(scores, k), expected)

    def test_all_tied_scores_select_lowest_ids(self):
        scores = np.zeros(100)
        assert list(_smallest_k(scores, 5)) == [0, 1, 2, 3, 4]

    def test_tie_group_straddling_partition_pad(self):
        # 60 copies of the boundary value force the full-sort fallback
        scores = np.concatenate([np.full(60, 1.0), np.zeros(3)])
        got = _smallest_k(scores, 5)
        assert list(got) == [60, 61, 62, 0, 1]


class TestExactKnn:
    def test_line_points(self):
        pts = np.array([[0.0], [1.0], [3.0], [7.0]])
        graph = exact_knn(Dataset(pts), EuclideanRankingSystem(pts), 2)
        assert list(graph.of(0)) == [1, 2]
        assert list(graph.of(1)) == [0, 2]
        assert list(graph.of(2)) == [1, 0]
        assert list(graph.of(3)) == [2, 1]

    def test_forced_case_sorts_everything(self):
        pts = sample_simplex_uniform(3, 5, 1)
        rs = KlRankingSystem(pts)
        graph = exact_knn(Dataset(pts), rs, 4)
        for x in range(5):
            expected = sorted((y for y in range(5) if y != x), key=lambda y: (rs.score(x, y), y))
            assert list(graph.of(x)) == expected

    def test_against_divergence_matrix_argsort(self):
        # independent oracle: full rel_entr matrix, row argsort
        n, k = 200, 8
        pts = sample_simplex_uniform(6, n, 2)
        graph = exact_knn(Dataset(pts), KlRankingSystem(pts), k)
        dmat = np.array([[rel_entr(pts[i], pts[j]).sum() for j in range(n)] for i in range(n)])
        np.fill_diagonal(dmat, np.inf)
        for x in range(n):
            assert list(graph.of(x)) == list(np.argsort(dmat[x], kind="stable")[:k])

    def test_workers_agree(self):
        pts = sample_simplex_uniform(5, 300, 3)
        ds, rs = Dataset(pts), KlRankingSystem(pts)
        a = exact_knn(ds, rs, 6, workers=1)
        b = exact_knn(ds, rs, 6, workers=4)
        assert np.array_equal(a.neighbors, b.neighbors)

    def test_comparator_only_path(self):
        pts = sample_simplex_uniform(4, 40, 4)
        scored = KlRankingSystem(pts)
        a = exact_knn(Dataset(pts), scored, 5)
        b = exact_knn(Dataset(pts), ComparatorOnlyRanking(scored), 5)
        assert np.array_equal(a.neighbors, b.neighbors)

    def test_rejects_n_not_greater_than_k(self):
        pts = sample_simplex_uniform(3, 4, 5)
        with pytest.raises(ConfigError):
            exact_knn(Dataset(pts), KlRankingSystem(pts), 4)


class TestRecall:
    def test_perfect_and_disjoint(self):
        exact = ExactKnnGraph(np.array([[1, 2], [0, 2], [0, 1]]))
        assert recall(exact.neighbors, exact, [0, 1, 2]) == 1.0
        flipped = np.array([[3, 4], [3, 4], [3, 4]])
        assert recall(flipped, exact, [0, 1, 2]) == 0.0

    def test_partial_overlap(self):
        exact = ExactKnnGraph(np.array([[1, 2], [0, 2]]))
        approx = np.array([[1, 3], [0, 2]])
        assert recall(approx, exact, [0, 1]) == pytest.approx(0.75)

    def test_mapping_input(self):
        exact = ExactKnnGraph(np.array([[1, 2], [0, 2], [0, 1]]))
        assert recall({0: [2, 1], 1: [0, 2], 2: [1, 0]}, exact, [0, 2]) == 1.0

    def test_k_mismatch_rejected(self):
        exact = ExactKnnGraph(np.array([[1, 2], [0, 2]]))
        with pytest.raises(ValueError):
            recall(np.array([[1], [0]]), exact, [0])
        with pytest.raises(ValueError):
            recall({0: [1]}, exact, [0])

    def test_empty_sample_rejected(self):
        exact = ExactKnnGraph(np.array([[1], [0]]))
        with pytest.raises(ValueError):
            recall(np.array([[1], [0]]), exact, [])

    def test_uniform_sample_deterministic(self):
        a = uniform_recall_sample(1000, 7)
        b = uniform_recall_sample(1000, 7)
        assert np.array_equal(a, b)
        assert a.size == 6
        assert len(set(map(int, a))) == 6

    def test_desk_scale_oracle_equivalence(self):
        # descent to termination stays within 10% of exact on mid-size data
        pts = sample_simplex_uniform(10, 400, 8)
        ds, rs = Dataset(pts), KlRankingSystem(pts)
        friends, _ = run(ds, rs, DescentConfig(k=8, seed=8))
        exact = exact_knn(ds, rs, 8)
        assert recall(friends, exact, np.arange(400)) >= 0.9


def _euclid_digraph(n_points, seed, d=3):
    pts = np.random.default_rng(seed).standard_normal((n_points, d))
    return build_ranking_digraph(Dataset(pts), EuclideanRankingSystem(pts))


class TestRankingDigraph:
    def test_smallest_line_graph(self):
        dg = _euclid_digraph(3, 0)
        assert len(dg.vertices) == 3
        assert dg.arc_count == 3

    def test_six_point_counts(self):
        dg = _euclid_digraph(6, 1)
        assert len(dg.vertices) == 15
        assert dg.arc_count == 60  # n * C(n-1, 2)
        # every vertex {a,b} is adjacent to the 2(n-2) = 8 pairs sharing a point
        adjacency = {v: 0 for v in dg.vertices}
        for tail, heads in dg.arcs.items():
            for head in heads:
                adjacency[tail] += 1
                adjacency[head] += 1
        assert set(adjacency.values()) == {8}

    def test_arcs_connect_pairs_sharing_one_point(self):
        dg = _euclid_digraph(5, 2)
        seen = set()
        for tail, heads in dg.arcs.items():
            for head in heads:
                assert len(set(tail) & set(head)) == 1
                key = (tail, head) if tail < head else (head, tail)
                assert key not in seen, "adjacent pair oriented twice"
                seen.add(key)
        # every adjacent pair is oriented exactly once
        expected = sum(
            1
            for u, v in itertools.combinations(dg.vertices, 2)
            if len(set(u) & set(v)) == 1
        )
        assert len(seen) == expected

    def test_guard(self):
        pts = np.random.default_rng(3).standard_normal((65, 2))
        with pytest.raises(ConfigError):
            build_ranking_digraph(Dataset(pts), EuclideanRankingSystem(pts))


class TestFindCycleWitness:
    def test_metric_rankings_are_acyclic(self):
        for seed in range(10):
            assert find_cycle_witness(_euclid_digraph(6, seed)) is None

    def test_single_arc_has_no_cycle(self):
        dg = RankingDigraph(n=3, arcs={(0, 1): ((0, 2),), (0, 2): (), (1, 2): ()})
        assert find_cycle_witness(dg) is None

    def test_manual_cycle_found(self):
        dg = RankingDigraph(
            n=3,
            arcs={(0, 1): ((0, 2),), (0, 2): ((1, 2),), (1, 2): ((0, 1),)},
        )
        cycle = find_cycle_witness(dg)
        assert cycle is not None
        assert cycle[0] == cycle[-1]
        assert len(cycle) == 4

    def test_kl_cycle_exists_and_verifies(self):
        witness = search_non_metric_witness(15, 200, 0)
        assert witness is not None
        cycle = witness.cycle
        assert cycle[0] == cycle[-1]
        for tail, head in zip(cycle, cycle[1:]):
            shared = set(tail) & set(head)
            assert len(shared) == 1
            x = shared.pop()
            (y,) = set(tail) - {x}
            (z,) = set(head) - {x}
            dy = kl_divergence(witness.points[x], witness.points[y])
            dz = kl_divergence(witness.points[x], witness.points[z])
            assert (dy, y) < (dz, z)
        assert witness.verify()


class TestWitnessSearch:
    def test_zero_budget_returns_none(self):
        assert search_non_metric_witness(3, 0, 0) is None

    def test_deterministic_given_seed(self):
        a = search_non_metric_witness(15, 50, 4)
        b = search_non_metric_witness(15, 50, 4)
        assert a is not None and b is not None
        assert a.trial == b.trial
        assert np.array_equal(a.points, b.points)
        assert a.cycle == b.cycle

    def test_rejects_low_dimension(self):
        with pytest.raises(ConfigError):
            search_non_metric_witness(2, 10, 0)


class TestRendering:
    def test_format_cycle(self):
        cycle = [(1, 2), (1, 4), (2, 4), (1, 2)]
        assert format_cycle(cycle) == "{1,2} -> {1,4} -> {2,4} -> {1,2}"

    def test_dot_output(self):
        dg = _euclid_digraph(3, 5)
        dot = to_dot(dg)
        assert dot.startswith("digraph ranking {")
        assert dot.rstrip().endswith("}")
        assert dot.count(" -> ") == dg.arc_count
        for v in dg.vertices:
            assert '"{%d,%d}"' % v in dot

    def test_dot_highlight(self):
        dg = _euclid_digraph(3, 6)
        dot = to_dot(dg, highlight=[dg.vertices[0]])
        assert "fillcolor=black" in dot
        assert len(re.findall(r"fillcolor=black", dot)) == 1
