import numpy as np
import pytest

from rankagg.model import PartialRanking, QueryInstance
from rankagg.rankdist import rank_pmfs, unsup_contest_matrix
from rankagg.unsup import (
    aggregate,
    borda,
    borda_scores,
    expected_ranks,
    rrf,
    rrf_scores,
    stagg_bc,
    stagg_bc_scores,
    stagg_rrf,
    stagg_rrf_scores,
)

from conftest import A, B, C, D


def random_instance(rng, n, m, full=False):
    inputs = []
    for _ in range(m):
        perm = rng.permutation(n)
        k = n if full else int(rng.integers(1, n + 1))
        inputs.append(PartialRanking.from_order(int(j) for j in perm[:k]))
    return QueryInstance("r", n, tuple(inputs))


class TestBorda:
    def test_four_item_failure(self, four_item):
        np.testing.assert_array_equal(borda_scores(four_item), [3, 5, 5, 2])
        assert borda(four_item).ranking("1") == [B, C, A, D]

    def test_single_full_ranking(self):
        q = QueryInstance("q", 5, (PartialRanking.from_order([3, 1, 4, 0, 2]),))
        assert borda(q).ranking("q") == [3, 1, 4, 0, 2]

    def test_repeated_inputs(self):
        tau = PartialRanking.from_order([2, 0, 1])
        once = QueryInstance("q", 3, (tau,))
        thrice = QueryInstance("q", 3, (tau, tau, tau))
        assert borda(thrice).ranking("q") == borda(once).ranking("q")


class TestRRF:
    def test_four_item(self, four_item):
        s = rrf_scores(four_item, 40.0)
        np.testing.assert_allclose(s, [1 / 41, 1 / 42 + 1 / 41, 1 / 42 + 1 / 41, 1 / 42], rtol=1e-15)
        assert s[B] == pytest.approx(0.048199, abs=1e-6)
        assert rrf(four_item, 40.0).ranking("1") == [B, C, A, D]

    def test_single_full_ranking(self):
        q = QueryInstance("q", 4, (PartialRanking.from_order([1, 3, 0, 2]),))
        assert rrf(q).ranking("q") == [1, 3, 0, 2]

    def test_absent_everywhere(self):
        q = QueryInstance("q", 3, (PartialRanking.from_order([1, 0]),))
        scores = rrf_scores(q)
        assert scores[2] == 0.0
        assert rrf(q).ranking("q")[-1] == 2

    def test_bad_constant(self, four_item):
        with pytest.raises(ValueError):
            rrf_scores(four_item, 0.0)


class TestStaggBC:
    def test_four_item_expected_ranks(self, four_item):
        totals = expected_ranks(four_item).sum(axis=0)
        np.testing.assert_allclose(totals, [4.25, 4.5, 4.5, 4.75], atol=1e-12)
        np.testing.assert_allclose(stagg_bc_scores(four_item), (12 - totals) / 3, atol=1e-12)
        ranking = stagg_bc(four_item).ranking("1")
        assert ranking == [A, B, C, D]

    def test_single_item(self):
        q = QueryInstance("q", 1, (PartialRanking.from_order([0]),))
        assert stagg_bc_scores(q).tolist() == [1.0]

    def test_all_absent(self):
        q = QueryInstance("q", 5, (PartialRanking({}), PartialRanking({})))
        s = stagg_bc_scores(q)
        assert np.all(s == s[0])
        assert stagg_bc(q).ranking("q") == [0, 1, 2, 3, 4]

    def test_fast_path_matches_full_pmfs(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            q = random_instance(rng, int(rng.integers(2, 15)), int(rng.integers(1, 6)))
            naive = np.zeros(q.n)
            utility = q.n - np.arange(q.n)
            for tau in q.inputs:
                naive += rank_pmfs(unsup_contest_matrix(tau, q.n)) @ utility
            np.testing.assert_allclose(stagg_bc_scores(q), naive / q.m, atol=1e-9, rtol=0)

    @pytest.mark.parametrize("n", range(1, 11))
    def test_single_full_ranking_monotone(self, n):
        order = list(np.random.default_rng(n).permutation(n))
        q = QueryInstance("q", n, (PartialRanking.from_order(order),))
        along = expected_ranks(q)[0][order]
        steps = np.diff(along)
        assert np.all(steps >= -1e-12)
        for a, step in enumerate(steps, start=1):
            if 2 * a == n:
                assert abs(step) <= 1e-12
            else:
                assert step > 1e-12


class TestStaggRRF:
    def test_two_items(self):
        q = QueryInstance("q", 2, (PartialRanking.from_order([0, 1]),))
        s = stagg_rrf_scores(q, 40.0)
        np.testing.assert_allclose(s, [0.5 / 40 + 0.5 / 41] * 2, rtol=1e-15)
        assert stagg_rrf(q, 40.0).ranking("q") == [0, 1]

    def test_single_item(self):
        q = QueryInstance("q", 1, (PartialRanking.from_order([0]),))
        assert stagg_rrf_scores(q, 40.0).tolist() == [1 / 40]

    def test_not_value_at_mean(self, four_item):
        # E[1/(R+C)] exceeds 1/(E[R]+C) by convexity
        plug_in = (1.0 / (expected_ranks(four_item) + 40.0)).sum(axis=0)
        assert np.all(stagg_rrf_scores(four_item) > plug_in)

    def test_four_item(self, four_item):
        ranking = stagg_rrf(four_item).ranking("1")
        assert ranking[0] == A and ranking[-1] == D


@pytest.mark.parametrize("score", [borda_scores, rrf_scores, stagg_bc_scores, stagg_rrf_scores])
def test_input_order_invariance(score):
    rng = np.random.default_rng(8)
    for _ in range(10):
        q = random_instance(rng, 8, 5)
        shuffled = q.with_inputs([q.inputs[i] for i in rng.permutation(q.m)])
        np.testing.assert_allclose(score(q), score(shuffled), atol=1e-12, rtol=0)


@pytest.mark.parametrize("score", [borda_scores, rrf_scores])
def test_relabel_invariance_full_rankings(score):
    rng = np.random.default_rng(9)
    n = 7
    q = random_instance(rng, n, 4, full=True)
    relabel = rng.permutation(n)
    moved = QueryInstance("q", n, tuple(
        PartialRanking.from_order(int(relabel[j]) for j in tau.order()) for tau in q.inputs
    ))
    np.testing.assert_allclose(score(moved)[relabel], score(q), atol=1e-15)


def test_aggregate_threads_do_not_change_output():
    rng = np.random.default_rng(10)
    instances = [random_instance(rng, 10, 4).with_inputs(random_instance(rng, 10, 4).inputs) for _ in range(6)]
    instances = [QueryInstance(str(k), q.n, q.inputs) for k, q in enumerate(instances)]
    for method in ("borda", "rrf", "stagg-bc", "stagg-rrf"):
        one = aggregate(instances, method, threads=1)
        many = aggregate(instances, method, threads=4)
        assert one.rankings == many.rankings
        assert list(one.rankings) == [q.query_id for q in instances]


def test_unknown_method():
    with pytest.raises(ValueError):
        aggregate([], "mclk")
