import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexirec import metrics
from lexirec.clustering import ClusterModel, RelevantClusters
from lexirec.dataset import Dataset, Interaction
from lexirec.selection import RecommendationList


def lists_of(*item_lists, strategy="r"):
    return [RecommendationList(u, items, strategy, max(len(items), 1)) for u, items in enumerate(item_lists)]


def cluster_model(groups, num_items):
    """groups: {cluster id: [item indices]}; every cluster its own meta-cluster."""
    k = max(groups) + 1
    assignments = np.full(num_items, k, dtype=int)
    for c, members in groups.items():
        assignments[members] = c
    return ClusterModel(assignments, np.zeros((k + 1, 1)), np.arange(k + 1))


class TestCoverage:
    def test_full(self):
        assert metrics.coverage(lists_of([0, 1], [2, 3]), 4) == 1.0

    def test_identical_lists(self):
        assert metrics.coverage(lists_of(*[[1, 2, 3, 4, 5]] * 7), 100) == pytest.approx(0.05)

    def test_disjoint(self):
        assert metrics.coverage(lists_of([0, 1, 2, 3, 4], [5, 6, 7, 8, 9]), 100) == pytest.approx(0.10)

    def test_errors(self):
        with pytest.raises(ValueError):
            metrics.coverage([], 10)

    def test_monotone(self):
        rng = np.random.default_rng(0)
        acc, prev = [], 0.0
        for u in range(20):
            acc.append(RecommendationList(u, rng.choice(50, 5, replace=False), "r", 5))
            cur = metrics.coverage(acc, 50)
            assert cur >= prev
            prev = cur


def personalization_oracle(lists):
    sims = []
    for a, b in itertools.combinations(lists, 2):
        sa, sb = set(a.items), set(b.items)
        denom = math.sqrt(len(sa) * len(sb))
        sims.append(len(sa & sb) / denom if denom else 0.0)
    return 1.0 - sum(sims) / len(sims)


class TestPersonalization:
    def test_identical(self):
        assert metrics.personalization(lists_of([1, 2, 3], [1, 2, 3], [1, 2, 3])) == 0.0

    def test_disjoint(self):
        assert metrics.personalization(lists_of([1, 2], [3, 4], [5, 6])) == 1.0

    def test_one_shared_item(self):
        # cos = 1 / (sqrt(2) * sqrt(2)) = 1/2
        assert metrics.personalization(lists_of([1, 2], [2, 3])) == pytest.approx(0.5, abs=1e-15)

    def test_too_few(self):
        with pytest.raises(ValueError):
            metrics.personalization(lists_of([1]))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 15), unique=True, min_size=1, max_size=6),
                    min_size=2, max_size=10))
    def test_matches_brute_force(self, item_lists):
        recs = lists_of(*item_lists)
        assert metrics.personalization(recs) == pytest.approx(personalization_oracle(recs), abs=1e-12)


def make_test_set(pairs, num_users=3, num_items=10):
    inter = tuple(Interaction(u, i, 4.0, 0) for u, i in pairs)
    return Dataset(inter, {u: u for u in range(num_users)}, {i: i for i in range(num_items)})


class TestHitRate:
    def test_perfect(self):
        test = make_test_set([(0, 1), (0, 2), (1, 5)])
        assert metrics.hit_rate(lists_of([1, 2, 9], [5]), test) == 1.0

    def test_miss(self):
        test = make_test_set([(0, 1), (1, 5)])
        assert metrics.hit_rate(lists_of([3], [4]), test) == 0.0

    def test_single_user_ratio(self):
        test = make_test_set([(0, 1), (0, 2), (0, 3), (0, 4)])
        assert metrics.hit_rate(lists_of([1, 7, 8]), test) == 0.25

    def test_macro_average(self):
        test = make_test_set([(0, 1), (1, 5), (1, 6), (1, 7), (1, 8)])
        # user 0 recall 1, user 1 recall 1/4; user 2 has no test items and is ignored
        assert metrics.hit_rate(lists_of([1], [5], [9]), test) == pytest.approx(0.625)

    def test_no_test_users(self):
        test = make_test_set([(2, 1)])
        with pytest.raises(ValueError):
            metrics.hit_rate(lists_of([1], [5]), test)


# Items I1..I11 map to indices 1..11; R = {I1, I3, I5, I4, I7, I11}, C = {C1, C2, C4}.
R = RecommendationList(0, [1, 3, 5, 4, 7, 11], "r", 6)
C = RelevantClusters(frozenset({1, 2, 4}))
GOLDEN = {
    "highest": ({1: [1, 11], 2: [5, 7], 3: [], 4: [3, 4]}, Fraction(1)),
    "mid": ({1: [1, 4, 11], 2: [5, 7], 3: [3], 4: []}, Fraction(2, 3)),
    "poor": ({1: [1, 3, 11, 5, 4], 2: [], 3: [7], 4: []}, Fraction(1, 3)),
    "lowest": ({1: [], 2: [], 3: [1, 3, 11, 5, 4, 7], 4: []}, Fraction(0)),
}


class TestSerendipity:
    @pytest.mark.parametrize("name", list(GOLDEN))
    def test_golden_examples(self, name):
        groups, expected = GOLDEN[name]
        cm = cluster_model(groups, 12)
        assert metrics.serendipity_fraction(R.items, cm, C) == expected
        assert metrics.serendipity(R, cm, C) == pytest.approx(float(expected), abs=1e-12)

    def test_empty_relevant_is_zero(self):
        cm = cluster_model({1: [1, 11]}, 12)
        assert metrics.serendipity(R, cm, RelevantClusters(frozenset())) == 0.0

    def test_short_list_denominator(self):
        cm = cluster_model({0: [0], 1: [1], 2: [2], 3: [3]}, 4)
        rel = RelevantClusters(frozenset({0, 1, 2, 3}))
        rec = RecommendationList(0, [0, 2], "r", 2)
        assert metrics.serendipity(rec, cm, rel) == 1.0

    def test_empty_list(self):
        with pytest.raises(ValueError):
            metrics.serendipity(RecommendationList(0, [], "r", 3), cluster_model({0: [0]}, 2),
                                RelevantClusters(frozenset({0})))

    @settings(max_examples=80, deadline=None)
    @given(assign=st.lists(st.integers(0, 5), min_size=12, max_size=12),
           rel=st.frozensets(st.integers(0, 5)),
           items=st.lists(st.integers(0, 11), unique=True, min_size=1, max_size=8))
    def test_bounds_and_order_invariance(self, assign, rel, items):
        cm = ClusterModel(np.array(assign), np.zeros((6, 1)), np.arange(6))
        relevant = RelevantClusters(rel)
        a = metrics.serendipity(RecommendationList(0, items, "r", len(items)), cm, relevant)
        b = metrics.serendipity(RecommendationList(0, items[::-1], "r", len(items)), cm, relevant)
        assert 0.0 <= a <= 1.0 and a == b
        represented = {assign[i] for i in items}
        if rel and (rel <= represented and len(items) >= len(rel)):
            assert a == 1.0
        if rel and len(items) <= len(rel) and len({assign[i] for i in items}) == len(items) \
                and represented <= rel:
            assert a == 1.0

    def test_mean(self):
        cm = cluster_model({0: [0], 1: [1]}, 3)
        rel = {0: RelevantClusters(frozenset({0})), 1: RelevantClusters(frozenset({0}))}
        recs = [RecommendationList(0, [0], "r", 1), RecommendationList(1, [2], "r", 1)]
        assert metrics.mean_serendipity(recs, cm, rel) == 0.5
        assert metrics.mean_serendipity(recs[:1], cm, rel) == 1.0
        assert metrics.mean_serendipity([recs[0], recs[0]], cm, rel) == 1.0
        with pytest.raises(ValueError):
            metrics.mean_serendipity([], cm, rel)


class TestReport:
    def test_json_six_decimals(self):
        rep = metrics.MetricReport("l", 5, 0.5, 1 / 3, 0.0, 1.0, 12, "abc")
        line = rep.to_json()
        assert '"personalization": 0.333333' in line and '"coverage": 0.500000' in line
        assert json.loads(line)["num_users"] == 12
        back = metrics.MetricReport.from_json(line)
        assert back.strategy == "l" and back.k == 5 and back.personalization == 0.333333
