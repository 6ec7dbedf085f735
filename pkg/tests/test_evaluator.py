from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unirec.data import Dataset, leave_one_out_split
from unirec.evaluator import (evaluate, metrics_from_rank, rank_ground_truth, report_from_ranks)

from helpers import sort_rank, uniform_rank_mrr


def test_rank_examples():
    assert rank_ground_truth([0.1, 0.9, 0.3], 1) == 1
    assert rank_ground_truth([0.5] * 100, 99) == 1
    assert rank_ground_truth([3.0, 2.0, 1.0], 2) == 3
    with pytest.raises(ValueError):
        rank_ground_truth([1.0, 2.0], 2)
    with pytest.raises(ValueError):
        rank_ground_truth([1.0, math.nan], 0)


def test_metric_spot_checks():
    m1 = metrics_from_rank(1)
    assert all(v == 1.0 for v in m1.values())
    m4 = metrics_from_rank(4)
    assert m4["MRR"] == 0.25 and m4["NDCG@5"] == 1 / math.log2(5)
    assert round(m4["NDCG@5"], 4) == 0.4307
    m6 = metrics_from_rank(6)
    assert m6["HIT@5"] == 0.0 and m6["HIT@10"] == 1.0
    with pytest.raises(ValueError):
        metrics_from_rank(0)


def test_rank_matches_sort_oracle_on_10000_vectors():
    rng = np.random.default_rng(0)
    for trial in range(10_000):
        # coarse rounding forces plenty of ties
        scores = np.round(rng.standard_normal(100), int(rng.integers(0, 3)))
        truth = int(rng.integers(100))
        assert rank_ground_truth(scores, truth) == sort_rank(scores.tolist(), truth), trial


@given(st.lists(st.integers(1, 100), min_size=1, max_size=200))
def test_report_invariants(ranks):
    rep = report_from_ranks(np.array(ranks))
    v = rep.values
    assert all(0.0 <= x <= 1.0 for x in v.values())
    assert v["HIT@10"] >= v["HIT@5"]
    assert v["NDCG@5"] <= v["HIT@5"] + 1e-15 and v["NDCG@10"] <= v["HIT@10"] + 1e-15
    per_user = [metrics_from_rank(r) for r in ranks]
    for key in v:
        assert v[key] == pytest.approx(sum(m[key] for m in per_user) / len(ranks), abs=1e-12)


def tiny_split(users=300, items=400, seed=0):
    rng = np.random.default_rng(seed)
    seqs = [list(rng.choice(items, size=6, replace=False)) for _ in range(users)]
    ds = Dataset([f"u{u}" for u in range(users)], [f"i{i}" for i in range(items)], seqs)
    return leave_one_out_split(ds)


class TableScorer:
    """Scores are a fixed function of the candidate index only."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)

    def score_candidates(self, contexts, candidates):
        return self.table[candidates]


class Oracle:
    def __init__(self, split, target):
        self.truth = {tuple(split.context(u, target)): split.target(u, target) for u in range(len(split.train))}

    def score_candidates(self, contexts, candidates):
        return np.array([[1.0 if c == self.truth[tuple(ctx)] else 0.0 for c in row]
                         for ctx, row in zip(contexts, candidates)])


def test_perfect_model_scores_one():
    sp = tiny_split()
    rep = evaluate(Oracle(sp, "test"), sp, "test")
    assert all(v == 1.0 for v in rep.values.values()) and rep.num_users == 300


def test_constant_model_ties_in_favour_of_truth():
    sp = tiny_split()
    rep = evaluate(TableScorer(np.zeros(400)), sp, "valid")
    assert rep["MRR"] == 1.0


def test_strictly_increasing_transform_is_invariant():
    sp = tiny_split()
    table = np.random.default_rng(1).standard_normal(400)
    a = evaluate(TableScorer(table), sp, "test", seed=3)
    b = evaluate(TableScorer(np.exp(2 * table) + 5), sp, "test", seed=3)
    assert a.values == b.values


def test_random_scores_give_uniform_rank_means():
    sp = tiny_split(users=2000, items=400, seed=2)
    rep = evaluate(TableScorer(np.random.default_rng(5).standard_normal(400)), sp, "test", seed=4)
    assert abs(rep["HIT@10"] - 0.10) < 3 * math.sqrt(0.09 / 2000)
    assert abs(rep["MRR"] - uniform_rank_mrr(100)) < 0.02


def test_full_ranking_option():
    sp = tiny_split(users=20, items=50)
    rep = evaluate(Oracle(sp, "test"), sp, "test", full_ranking=True)
    assert rep["MRR"] == 1.0
