from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unirec.diagnostics import (category_histogram, codebook_stats, export_tokens, read_assignments,
                                read_codebooks, read_vectors)


def test_stats_examples():
    codes = np.array([[0, 1], [0, 1], [2, 3], [1, 3]])
    s = codebook_stats(codes, K=4)
    assert s.activation == [3 / 4, 2 / 4]
    assert s.coverage == 3 / 4 and s.duplicate_rate == 1 / 4
    assert s.noncolliding == 2 / 4
    assert "coverage=0.750000" in s.as_lines()


def test_all_distinct_and_all_shared():
    assert codebook_stats(np.arange(8).reshape(8, 1), K=8).coverage == 1.0
    s = codebook_stats(np.zeros((5, 3), dtype=int), K=4)
    assert s.activation == [0.25] * 3 and s.coverage == 0.2 and s.noncolliding == 0.0


def test_stats_reject_bad_input():
    with pytest.raises(ValueError):
        codebook_stats(np.array([[4]]), K=4)
    with pytest.raises(ValueError):
        codebook_stats(np.zeros((3, 2), dtype=int), K=4, L=3)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9))
def test_stats_match_hash_set_oracle(seed):
    rng = np.random.default_rng(seed)
    K, L, m = int(rng.integers(1, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 60))
    codes = rng.integers(K, size=(m, L))
    s = codebook_stats(codes, K)
    tuples = [tuple(r) for r in codes.tolist()]
    assert s.activation == [len({t[l] for t in tuples}) / K for l in range(L)]
    assert s.coverage == len(set(tuples)) / m
    assert s.noncolliding == sum(tuples.count(t) == 1 for t in tuples) / m
    assert 0 < s.coverage <= 1 and s.noncolliding <= s.coverage


def test_category_histogram():
    codes = np.array([[0], [0], [0], [1], [1], [2]])
    labels = ["a", "b", "a", "c", "c", "a"]
    h = category_histogram(codes, labels, layer=0, top_n=2)
    assert h.top == [0, 1]
    assert h.rows() == ["0 0 a 2", "0 0 b 1", "0 1 c 2"]
    full = category_histogram(codes, labels, layer=0, top_n=10)
    assert sum(sum(c.values()) for c in full.counts.values()) == 6
    with pytest.raises(ValueError):
        category_histogram(codes, labels[:-1], layer=0)


def test_export_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    books = [rng.standard_normal((4, 3)) * 1e-7 for _ in range(2)]
    ids = ["x", "y", "z"]
    codes = rng.integers(4, size=(3, 2))
    id_rows = rng.standard_normal((3, 2))
    unified = rng.standard_normal((3, 5)) * 1e9
    paths = export_tokens(books, ids, codes, id_rows, unified, tmp_path, labels=["p", "q", "p"])
    assert all(np.array_equal(a, b) for a, b in zip(read_codebooks(paths["codebooks"], 2, 4), books))
    got_ids, got_codes = read_assignments(paths["assignments"])
    assert got_ids == ids and np.array_equal(got_codes, codes)
    assert np.array_equal(read_vectors(paths["id_embeddings"])[1], id_rows)
    assert np.array_equal(read_vectors(paths["unified"], skip=2)[1], unified)
    assert paths["labels"].read_text().splitlines() == ["x\tp", "y\tq", "z\tp"]
