"""Sampled-candidate ranking evaluation: HIT@k, NDCG@k, MRR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence

import numpy as np

from .data import SplitAssignment, sample_eval_candidates


class Scorer(Protocol):
    def score_candidates(self, contexts: Sequence[Sequence[int]], candidates: np.ndarray) -> np.ndarray:
        ...


def rank_ground_truth(scores: Sequence[float], truth: int) -> int:
    """1 + number of candidates scoring strictly above the truth (ties favour the truth).

    ``truth`` is a position into ``scores``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= truth < scores.shape[0]:
        raise ValueError("ground truth is not among the candidates")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return 1 + int(np.sum(scores > scores[truth]))


def metrics_from_rank(rank: int, ks: Sequence[int] = (5, 10)) -> Dict[str, float]:
    if rank < 1:
        raise ValueError("rank must be >= 1")
    out: Dict[str, float] = {}
    for k in ks:
        hit = rank <= k
        out[f"HIT@{k}"] = 1.0 if hit else 0.0
        out[f"NDCG@{k}"] = 1.0 / math.log2(rank + 1) if hit else 0.0
    out["MRR"] = 1.0 / rank
    return out


@dataclass
class MetricReport:
    values: Dict[str, float]
    num_users: int
    ranks: Optional[np.ndarray] = field(default=None, repr=False)

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def keys(self) -> List[str]:
        return list(self.values)

    def as_lines(self) -> str:
        """Machine-readable ``key=value`` lines."""
        lines = [f"users={self.num_users}"]
        lines += [f"{k}={v:.10f}" for k, v in self.values.items()]
        return "\n".join(lines) + "\n"

    def as_table(self) -> str:
        keys = self.keys()
        head = " | ".join(f"{k:>8}" for k in keys)
        row = " | ".join(f"{self.values[k]:>8.4f}" for k in keys)
        return f"{head}\n{'-' * len(head)}\n{row}\n"


def report_from_ranks(ranks: np.ndarray, ks: Sequence[int] = (5, 10)) -> MetricReport:
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("no users to evaluate")
    values: Dict[str, float] = {}
    for k in ks:
        hit = ranks <= k
        values[f"HIT@{k}"] = float(hit.mean())
        values[f"NDCG@{k}"] = float(np.where(hit, 1.0 / np.log2(ranks + 1.0), 0.0).mean())
    values["MRR"] = float((1.0 / ranks).mean())
    return MetricReport(values, int(ranks.size), ranks)


def candidate_matrix(split: SplitAssignment, target: str, num_negatives: int = 99,
                     seed: int = 0, users: Optional[Sequence[int]] = None) -> np.ndarray:
    """(U, num_negatives + 1) candidates per user, ground truth in the last column."""
    users = range(len(split.train)) if users is None else users
    return np.array([sample_eval_candidates(u, split, num_negatives, seed, target) for u in users],
                    dtype=np.int64)


def evaluate(model: Scorer, split: SplitAssignment, target: str = "test", num_negatives: int = 99,
             seed: int = 0, ks: Sequence[int] = (5, 10), full_ranking: bool = False) -> MetricReport:
    """Rank each user's held-out item against sampled negatives.

    The context for ``valid`` is the training prefix, for ``test`` the prefix
    plus the validation item. ``full_ranking`` scores the whole catalog
    instead of a sample (small catalogs only).
    """
    users = list(range(len(split.train)))
    contexts = [split.context(u, target) for u in users]
    if full_ranking:
        ranks = _full_ranks(model, split, target, contexts)
        return report_from_ranks(ranks, ks)
    cands = candidate_matrix(split, target, num_negatives, seed, users)
    scores = model.score_candidates(contexts, cands)
    truth = scores[:, -1:]
    ranks = 1 + (scores > truth).sum(axis=1)
    return report_from_ranks(ranks, ks)


def _full_ranks(model: Scorer, split: SplitAssignment, target: str, contexts) -> np.ndarray:
    ranks = np.empty(len(contexts), dtype=np.int64)
    everything = np.arange(split.num_items)
    for u, ctx in enumerate(contexts):
        history = set(split.history(u))
        truth = split.target(u, target)
        others = [i for i in everything if i not in history]
        cands = np.array([others + [truth]], dtype=np.int64)
        s = model.score_candidates([ctx], cands)[0]
        ranks[u] = rank_ground_truth(s, len(others))
    return ranks
