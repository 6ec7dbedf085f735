"""Interaction logs, 5-core filtering, leave-one-out splits and synthetic corpora."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    timestamp: int

    def __post_init__(self) -> None:
        if not self.user_id or not self.item_id:
            raise DataError("user_id and item_id must be nonempty")
        if self.timestamp < 0:
            raise DataError(f"negative timestamp {self.timestamp}")


@dataclass
class Dataset:
    """Dense-indexed users/items with chronologically ordered sequences."""

    user_ids: List[str]
    item_ids: List[str]
    sequences: List[List[int]]
    user_index: Dict[str, int] = field(default_factory=dict)
    item_index: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.user_index:
            self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        if not self.item_index:
            self.item_index = {it: i for i, it in enumerate(self.item_ids)}

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)

    def average_length(self) -> float:
        return sum(len(s) for s in self.sequences) / max(1, len(self.sequences))


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise DataError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.rows)):
            raise DataError("embedding matrix contains non-finite values")

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass
class SplitAssignment:
    """Per-user leave-one-out split over dense item indices."""

    train: List[List[int]]
    valid: List[int]
    test: List[int]
    num_items: int

    def history(self, user: int) -> List[int]:
        return self.train[user] + [self.valid[user], self.test[user]]

    def context(self, user: int, target: str) -> List[int]:
        if target == "valid":
            return list(self.train[user])
        if target == "test":
            return self.train[user] + [self.valid[user]]
        raise ValueError(f"unknown split {target!r}")

    def target(self, user: int, target: str) -> int:
        if target == "valid":
            return self.valid[user]
        if target == "test":
            return self.test[user]
        raise ValueError(f"unknown split {target!r}")


def load_interactions(path: str | Path) -> List[InteractionRecord]:
    """Parse a `user\\titem\\ttimestamp` file (no header) in file order."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}: line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
            user, item, ts = parts
            try:
                timestamp = int(ts)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-integer timestamp {ts!r}") from None
            try:
                records.append(InteractionRecord(user, item, timestamp))
            except DataError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    return records


def write_interactions(records: Sequence[InteractionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(f"{r.user_id}\t{r.item_id}\t{r.timestamp}\n")


def five_core_filter(
    records: Sequence[InteractionRecord], core: int = 5, items_too: bool = True
) -> Dataset:
    """Iteratively drop users (and items, unless ``items_too`` is False) with
    fewer than ``core`` interactions until nothing changes.

    User and item indices follow first appearance in ``records``; each sequence
    is sorted by timestamp with ties kept in input order.
    """
    if not records:
        raise DataError("no interaction records")
    kept = list(records)
    while True:
        users = Counter(r.user_id for r in kept)
        items = Counter(r.item_id for r in kept)
        bad_users = {u for u, c in users.items() if c < core}
        bad_items = {i for i, c in items.items() if c < core} if items_too else set()
        if not bad_users and not bad_items:
            break
        kept = [r for r in kept if r.user_id not in bad_users and r.item_id not in bad_items]
    if not kept:
        raise DataError("dataset eliminated by filtering")

    user_ids: List[str] = []
    item_ids: List[str] = []
    uidx: Dict[str, int] = {}
    iidx: Dict[str, int] = {}
    per_user: List[List[Tuple[int, int, int]]] = []
    for order, r in enumerate(kept):
        if r.user_id not in uidx:
            uidx[r.user_id] = len(user_ids)
            user_ids.append(r.user_id)
            per_user.append([])
        if r.item_id not in iidx:
            iidx[r.item_id] = len(item_ids)
            item_ids.append(r.item_id)
        per_user[uidx[r.user_id]].append((r.timestamp, order, iidx[r.item_id]))
    sequences = [[it for _, _, it in sorted(rows)] for rows in per_user]
    return Dataset(user_ids, item_ids, sequences, uidx, iidx)


def leave_one_out_split(dataset: Dataset) -> SplitAssignment:
    train, valid, test = [], [], []
    for u, seq in enumerate(dataset.sequences):
        if len(seq) < 3:
            raise DataError(f"user {dataset.user_ids[u]!r} has {len(seq)} interactions; need at least 3")
        train.append(list(seq[:-2]))
        valid.append(seq[-2])
        test.append(seq[-1])
    return SplitAssignment(train, valid, test, dataset.num_items)


def load_item_embeddings(path: str | Path, dataset: Dataset) -> EmbeddingMatrix:
    """Read the `m dim` header format and align rows to the dataset's item indices."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: header must be 'm dim'")
        try:
            m, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataError(f"{path}: header must be two integers") from None
        found: Dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise DataError(f"{path}: line {lineno}: expected {dim} values, got {len(parts) - 1}")
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: unparseable value") from None
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}: line {lineno}: non-finite value for item {parts[0]!r}")
            found[parts[0]] = vec
    if len(found) != m:
        raise DataError(f"{path}: header declares {m} rows, found {len(found)}")
    rows = np.empty((dataset.num_items, dim), dtype=np.float64)
    for idx, item_id in enumerate(dataset.item_ids):
        if item_id not in found:
            raise DataError(f"{path}: missing embedding for item {item_id!r}")
        rows[idx] = found[item_id]
    return EmbeddingMatrix(rows)


def write_item_embeddings(item_ids: Sequence[str], rows: np.ndarray, path: str | Path) -> None:
    rows = np.asarray(rows, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{rows.shape[0]} {rows.shape[1]}\n")
        for item_id, row in zip(item_ids, rows):
            fh.write(item_id + " " + " ".join(f"{v:.17g}" for v in row) + "\n")


def synthesize_embeddings(
    num_items: int, num_clusters: int, dim: int = 768, noise_scale: float = 0.05, seed: int = 0
) -> EmbeddingMatrix:
    """Unit-norm cluster centroids plus isotropic Gaussian noise.

    Item ``i`` belongs to cluster ``i % num_clusters``; the labels are kept on
    the returned matrix.
    """
    if num_items < 1 or num_clusters < 1 or num_clusters > num_items:
        raise DataError(f"invalid counts: num_items={num_items}, num_clusters={num_clusters}")
    if dim < 1:
        raise DataError("dim must be >= 1")
    if noise_scale < 0:
        raise DataError("noise_scale must be >= 0")
    rng = np.random.default_rng(seed)
    centroids = rng.standard_normal((num_clusters, dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    labels = np.arange(num_items) % num_clusters
    rows = centroids[labels] + noise_scale * rng.standard_normal((num_items, dim))
    return EmbeddingMatrix(rows, labels)


def sample_eval_candidates(
    user: int, split: SplitAssignment, num_negatives: int = 99, seed: int = 0, target: str = "test"
) -> List[int]:
    """Negatives drawn without replacement from items outside the user's whole
    history, followed by the ground-truth target (last element)."""
    history = np.unique(np.asarray(split.history(user), dtype=np.int64))
    pool = np.setdiff1d(np.arange(split.num_items, dtype=np.int64), history, assume_unique=True)
    if pool.size < num_negatives:
        raise DataError(
            f"catalog too small: user {user} has {pool.size} non-interacted items, need {num_negatives}"
        )
    rng = np.random.default_rng([seed, user, 0 if target == "valid" else 1])
    negatives = rng.choice(pool, size=num_negatives, replace=False)
    return [int(i) for i in negatives] + [split.target(user, target)]


@dataclass
class SyntheticCorpus:
    records: List[InteractionRecord]
    item_ids: List[str]
    embeddings: EmbeddingMatrix

    @property
    def labels(self) -> np.ndarray:
        return self.embeddings.labels


def generate_corpus(
    num_items: int = 500,
    num_users: int = 2000,
    num_clusters: int = 20,
    seq_len_mean: float = 10.0,
    noise: float = 0.05,
    seed: int = 0,
    dim: int = 768,
    follow_prob: float = 0.5,
    clusters_per_user: int = 2,
    structured: bool = True,
) -> SyntheticCorpus:
    """Desk-scale interaction log over clustered item content.

    Every item has one fixed successor drawn without regard to content. A user
    prefers ``clusters_per_user`` clusters; each next item is the successor of
    the current one with probability ``follow_prob``, otherwise a fresh item from
    a preferred cluster. Shared structure is therefore visible to content
    tokens while successor links are only learnable per item. With
    ``structured=False`` sequences are uniform draws without replacement.

    Sequence lengths are ``3 + Poisson(seq_len_mean - 3)`` capped at the
    catalog size; items never repeat within a user.
    """
    if num_users < 1:
        raise DataError("num_users must be >= 1")
    if seq_len_mean < 3:
        raise DataError("seq_len_mean must be >= 3")
    if not 0.0 <= follow_prob <= 1.0:
        raise DataError("follow_prob must lie in [0, 1]")
    clusters_per_user = min(clusters_per_user, num_clusters)
    emb = synthesize_embeddings(num_items, num_clusters, dim, noise, seed)
    rng = np.random.default_rng([seed, 1])
    labels = emb.labels
    members = [np.flatnonzero(labels == c) for c in range(num_clusters)]
    successor = rng.permutation(num_items)
    item_ids = [f"i{i}" for i in range(num_items)]
    all_items = list(range(num_items))

    records: List[InteractionRecord] = []
    for u in range(num_users):
        length = min(num_items, 3 + int(rng.poisson(seq_len_mean - 3)))
        if structured:
            prefs = rng.choice(num_clusters, size=clusters_per_user, replace=False)
            pool = [int(i) for c in prefs for i in members[c]]
        else:
            pool = all_items
        seen: set = set()
        seq: List[int] = []
        current = -1
        while len(seq) < length:
            if structured and current >= 0 and rng.random() < follow_prob and successor[current] not in seen:
                nxt = int(successor[current])
            else:
                choices = pool if len(seen.intersection(pool)) < len(pool) else all_items
                nxt = choices[rng.integers(len(choices))]
                while nxt in seen:
                    nxt = choices[rng.integers(len(choices))]
            seq.append(nxt)
            seen.add(nxt)
            current = nxt
        base = u * 1000
        records.extend(InteractionRecord(f"u{u}", item_ids[i], base + t) for t, i in enumerate(seq))
    return SyntheticCorpus(records, item_ids, emb)


def write_corpus(corpus: SyntheticCorpus, directory: str | Path) -> Dict[str, Path]:
    """Write interactions.tsv, embeddings.txt and clusters.tsv into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "interactions": out / "interactions.tsv",
        "embeddings": out / "embeddings.txt",
        "clusters": out / "clusters.tsv",
    }
    write_interactions(corpus.records, paths["interactions"])
    write_item_embeddings(corpus.item_ids, corpus.embeddings.rows, paths["embeddings"])
    write_labels(corpus.item_ids, corpus.labels, paths["clusters"])
    return paths


def write_labels(item_ids: Sequence[str], labels: Sequence, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item_id, lab in zip(item_ids, labels):
            fh.write(f"{item_id}\t{lab}\n")


def load_labels(path: str | Path, dataset: Dataset) -> np.ndarray:
    """Read `item_id\\tlabel` rows; returns labels aligned to dataset items."""
    found: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}: line {lineno}: expected item_id<TAB>label")
            found[parts[0]] = parts[1]
    missing = [i for i in dataset.item_ids if i not in found]
    if missing:
        raise DataError(f"{path}: missing label for item {missing[0]!r}")
    return np.array([found[i] for i in dataset.item_ids], dtype=object)


def align_embeddings(corpus: SyntheticCorpus, dataset: Dataset) -> EmbeddingMatrix:
    """Restrict a synthetic corpus' embeddings to the items that survived filtering."""
    pos = {item_id: i for i, item_id in enumerate(corpus.item_ids)}
    idx = np.array([pos[i] for i in dataset.item_ids], dtype=np.int64)
    return EmbeddingMatrix(corpus.embeddings.rows[idx], corpus.labels[idx])

