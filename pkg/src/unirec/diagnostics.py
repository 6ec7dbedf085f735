"""Codebook usage statistics, per-category code histograms and token exports."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np


@dataclass
class CodebookStats:
    activation: List[float]   # per layer: distinct codes used / K
    coverage: float           # distinct full tuples / m
    noncolliding: float       # items whose tuple no other item shares / m

    @property
    def duplicate_rate(self) -> float:
        return 1.0 - self.coverage

    def as_lines(self) -> str:
        lines = [f"activation_layer{l + 1}={a:.6f}" for l, a in enumerate(self.activation)]
        lines += [f"coverage={self.coverage:.6f}", f"duplicate_rate={self.duplicate_rate:.6f}",
                  f"noncolliding_fraction={self.noncolliding:.6f}"]
        return "\n".join(lines) + "\n"


def codebook_stats(assignments: np.ndarray, K: int, L: Optional[int] = None,
                   m: Optional[int] = None) -> CodebookStats:
    codes = np.asarray(assignments, dtype=np.int64)
    m = codes.shape[0] if m is None else m
    L = codes.shape[1] if L is None else L
    if codes.shape != (m, L):
        raise ValueError(f"assignments shape {codes.shape} != ({m}, {L})")
    if codes.size and (codes.min() < 0 or codes.max() >= K):
        raise ValueError(f"codes must lie in [0, {K})")
    activation = [np.unique(codes[:, l]).size / K for l in range(L)]
    _, counts = np.unique(codes, axis=0, return_counts=True)
    return CodebookStats(activation, counts.size / m, float(counts[counts == 1].sum()) / m)


@dataclass
class CategoryHistogram:
    layer: int
    counts: Dict[int, Counter]   # code -> category -> count
    top: List[int]               # codes with the most items, descending

    def rows(self) -> List[str]:
        """``layer code category count`` for the top codes."""
        out = []
        for code in self.top:
            for cat, n in sorted(self.counts[code].items(), key=lambda kv: (-kv[1], str(kv[0]))):
                out.append(f"{self.layer} {code} {cat} {n}")
        return out


def category_histogram(assignments: np.ndarray, labels: Sequence, layer: int,
                       top_n: int = 3) -> CategoryHistogram:
    """Category breakdown of the ``top_n`` most populated codes of ``layer`` (0-based)."""
    codes = np.asarray(assignments)[:, layer]
    if len(labels) != codes.shape[0]:
        raise ValueError("labels must cover every item")
    counts: Dict[int, Counter] = {}
    for code, lab in zip(codes.tolist(), labels):
        counts.setdefault(code, Counter())[lab] += 1
    order = sorted(counts, key=lambda c: (-sum(counts[c].values()), c))
    return CategoryHistogram(layer, counts, order[:top_n])


def write_rows(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(row + "\n")


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def export_tokens(codebooks: Sequence[np.ndarray], item_ids: Sequence[str], codes: np.ndarray,
                  id_rows: Optional[np.ndarray], unified: Optional[np.ndarray], directory: str | Path,
                  labels: Optional[Sequence] = None) -> Dict[str, Path]:
    """Write whitespace-separated token files:

    * ``codebooks.txt``   ``layer k v1 .. vD'`` (layer and k 0-based)
    * ``assignments.txt`` ``item_id c1 .. cL``
    * ``id_embeddings.txt`` ``item_id v1 .. vD``
    * ``unified.txt``     ``item_id c1 .. cL u1 .. u_{D'+D}``
    * ``labels.tsv``      ``item_id<TAB>label``
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    paths["codebooks"] = out / "codebooks.txt"
    write_rows(paths["codebooks"], (f"{l} {k} {_fmt(vec)}" for l, book in enumerate(codebooks)
                                    for k, vec in enumerate(np.asarray(book))))
    codes = np.asarray(codes, dtype=np.int64)
    paths["assignments"] = out / "assignments.txt"
    write_rows(paths["assignments"], (f"{i} " + " ".join(map(str, c)) for i, c in zip(item_ids, codes)))
    if id_rows is not None:
        paths["id_embeddings"] = out / "id_embeddings.txt"
        write_rows(paths["id_embeddings"], (f"{i} {_fmt(r)}" for i, r in zip(item_ids, id_rows)))
    if unified is not None:
        paths["unified"] = out / "unified.txt"
        write_rows(paths["unified"], (f"{i} " + " ".join(map(str, c)) + f" {_fmt(r)}"
                                      for i, c, r in zip(item_ids, codes, unified)))
    if labels is not None:
        paths["labels"] = out / "labels.tsv"
        write_rows(paths["labels"], (f"{i}\t{lab}" for i, lab in zip(item_ids, labels)))
    return paths


def read_codebooks(path: str | Path, L: int, K: int) -> List[np.ndarray]:
    rows = np.loadtxt(path, ndmin=2)
    books = [np.zeros((K, rows.shape[1] - 2)) for _ in range(L)]
    for row in rows:
        books[int(row[0])][int(row[1])] = row[2:]
    return books


def read_assignments(path: str | Path):
    ids, codes = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            ids.append(parts[0])
            codes.append([int(c) for c in parts[1:]])
    return ids, np.array(codes, dtype=np.int64)


def read_vectors(path: str | Path, skip: int = 0):
    """``item_id`` followed by ``skip`` integer columns and then reals."""
    ids, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1 + skip:]])
    return ids, np.array(rows, dtype=np.float64)
