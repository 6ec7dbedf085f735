"""Unified item representation [semantic embedding, low-dim ID embedding] and token budgets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from . import nn as F

ID_ONLY = "id_only"
SEMANTIC_ONLY = "semantic_only"
UNIFIED = "unified"
MODES = (ID_ONLY, SEMANTIC_ONLY, UNIFIED)

# width of the ID-only baseline table
ID_BASELINE_DIM = 64


class IDEmbeddingTable(nn.Module):
    """m x D item embeddings; D = 0 means no table."""

    def __init__(self, num_items: int, dim: int, generator: torch.Generator):
        super().__init__()
        if dim < 0:
            raise ValueError("ID dimension must be >= 0")
        self.num_items = num_items
        self.dim = dim
        self.weight = F.embedding_parameter(num_items, dim, generator) if dim > 0 else None

    def forward(self, items: torch.Tensor) -> torch.Tensor:
        if self.weight is None:
            items = torch.as_tensor(items, dtype=torch.long)
            if items.numel() and (int(items.min()) < 0 or int(items.max()) >= self.num_items):
                raise IndexError(f"item index out of range [0, {self.num_items})")
            return torch.zeros(*items.shape, 0, dtype=F.DTYPE)
        return F.embedding_lookup(self.weight, items)


def unify(z_hat: Optional[torch.Tensor], items: torch.Tensor, table: Optional[IDEmbeddingTable],
          mode: str = UNIFIED) -> torch.Tensor:
    """Item representation for ``mode``: [z_hat, e_i], e_i alone, or z_hat alone."""
    if mode == SEMANTIC_ONLY:
        if table is not None:
            table(items)  # range check only
        return z_hat
    if mode == UNIFIED and table is None:
        return z_hat  # D = 0: the sweep's zero-width ID part
    if table is None:
        raise ValueError(f"mode {mode!r} needs an ID table")
    ids = table(items)
    if mode == ID_ONLY:
        return ids
    if mode == UNIFIED:
        return F.concat([z_hat, ids])
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class TokenBudget:
    id_size: int
    semantic_size: int
    baseline: int

    @property
    def total(self) -> int:
        return self.id_size + self.semantic_size

    @property
    def reduction(self) -> float:
        """Fraction saved versus an m x 64 ID-only table (0 for the baseline itself)."""
        if self.baseline == 0:
            return 0.0
        return 1.0 - self.total / self.baseline


def token_budget(m: int, D: int, L: int, K: int, D_prime: int) -> TokenBudget:
    if min(m, D, L, K, D_prime) < 0:
        raise ValueError("token_budget arguments must be nonnegative")
    return TokenBudget(m * D, L * K * D_prime, m * ID_BASELINE_DIM)


def budget_for_mode(mode: str, m: int, D: int, L: int, K: int, D_prime: int) -> TokenBudget:
    if mode == ID_ONLY:
        return token_budget(m, ID_BASELINE_DIM, 0, K, D_prime)
    if mode == SEMANTIC_ONLY:
        return token_budget(m, 0, L, K, D_prime)
    if mode == UNIFIED:
        return token_budget(m, D, L, K, D_prime)
    raise ValueError(f"unknown mode {mode!r}")
