"""Causal self-attention sequential recommender and its binary log-loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import torch
from torch import nn

from . import nn as F
from .nn import Linear

LOG_CLAMP = 1e-12


@dataclass
class ModelConfig:
    hidden_dim: int = 72
    num_blocks: int = 2
    num_heads: int = 2
    max_seq_len: int = 50
    dropout: float = 0.0

    def __post_init__(self) -> None:
        if self.num_heads < 1 or self.hidden_dim % self.num_heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


class LayerNorm(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim, dtype=F.DTYPE))
        self.bias = nn.Parameter(torch.zeros(dim, dtype=F.DTYPE))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.layer_norm(x, self.weight, self.bias)


class Block(nn.Module):
    """Multi-head causal attention -> add & norm -> point-wise FFN -> add & norm."""

    def __init__(self, cfg: ModelConfig, generator: torch.Generator):
        super().__init__()
        h = cfg.hidden_dim
        self.heads = cfg.num_heads
        self.dropout = cfg.dropout
        self.q = Linear(h, h, generator)
        self.k = Linear(h, h, generator)
        self.v = Linear(h, h, generator)
        self.o = Linear(h, h, generator)
        self.ln1 = LayerNorm(h)
        self.ff1 = Linear(h, h, generator)
        self.ff2 = Linear(h, h, generator)
        self.ln2 = LayerNorm(h)

    def _drop(self, x: torch.Tensor) -> torch.Tensor:
        if self.training and self.dropout > 0:
            return torch.nn.functional.dropout(x, self.dropout, training=True)
        return x

    def forward(self, x: torch.Tensor, allowed: torch.Tensor):
        B, T, H = x.shape
        d = H // self.heads

        def split(t):
            return t.reshape(B, T, self.heads, d).transpose(1, 2)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        logits = F.matmul(q, k.transpose(-1, -2)) / math.sqrt(d)
        attn = F.softmax(logits, allowed.unsqueeze(1))
        ctx = F.matmul(self._drop(attn), v).transpose(1, 2).reshape(B, T, H)
        x = self.ln1(x + self._drop(self.o(ctx)))
        ff = self.ff2(F.relu(self.ff1(x)))
        x = self.ln2(x + self._drop(ff))
        return x, attn


class SASRec(nn.Module):
    """Positions are indexed from the right end of the (left-padded) input, so
    the most recent item always sits at position 0 and leading pad columns can
    be dropped without changing any valid hidden state."""

    def __init__(self, cfg: ModelConfig, generator: torch.Generator):
        super().__init__()
        self.cfg = cfg
        self.pos_emb = F.embedding_parameter(cfg.max_seq_len, cfg.hidden_dim, generator)
        self.input_norm = LayerNorm(cfg.hidden_dim)
        self.blocks = nn.ModuleList(Block(cfg, generator) for _ in range(cfg.num_blocks))
        self.last_attention: List[torch.Tensor] = []

    def forward(self, x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        """``x``: (B, T, H) item representations; ``valid``: (B, T) bool."""
        B, T, H = x.shape
        if T > self.cfg.max_seq_len:
            raise ValueError(f"sequence length {T} exceeds max_seq_len {self.cfg.max_seq_len}")
        if H != self.cfg.hidden_dim:
            raise ValueError(f"representation width {H} != hidden_dim {self.cfg.hidden_dim}")
        positions = torch.arange(T - 1, -1, -1)
        keep = valid.unsqueeze(-1).to(x.dtype)
        h = self.input_norm(x + F.embedding_lookup(self.pos_emb, positions)) * keep
        causal = torch.tril(torch.ones(T, T, dtype=torch.bool))
        allowed = causal.unsqueeze(0) & valid.unsqueeze(1)
        # pad queries see only themselves so every softmax row is defined
        allowed = allowed | (torch.eye(T, dtype=torch.bool).unsqueeze(0) & ~valid.unsqueeze(-1))
        self.last_attention = []
        for block in self.blocks:
            h, attn = block(h, allowed)
            h = h * keep
            self.last_attention.append(attn.detach())
        return h


def score(hidden: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
    """Next-item probability sigmoid(hidden . candidate)."""
    if hidden.shape[-1] != candidate.shape[-1]:
        raise ValueError("score: dimension mismatch")
    return F.sigmoid(F.reduce_sum(hidden * candidate, dim=-1))


def recom_loss(pos_logits: torch.Tensor, neg_logits: torch.Tensor, valid: torch.Tensor,
               lam: float = 0.0, reg_params: Sequence[torch.Tensor] = ()) -> torch.Tensor:
    """Mean binary log-loss over valid (position, candidate) pairs plus
    ``lam`` times the summed squares of ``reg_params``."""
    n = int(valid.sum())
    if n == 0:
        raise ValueError("recom_loss: no valid positions")
    p_pos = torch.clamp(F.sigmoid(pos_logits), min=LOG_CLAMP)
    p_neg = torch.clamp(1.0 - F.sigmoid(neg_logits), min=LOG_CLAMP)
    m = valid.to(pos_logits.dtype)
    bce = -(torch.log(p_pos) * m).sum() - (torch.log(p_neg) * m).sum()
    loss = bce / (2 * n)
    if lam > 0:
        loss = loss + lam * sum(F.reduce_sum(F.square(p)) for p in reg_params)
    return loss
