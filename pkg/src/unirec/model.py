"""The joint model: RQ-VAE semantic tokens + ID table feeding the sequential recommender."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from . import nn as F
from .nn import DTYPE, seeded_generator
from .quantizer import RQVAE, DistancePolicy, EncoderConfig
from .recommender import ModelConfig, SASRec
from .tokenizer import ID_ONLY, MODES, SEMANTIC_ONLY, UNIFIED, IDEmbeddingTable, unify


@dataclass
class QuantizerConfig:
    num_layers: int = 3
    codebook_size: int = 256
    latent_dim: int = 64
    beta: float = 0.25
    policy: str = "hybrid"
    hidden: Tuple[int, ...] = (512, 256, 128)


@dataclass
class TokenizerConfig:
    mode: str = UNIFIED
    id_dim: int = 8

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")
        if self.id_dim < 0:
            raise ValueError("id_dim must be >= 0")


@dataclass
class RecommenderSettings:
    num_blocks: int = 2
    num_heads: int = 2
    max_seq_len: int = 50
    dropout: float = 0.0


def representation_width(q: QuantizerConfig, t: TokenizerConfig) -> int:
    if t.mode == UNIFIED:
        return q.latent_dim + t.id_dim
    return q.latent_dim


class UnifiedRecommender(nn.Module):
    """Item ``i`` is represented per the tokenizer mode; index ``num_items`` is padding.

    The RQ-VAE exists in every mode so that parameter initialisation consumes
    the generator identically; in ID-only mode it is simply never used.
    """

    def __init__(self, features: np.ndarray, quantizer: QuantizerConfig, tokenizer: TokenizerConfig,
                 settings: RecommenderSettings, seed: int):
        super().__init__()
        self.features = torch.as_tensor(np.asarray(features), dtype=DTYPE)
        self.num_items = self.features.shape[0]
        self.qcfg = quantizer
        self.tcfg = tokenizer
        self.mode = tokenizer.mode
        g = seeded_generator(seed)
        enc = EncoderConfig(self.features.shape[1], tuple(quantizer.hidden), quantizer.latent_dim)
        policy = DistancePolicy.named(quantizer.policy, quantizer.num_layers)
        self.rqvae = RQVAE(enc, quantizer.num_layers, quantizer.codebook_size, policy, quantizer.beta, g)
        id_dim = {ID_ONLY: quantizer.latent_dim, SEMANTIC_ONLY: 0, UNIFIED: tokenizer.id_dim}[self.mode]
        self.id_table = IDEmbeddingTable(self.num_items, id_dim, g) if id_dim > 0 else None
        self.hidden_dim = representation_width(quantizer, tokenizer)
        self.mcfg = ModelConfig(self.hidden_dim, settings.num_blocks, settings.num_heads,
                                settings.max_seq_len, settings.dropout)
        self.recommender = SASRec(self.mcfg, g)

    @property
    def uses_semantic(self) -> bool:
        return self.mode != ID_ONLY

    def parameter_groups(self) -> dict:
        groups = {
            "encoder": list(self.rqvae.encoder.parameters()),
            "decoder": list(self.rqvae.decoder.parameters()),
            "codebooks": list(self.rqvae.codebooks.parameters()),
            "positional": [self.recommender.pos_emb],
            "recommender": [p for n, p in self.recommender.named_parameters() if n != "pos_emb"],
        }
        if self.id_table is not None:
            groups["id_table"] = [self.id_table.weight]
        return groups

    def regularized(self) -> List[torch.Tensor]:
        """Embedding tables subject to the L2 penalty."""
        regs = [self.recommender.pos_emb]
        if self.id_table is not None:
            regs.append(self.id_table.weight)
        return regs

    def item_representations(self, items: torch.Tensor):
        """Representations of ``items`` plus per-item RQ-VAE and reconstruction
        losses (zeros in ID-only mode)."""
        items = torch.as_tensor(items, dtype=torch.long)
        zeros = torch.zeros(items.shape[0], dtype=DTYPE)
        if not self.uses_semantic:
            return unify(None, items, self.id_table, self.mode), zeros, zeros, None
        x = F.embedding_lookup(self.features, items)
        z_st, q, rec = self.rqvae(x)
        return unify(z_st, items, self.id_table, self.mode), q.rqvae_loss, rec, q

    @torch.no_grad()
    def catalog(self) -> Tuple[torch.Tensor, np.ndarray]:
        """Representations for all items and their (m, L) code tuples."""
        items = torch.arange(self.num_items)
        reprs, _, _, q = self.item_representations(items)
        codes = q.codes.numpy() if q is not None else np.zeros((self.num_items, 0), dtype=np.int64)
        return reprs.detach(), codes

    def hidden(self, item_matrix: torch.Tensor, reprs: torch.Tensor) -> torch.Tensor:
        """Hidden states for a left-padded (B, T) index matrix; ``reprs`` has
        one row per item plus a trailing pad row."""
        valid = item_matrix != self.num_items
        x = F.embedding_lookup(reprs, item_matrix)
        return self.recommender(x, valid)

    def with_pad(self, reprs: torch.Tensor) -> torch.Tensor:
        return torch.cat([reprs, torch.zeros(1, reprs.shape[1], dtype=reprs.dtype)], dim=0)

    @torch.no_grad()
    def score_candidates(self, contexts: Sequence[Sequence[int]], candidates: np.ndarray,
                         batch_size: int = 512) -> np.ndarray:
        """Logits hidden_last . repr(candidate); ranking-equivalent to the
        sigmoid probabilities without their saturation ties."""
        was_training = self.training
        self.eval()
        reprs, _ = self.catalog()
        table = self.with_pad(reprs)
        out = np.empty(candidates.shape, dtype=np.float64)
        T = self.mcfg.max_seq_len
        for start in range(0, len(contexts), batch_size):
            chunk = contexts[start:start + batch_size]
            width = min(T, max(len(c) for c in chunk))
            mat = left_pad(chunk, width, self.num_items)
            h = self.hidden(torch.from_numpy(mat), table)[:, -1, :]
            cand = torch.from_numpy(np.asarray(candidates[start:start + batch_size], dtype=np.int64))
            out[start:start + len(chunk)] = torch.einsum("bh,bch->bc", h, table[cand]).numpy()
        self.train(was_training)
        return out


def left_pad(seqs: Sequence[Sequence[int]], width: int, pad: int) -> np.ndarray:
    mat = np.full((len(seqs), width), pad, dtype=np.int64)
    for r, s in enumerate(seqs):
        s = list(s)[-width:]
        if s:
            mat[r, width - len(s):] = s
    return mat
