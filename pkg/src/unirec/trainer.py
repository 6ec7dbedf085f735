"""Joint end-to-end optimisation of recommendation, RQ-VAE and reconstruction losses."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import torch

from . import nn as F
from .data import SplitAssignment
from .evaluator import candidate_matrix, report_from_ranks
from .model import (QuantizerConfig, RecommenderSettings, TokenizerConfig, UnifiedRecommender,
                    left_pad)
from .nn import Adam, assign_parameters, parameter_dict
from .recommender import recom_loss

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 256
    max_epochs: int = 30
    patience: int = 10
    lam: float = 0.0
    seed: int = 0
    warmup_epochs: int = 0

    def __post_init__(self) -> None:
        if self.lr < 0 or self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("lr must be >= 0; batch_size, patience >= 1; max_epochs >= 0")


@dataclass
class LossTerms:
    recom: float
    rqvae: float
    recon: float

    @property
    def total(self) -> float:
        return self.recom + self.rqvae + self.recon


@dataclass
class EpochRecord:
    epoch: int
    losses: LossTerms
    valid: Dict[str, float]


@dataclass
class TrainReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    initial_valid: Optional[Dict[str, float]] = None
    best_epoch: int = 0

    def lines(self) -> str:
        """``epoch L_recom L_rqvae L_recon total HIT@10 NDCG@10 MRR`` per epoch; epoch 0
        is the initialised model (no loss yet, written as nan)."""
        rows = ["epoch L_recom L_rqvae L_recon total HIT@10 NDCG@10 MRR"]
        if self.initial_valid is not None:
            v = self.initial_valid
            rows.append(f"0 nan nan nan nan {v['HIT@10']:.10f} {v['NDCG@10']:.10f} {v['MRR']:.10f}")
        for r in self.epochs:
            l, v = r.losses, r.valid
            rows.append(f"{r.epoch} {l.recom:.10f} {l.rqvae:.10f} {l.recon:.10f} {l.total:.10f} "
                        f"{v['HIT@10']:.10f} {v['NDCG@10']:.10f} {v['MRR']:.10f}")
        return "\n".join(rows) + "\n"


@dataclass
class SequenceBatch:
    inputs: torch.Tensor     # (B, T) item indices, pad = num_items
    targets: torch.Tensor    # (B, T)
    negatives: torch.Tensor  # (B, T)
    valid: torch.Tensor      # (B, T) bool


class TrainingData:
    """Left-padded shifted sequences (input t predicts item t+1) for every user."""

    def __init__(self, split: SplitAssignment, max_seq_len: int):
        self.split = split
        self.num_items = split.num_items
        seqs = [s[-(max_seq_len + 1):] for s in split.train]
        self.inputs = left_pad([s[:-1] for s in seqs], max_seq_len, self.num_items)
        self.targets = left_pad([s[1:] for s in seqs], max_seq_len, self.num_items)
        self.valid = self.inputs != self.num_items
        self.histories = [np.unique(split.history(u)) for u in range(len(split.train))]

    @property
    def num_users(self) -> int:
        return self.inputs.shape[0]

    def negatives(self, seed: int, epoch: int) -> np.ndarray:
        """One uniform non-history item per valid position, fixed by (seed, epoch)."""
        rng = np.random.default_rng([seed, epoch, 0])
        neg = np.full(self.inputs.shape, self.num_items, dtype=np.int64)
        for u in range(self.num_users):
            pos = np.flatnonzero(self.valid[u])
            if pos.size == 0:
                continue
            hist = self.histories[u]
            draw = rng.integers(self.num_items, size=pos.size)
            bad = np.isin(draw, hist)
            while bad.any():
                draw[bad] = rng.integers(self.num_items, size=int(bad.sum()))
                bad = np.isin(draw, hist)
            neg[u, pos] = draw
        return neg

    def batches(self, seed: int, epoch: int, batch_size: int) -> List[SequenceBatch]:
        order = np.random.default_rng([seed, epoch, 1]).permutation(self.num_users)
        neg = self.negatives(seed, epoch)
        out = []
        for start in range(0, self.num_users, batch_size):
            idx = order[start:start + batch_size]
            out.append(SequenceBatch(torch.from_numpy(self.inputs[idx]), torch.from_numpy(self.targets[idx]),
                                     torch.from_numpy(neg[idx]), torch.from_numpy(self.valid[idx])))
        return out


def trimmed(batch: SequenceBatch) -> SequenceBatch:
    """Drop leading columns that are padding for every row."""
    width = int(batch.valid.sum(dim=1).max())
    if width == batch.valid.shape[1]:
        return batch
    cut = slice(batch.valid.shape[1] - width, None)
    return SequenceBatch(batch.inputs[:, cut], batch.targets[:, cut], batch.negatives[:, cut],
                         batch.valid[:, cut])


def compute_losses(model: UnifiedRecommender, batch: SequenceBatch, lam: float = 0.0):
    """Forward pass; returns (L_recom, L_rqvae, L_recon) as differentiable scalars."""
    if not bool(batch.valid.any()):
        raise ValueError("batch has no valid positions")
    batch = trimmed(batch)
    v = batch.valid
    needed = torch.cat([batch.inputs[v], batch.targets[v], batch.negatives[v]])
    items, inverse = torch.unique(needed, return_inverse=True)
    reprs, rq, rc, _ = model.item_representations(items)
    local = torch.full((model.num_items + 1,), items.shape[0], dtype=torch.long)
    local[items] = torch.arange(items.shape[0])
    table = model.with_pad(reprs)

    h = model.recommender(F.embedding_lookup(table, local[batch.inputs]), v)
    pos = F.reduce_sum(h * F.embedding_lookup(table, local[batch.targets]), dim=-1)
    neg = F.reduce_sum(h * F.embedding_lookup(table, local[batch.negatives]), dim=-1)
    l_recom = recom_loss(pos, neg, v, lam, model.regularized())

    occ = local[batch.inputs[v]]
    if model.uses_semantic:
        l_rqvae = rq[occ].mean()
        l_recon = rc[occ].mean()
    else:
        l_rqvae = torch.zeros((), dtype=F.DTYPE)
        l_recon = torch.zeros((), dtype=F.DTYPE)
    return l_recom, l_rqvae, l_recon


def train_step(model: UnifiedRecommender, optimizer: Adam, batch: SequenceBatch, lam: float = 0.0,
               where: str = "") -> LossTerms:
    model.train()
    optimizer.zero_grad()
    l_recom, l_rqvae, l_recon = compute_losses(model, batch, lam)
    for name, term in (("L_recom", l_recom), ("L_rqvae", l_rqvae), ("L_recon", l_recon)):
        if not bool(torch.isfinite(term)):
            raise TrainingError(f"non-finite {name} = {float(term)} {where}".strip())
    F.backward(l_recom + l_rqvae + l_recon)
    optimizer.step()
    return LossTerms(l_recom.item(), l_rqvae.item(), l_recon.item())


def seed_items(data: TrainingData, seed: int, batch_size: int, K: int) -> torch.Tensor:
    """Distinct items of the first epoch-1 batch; the full catalog if fewer than K."""
    first = data.batches(seed, 1, batch_size)[0]
    items = torch.unique(torch.cat([first.inputs[first.valid], first.targets[first.valid]]))
    if items.shape[0] < K:
        items = torch.arange(data.num_items)
    return items


def initialize_model(features: np.ndarray, split: SplitAssignment, qcfg: QuantizerConfig,
                     tcfg: TokenizerConfig, settings: RecommenderSettings,
                     tcfg_train: TrainConfig) -> UnifiedRecommender:
    """Build the model and initialise codebooks from the first training batch."""
    model = UnifiedRecommender(features, qcfg, tcfg, settings, tcfg_train.seed)
    data = TrainingData(split, settings.max_seq_len)
    items = seed_items(data, tcfg_train.seed, tcfg_train.batch_size, qcfg.codebook_size)
    model.rqvae.init_codebooks(model.features[items], tcfg_train.seed)
    return model


def warmup_rqvae(model: UnifiedRecommender, epochs: int, cfg: TrainConfig) -> None:
    """Optional RQ-VAE-only pre-training over the catalog (off by default)."""
    if epochs <= 0 or not model.uses_semantic:
        return
    params = [(n, p) for n, p in model.named_parameters() if n.startswith("rqvae.")]
    opt = Adam(params, lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 0, 2])
    for _ in range(epochs):
        order = rng.permutation(model.num_items)
        for start in range(0, model.num_items, cfg.batch_size):
            items = torch.from_numpy(order[start:start + cfg.batch_size])
            opt.zero_grad()
            _, rq, rc, _ = model.item_representations(items)
            F.backward(rq.mean() + rc.mean())
            opt.step()


def fit(model: UnifiedRecommender, split: SplitAssignment, cfg: TrainConfig,
        num_negatives: int = 99, eval_seed: int = 0, ks=(5, 10),
        on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainReport:
    """Epoch loop with validation MRR early stopping; restores the best parameters."""
    torch.manual_seed(cfg.seed)
    data = TrainingData(split, model.mcfg.max_seq_len)
    contexts = [split.context(u, "valid") for u in range(len(split.train))]
    cands = candidate_matrix(split, "valid", num_negatives, eval_seed)

    def validate() -> Dict[str, float]:
        scores = model.score_candidates(contexts, cands)
        return report_from_ranks(1 + (scores > scores[:, -1:]).sum(axis=1), ks).values

    report = TrainReport()
    report.initial_valid = validate()
    warmup_rqvae(model, cfg.warmup_epochs, cfg)
    optimizer = Adam(model.named_parameters(), lr=cfg.lr)
    best_mrr = report.initial_valid["MRR"]
    best_params = parameter_dict(model)
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        sums = np.zeros(3)
        batches = data.batches(cfg.seed, epoch, cfg.batch_size)
        for b, batch in enumerate(batches):
            terms = train_step(model, optimizer, batch, cfg.lam, where=f"(epoch {epoch}, batch {b})")
            sums += (terms.recom, terms.rqvae, terms.recon)
        mean = sums / len(batches)
        record = EpochRecord(epoch, LossTerms(*mean), validate())
        report.epochs.append(record)
        log.info("epoch %d total %.5f valid %s", epoch, record.losses.total, record.valid)
        if on_epoch is not None:
            on_epoch(record)
        if record.valid["MRR"] > best_mrr:
            best_mrr = record.valid["MRR"]
            best_params = parameter_dict(model)
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    assign_parameters(model, best_params)
    return report
