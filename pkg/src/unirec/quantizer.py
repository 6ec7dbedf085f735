"""RQ-VAE: MLP encoder, residual quantizer with per-layer distance metric, mirror decoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from . import nn as F
from .nn import DTYPE, MLP

COSINE = "cosine"
EUCLIDEAN = "euclidean"
DECODER_OUT_GAIN = 0.1
ENCODER_OUT_GAIN = 0.2


@dataclass(frozen=True)
class DistancePolicy:
    metrics: Tuple[str, ...]

    def __post_init__(self) -> None:
        bad = [m for m in self.metrics if m not in (COSINE, EUCLIDEAN)]
        if bad:
            raise ValueError(f"unknown distance metric(s): {bad}")

    @classmethod
    def named(cls, name: str, num_layers: int) -> "DistancePolicy":
        """``hybrid``: cosine on all but the last layer, euclidean on the last."""
        if name == "hybrid":
            return cls((COSINE,) * (num_layers - 1) + (EUCLIDEAN,))
        if name == COSINE:
            return cls((COSINE,) * num_layers)
        if name == EUCLIDEAN:
            return cls((EUCLIDEAN,) * num_layers)
        raise ValueError(f"unknown distance policy {name!r}")

    def __len__(self) -> int:
        return len(self.metrics)


@dataclass
class EncoderConfig:
    input_dim: int = 768
    hidden: Tuple[int, ...] = (512, 256, 128)
    latent_dim: int = 64


@dataclass
class QuantizationResult:
    codes: torch.Tensor            # (B, L) long
    z: torch.Tensor                # (B, D')
    z_hat: torch.Tensor            # (B, D'), gradient flows to codewords
    residuals: List[torch.Tensor]  # r_1 .. r_{L+1}
    rqvae_loss: torch.Tensor       # (B,) per-item


def nearest_code(residual: torch.Tensor, codebook: torch.Tensor, metric: str) -> torch.Tensor:
    """Index of the closest codeword for each row of ``residual``.

    Euclidean: argmin of squared distance. Cosine: argmax of cosine
    similarity, with zero-norm residual rows falling back to euclidean.
    Ties resolve to the lowest index.
    """
    r = residual.detach()
    e = codebook.detach()
    squeeze = r.dim() == 1
    if squeeze:
        r = r.unsqueeze(0)
    dist = ((r.unsqueeze(1) - e.unsqueeze(0)) ** 2).sum(-1)
    idx = torch.argmin(dist, dim=1)
    if metric == COSINE:
        rn = torch.linalg.vector_norm(r, dim=1)
        en = torch.linalg.vector_norm(e, dim=1)
        denom = rn.unsqueeze(1) * en.unsqueeze(0)
        sims = (r @ e.T) / torch.where(denom > 0, denom, torch.ones_like(denom))
        cos_idx = torch.argmax(sims, dim=1)
        idx = torch.where(rn > 0, cos_idx, idx)
    elif metric != EUCLIDEAN:
        raise ValueError(f"unknown metric {metric!r}")
    return idx[0] if squeeze else idx


def quantize(z: torch.Tensor, codebooks: Sequence[torch.Tensor], policy: DistancePolicy,
             beta: float = 0.25) -> QuantizationResult:
    """Greedy residual quantization with the commitment-style loss per layer.

    The residual chain is built from stop-gradient codewords, so the codebook
    term moves only codewords and the ``beta`` term moves only ``z``.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if len(policy) != len(codebooks):
        raise ValueError("policy length must equal the number of codebook layers")
    residual = z
    z_hat = torch.zeros_like(z)
    loss = torch.zeros(z.shape[0], dtype=z.dtype)
    codes, residuals = [], [z]
    for codebook, metric in zip(codebooks, policy.metrics):
        k = nearest_code(residual, codebook, metric)
        e = F.embedding_lookup(codebook, k)
        e_sg = F.stop_gradient(e)
        loss = loss + F.reduce_sum(F.square(F.stop_gradient(residual) - e), dim=-1) \
            + beta * F.reduce_sum(F.square(residual - e_sg), dim=-1)
        residual = residual - e_sg
        z_hat = z_hat + e
        codes.append(k)
        residuals.append(residual)
    return QuantizationResult(torch.stack(codes, dim=1), z, z_hat, residuals, loss)


def straight_through(z: torch.Tensor, z_hat: torch.Tensor) -> torch.Tensor:
    """Value of ``z_hat``, gradient of the identity with respect to ``z``.

    Written as sg(z_hat) + (z - sg(z)) rather than z + sg(z_hat - z): the
    second summand is exactly zero, so the forward value is bitwise z_hat.
    """
    if z.shape != z_hat.shape:
        raise ValueError("straight_through: shape mismatch")
    return F.stop_gradient(z_hat) + (z - F.stop_gradient(z))


def recon_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Per-item squared euclidean error, shape (B,)."""
    if x.shape != x_hat.shape:
        raise ValueError("recon_loss: shape mismatch")
    return F.reduce_sum(F.square(x - x_hat), dim=-1)


class RQVAE(nn.Module):
    def __init__(self, enc: EncoderConfig, num_layers: int, codebook_size: int,
                 policy: DistancePolicy, beta: float, generator: torch.Generator):
        super().__init__()
        if len(policy) != num_layers:
            raise ValueError("policy length must equal num_layers")
        sizes = [enc.input_dim, *enc.hidden, enc.latent_dim]
        self.enc_config = enc
        self.policy = policy
        self.beta = beta
        self.codebook_size = codebook_size
        # small latents let the recommender loss move items between codewords
        # early in joint training instead of freezing the first assignment
        self.encoder = MLP(sizes, generator, out_gain=ENCODER_OUT_GAIN)
        # small output layer: an untrained decoder starts near x_hat = 0 rather
        # than with a reconstruction error several times |x|^2
        self.decoder = MLP(sizes[::-1], generator, out_gain=DECODER_OUT_GAIN)
        self.codebooks = nn.ParameterList(
            nn.Parameter(torch.zeros(codebook_size, enc.latent_dim, dtype=DTYPE)) for _ in range(num_layers)
        )

    @property
    def num_layers(self) -> int:
        return len(self.codebooks)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    def decode(self, z_hat: torch.Tensor) -> torch.Tensor:
        return self.decoder(z_hat)

    def quantize(self, z: torch.Tensor) -> QuantizationResult:
        return quantize(z, list(self.codebooks), self.policy, self.beta)

    def forward(self, x: torch.Tensor):
        """Returns (straight-through semantic embedding, result, recon loss per item)."""
        q = self.quantize(self.encode(x))
        z_st = straight_through(q.z, q.z_hat)
        return z_st, q, recon_loss(x, self.decode(z_st))

    @torch.no_grad()
    def init_codebooks(self, x_seed: torch.Tensor, seed: int) -> None:
        self.load_codebooks(init_codebooks(self.encode(x_seed), self.codebook_size,
                                           self.num_layers, seed, self.policy))

    @torch.no_grad()
    def load_codebooks(self, books: Sequence[torch.Tensor]) -> None:
        for param, book in zip(self.codebooks, books):
            param.copy_(book)


def init_codebooks(latents: torch.Tensor, K: int, L: int, seed: int,
                   policy: Optional[DistancePolicy] = None) -> List[torch.Tensor]:
    """Sample each layer's K codewords without replacement from the residuals
    left by greedily quantizing ``latents`` with the layers already built."""
    latents = latents.detach()
    if latents.shape[0] < K:
        raise ValueError(f"seed batch has {latents.shape[0]} latents, need at least K={K}")
    policy = policy or DistancePolicy.named("hybrid", L)
    rng = np.random.default_rng(seed)
    residual = latents.clone()
    books: List[torch.Tensor] = []
    for layer in range(L):
        pick = torch.from_numpy(rng.choice(residual.shape[0], size=K, replace=False))
        book = residual[pick].clone()
        books.append(book)
        k = nearest_code(residual, book, policy.metrics[layer])
        residual = residual - book[k]
    return books
