"""Independent oracles shared by the unit and acceptance tests."""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import torch

FD_STEP = 1e-4
FD_FLOOR = 1e-6


def fd_gradient_check(loss_fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor],
                      num_coords: int = 64, seed: int = 0, h: float = FD_STEP,
                      analytic_fn: Optional[Callable[[], torch.Tensor]] = None) -> Tuple[float, int]:
    """Compare autograd gradients with central finite differences of ``loss_fn``
    at ``num_coords`` coordinates sampled across ``params``.

    The gradients come from ``analytic_fn`` when given (for losses whose
    stop-gradient edges make the differentiated expression differ from the
    value's slope), else from ``loss_fn`` itself.

    Returns (max relative error, coordinates compared). Coordinates where both
    values are below ``FD_FLOOR`` in magnitude are skipped as numerically zero.
    """
    for p in params:
        p.grad = None
    loss = (analytic_fn or loss_fn)()
    grads = torch.autograd.grad(loss, list(params), allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(num_coords, total), replace=False)
    offsets = np.cumsum([0] + sizes)
    worst, compared = 0.0, 0
    with torch.no_grad():
        for flat in picks:
            which = int(np.searchsorted(offsets, flat, side="right") - 1)
            idx = int(flat - offsets[which])
            view = params[which].view(-1)
            orig = view[idx].item()
            view[idx] = orig + h
            up = float(loss_fn())
            view[idx] = orig - h
            down = float(loss_fn())
            view[idx] = orig
            numeric = (up - down) / (2 * h)
            analytic = float(grads[which].reshape(-1)[idx])
            if abs(numeric) < FD_FLOOR and abs(analytic) < FD_FLOOR:
                continue
            compared += 1
            worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric)))
    return worst, compared


def brute_force_nearest(residual: np.ndarray, codebook: np.ndarray, metric: str) -> int:
    """Scan every codeword with plain python loops; lowest index wins ties."""
    best_k, best = 0, None
    rnorm = math.sqrt(sum(float(v) * float(v) for v in residual))
    use_cos = metric == "cosine" and rnorm > 0
    for k, e in enumerate(codebook):
        if use_cos:
            enorm = math.sqrt(sum(float(v) * float(v) for v in e))
            dot = sum(float(a) * float(b) for a, b in zip(residual, e))
            val = -(dot / (rnorm * enorm)) if enorm > 0 else 0.0
        else:
            val = sum((float(a) - float(b)) ** 2 for a, b in zip(residual, e))
        if best is None or val < best:
            best_k, best = k, val
    return best_k


def sort_rank(scores: Sequence[float], truth: int) -> int:
    """Rank by fully sorting candidates descending, ground truth placed first
    among equal scores."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i != truth))
    return order.index(truth) + 1


def brute_five_core(records, core: int = 5, items_too: bool = True):
    """Remove one offending user or item at a time until none remains."""
    kept = list(records)
    changed = True
    while changed:
        changed = False
        users, items = {}, {}
        for r in kept:
            users[r.user_id] = users.get(r.user_id, 0) + 1
            items[r.item_id] = items.get(r.item_id, 0) + 1
        for u, c in users.items():
            if c < core:
                kept = [r for r in kept if r.user_id != u]
                changed = True
                break
        if changed:
            continue
        if items_too:
            for i, c in items.items():
                if c < core:
                    kept = [r for r in kept if r.item_id != i]
                    changed = True
                    break
    return kept


def uniform_rank_mrr(n: int) -> float:
    return sum(1.0 / r for r in range(1, n + 1)) / n


def uniform_rank_mrr_std(n: int) -> float:
    mean = uniform_rank_mrr(n)
    second = sum(1.0 / (r * r) for r in range(1, n + 1)) / n
    return math.sqrt(second - mean * mean)
