"""Numeric primitives, dense layers, Adam and checkpoint I/O.

Tensors are torch float64 throughout; gradients come from torch autograd and
are checked against central finite differences in the test-suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

DTYPE = torch.float64
CHECK_FINITE = True
CHECKPOINT_MAGIC = b"UNIREC-CKPT"
CHECKPOINT_VERSION = 1


class NonFiniteError(FloatingPointError):
    pass


def _finite(t: torch.Tensor, op: str) -> torch.Tensor:
    if CHECK_FINITE and not bool(torch.isfinite(t).all()):
        raise NonFiniteError(f"{op} produced non-finite values")
    return t


# --- primitives -------------------------------------------------------------

def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape[-1] != b.shape[-2 if b.dim() > 1 else 0]:
        raise ValueError(f"matmul: shape mismatch {tuple(a.shape)} @ {tuple(b.shape)}")
    return _finite(a @ b, "matmul")


def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Elementwise sum; ``b`` may broadcast over the leading dims of ``a``."""
    try:
        shape = torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        shape = None
    if shape != a.shape:
        raise ValueError(f"add: cannot broadcast {tuple(b.shape)} onto {tuple(a.shape)}")
    return _finite(a + b, "add")


def relu(x: torch.Tensor) -> torch.Tensor:
    return torch.clamp_min(x, 0.0)


def sigmoid(x: torch.Tensor) -> torch.Tensor:
    return _finite(torch.sigmoid(x), "sigmoid")


def softmax(x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Softmax over the last axis, max-subtracted.

    ``mask`` (bool, True = keep) zeroes excluded entries; every row must keep at
    least one entry.
    """
    if mask is not None:
        x = x.masked_fill(~mask, -math.inf)
    shifted = x - x.max(dim=-1, keepdim=True).values.detach()
    e = torch.exp(shifted)
    return _finite(e / e.sum(dim=-1, keepdim=True), "softmax")


def layer_norm(x: torch.Tensor, weight: Optional[torch.Tensor] = None,
               bias: Optional[torch.Tensor] = None, eps: float = 1e-8) -> torch.Tensor:
    mean = x.mean(dim=-1, keepdim=True)
    centered = x - mean
    var = (centered * centered).mean(dim=-1, keepdim=True)
    y = centered / torch.sqrt(var + eps)
    if weight is not None:
        y = y * weight
    if bias is not None:
        y = y + bias
    return _finite(y, "layer_norm")


def concat(tensors: Sequence[torch.Tensor]) -> torch.Tensor:
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ValueError("concat: leading dimensions differ")
    return torch.cat(list(tensors), dim=-1)


def embedding_lookup(table: torch.Tensor, index: torch.Tensor) -> torch.Tensor:
    index = torch.as_tensor(index, dtype=torch.long)
    if index.numel() and (int(index.min()) < 0 or int(index.max()) >= table.shape[0]):
        raise IndexError(f"embedding index out of range [0, {table.shape[0]})")
    return table[index]


def square(x: torch.Tensor) -> torch.Tensor:
    return x * x


def reduce_sum(x: torch.Tensor, dim=None) -> torch.Tensor:
    return x.sum() if dim is None else x.sum(dim=dim)


def reduce_mean(x: torch.Tensor, dim=None) -> torch.Tensor:
    return x.mean() if dim is None else x.mean(dim=dim)


def stop_gradient(x: torch.Tensor) -> torch.Tensor:
    return x.detach()


def backward(loss: torch.Tensor) -> None:
    if loss.numel() != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    _finite(loss.detach(), "loss")
    loss.backward()


# --- layers -----------------------------------------------------------------

def seeded_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


class Linear(nn.Module):
    """Dense layer; weights uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)),
    biases uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) or zero."""

    def __init__(self, fan_in: int, fan_out: int, generator: torch.Generator, gain: float = 1.0,
                 zero_bias: bool = False):
        super().__init__()
        bound = 1.0 / math.sqrt(fan_in)
        self.weight = nn.Parameter(
            (torch.rand(fan_in, fan_out, generator=generator, dtype=DTYPE) * 2 - 1) * bound * gain
        )
        bias = (torch.rand(fan_out, generator=generator, dtype=DTYPE) * 2 - 1) * bound
        self.bias = nn.Parameter(torch.zeros_like(bias) if zero_bias else bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return add(matmul(x, self.weight), self.bias)


class MLP(nn.Module):
    """ReLU between layers, linear output, zero biases.

    Layers feeding a ReLU use gain sqrt(6) (He-uniform) so activation scale
    survives depth; ``out_gain`` scales the output layer. Zero biases keep
    the ReLU offset from dominating the output direction.
    """

    def __init__(self, sizes: Sequence[int], generator: torch.Generator,
                 out_gain: float = math.sqrt(3.0)):
        super().__init__()
        self.sizes = list(sizes)
        n = len(sizes) - 1
        self.layers = nn.ModuleList(
            Linear(a, b, generator, gain=math.sqrt(6.0) if i < n - 1 else out_gain, zero_bias=True)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"MLP expects last dim {self.sizes[0]}, got {x.shape[-1]}")
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x


def embedding_parameter(rows: int, dim: int, generator: torch.Generator, std: float = 0.02) -> nn.Parameter:
    return nn.Parameter(torch.randn(rows, dim, generator=generator, dtype=DTYPE) * std)


# --- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over named parameters; moments kept in float64.

    Parameters whose ``grad`` is None are skipped on that step.
    """

    def __init__(self, named_params: Iterable[Tuple[str, nn.Parameter]], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: Dict[str, nn.Parameter] = dict(named_params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in self.params.items():
            self.state.m[name] = torch.zeros_like(p, dtype=torch.float64)
            self.state.v[name] = torch.zeros_like(p, dtype=torch.float64)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        st = self.state
        st.t += 1
        bc1 = 1.0 - st.beta1 ** st.t
        bc2 = 1.0 - st.beta2 ** st.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.to(torch.float64)
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            m = st.m[name].mul_(st.beta1).add_(g, alpha=1.0 - st.beta1)
            v = st.v[name].mul_(st.beta2).addcmul_(g, g, value=1.0 - st.beta2)
            update = st.lr * (m / bc1) / (torch.sqrt(v / bc2) + st.eps)
            p.sub_(update.to(p.dtype))
        self.zero_grad()


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(params: Dict[str, torch.Tensor], path: str | Path, meta: Optional[dict] = None) -> None:
    """Write ``magic version`` then, per parameter, a JSON header line and raw
    little-endian float64 bytes. Byte-identical for identical inputs."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + b" " + str(CHECKPOINT_VERSION).encode() + b"\n")
        fh.write(json.dumps(meta or {}, sort_keys=True).encode() + b"\n")
        for name in sorted(params):
            arr = params[name].detach().cpu().numpy().astype("<f8", copy=False)
            header = {"name": name, "shape": list(arr.shape), "nbytes": arr.nbytes}
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path: str | Path) -> Tuple[Dict[str, torch.Tensor], dict]:
    params: Dict[str, torch.Tensor] = {}
    with open(path, "rb") as fh:
        first = fh.readline().split()
        if len(first) != 2 or first[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if int(first[1]) != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {int(first[1])}")
        meta = json.loads(fh.readline())
        while True:
            line = fh.readline()
            if not line:
                break
            header = json.loads(line)
            raw = fh.read(header["nbytes"])
            arr = np.frombuffer(raw, dtype="<f8").reshape(header["shape"]).copy()
            params[header["name"]] = torch.from_numpy(arr)
    return params, meta


def parameter_dict(module: nn.Module) -> Dict[str, torch.Tensor]:
    return {name: p.detach().clone() for name, p in module.named_parameters()}


def assign_parameters(module: nn.Module, values: Dict[str, torch.Tensor]) -> None:
    own = dict(module.named_parameters())
    if set(own) != set(values):
        missing = sorted(set(own) - set(values))
        extra = sorted(set(values) - set(own))
        raise ValueError(f"checkpoint mismatch: missing={missing} unexpected={extra}")
    with torch.no_grad():
        for name, p in own.items():
            if tuple(p.shape) != tuple(values[name].shape):
                raise ValueError(f"checkpoint shape mismatch for {name}")
            p.copy_(values[name])
