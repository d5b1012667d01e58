"""Shared torch building blocks: seeded init, MLPs, and attention blocks.

All parameters are initialized from an explicit numpy generator so module
construction is deterministic regardless of global RNG state.  Training code
seeds the torch global generator separately for dropout.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

DTYPES = {"float64": torch.float64, "float32": torch.float32}


def resolve_dtype(name: str) -> torch.dtype:
    try:
        return DTYPES[name]
    except KeyError:
        raise ValueError(f"unknown dtype {name!r} (use float64 or float32)") from None


def seed_all(seed: int) -> None:
    """Seed torch and pin to one thread so repeated runs are bit-identical."""
    torch.manual_seed(seed)
    torch.set_num_threads(1)


def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_out, fan_in = shape[0], shape[-1]
    std = math.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=shape)


def init_linear(lin: nn.Linear, rng: np.random.Generator) -> None:
    with torch.no_grad():
        lin.weight.copy_(torch.from_numpy(glorot(rng, tuple(lin.weight.shape))))
        if lin.bias is not None:
            lin.bias.zero_()


def zero_parameters(module: nn.Module) -> None:
    """Set every parameter to zero (test fixture for fixed-point checks)."""
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


def to_tensor(x, dtype: torch.dtype) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype)


class Mlp(nn.Module):
    """Fully-connected stack; activation and dropout on hidden layers only."""

    def __init__(
        self,
        in_dim: int,
        hidden: Sequence[int],
        out_dim: int,
        rng: np.random.Generator,
        dtype: torch.dtype = torch.float64,
        activation: str = "relu",
        dropout: float = 0.0,
    ):
        super().__init__()
        self.activation = activation
        self.dropout = dropout
        widths = [in_dim, *hidden, out_dim]
        self.linears = nn.ModuleList(
            nn.Linear(widths[i], widths[i + 1], dtype=dtype) for i in range(len(widths) - 1)
        )
        for lin in self.linears:
            init_linear(lin, rng)

    def _act(self, x: torch.Tensor) -> torch.Tensor:
        if self.activation == "relu":
            return F.relu(x)
        if self.activation == "elu":
            return F.elu(x)
        raise ValueError(f"unknown activation {self.activation!r}")

    def forward(self, x: torch.Tensor, training: bool = False) -> torch.Tensor:
        *hidden, last = self.linears
        for lin in hidden:
            x = self._act(lin(x))
            if self.dropout > 0.0:
                x = F.dropout(x, p=self.dropout, training=training)
        return last(x)


class AttentionBlock(nn.Module):
    """Pre-norm-free transformer block: residual multi-head self-attention
    followed by a residual feed-forward.  Inputs are (batch, tokens, width);
    entity embeddings enter as single-token sequences."""

    def __init__(
        self,
        width: int,
        heads: int,
        rng: np.random.Generator,
        ffn_mult: int = 2,
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        if width % heads != 0:
            raise ValueError(f"head count {heads} must divide width {width}")
        self.width = width
        self.heads = heads
        self.head_dim = width // heads
        self.wq = nn.Linear(width, width, dtype=dtype)
        self.wk = nn.Linear(width, width, dtype=dtype)
        self.wv = nn.Linear(width, width, dtype=dtype)
        self.wo = nn.Linear(width, width, dtype=dtype)
        self.ff1 = nn.Linear(width, ffn_mult * width, dtype=dtype)
        self.ff2 = nn.Linear(ffn_mult * width, width, dtype=dtype)
        for lin in (self.wq, self.wk, self.wv, self.wo, self.ff1, self.ff2):
            init_linear(lin, rng)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h, hd = self.heads, self.head_dim

        def split(z):
            return z.view(b, t, h, hd).transpose(1, 2)  # (b, h, t, hd)

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(hd)
        att = torch.softmax(scores, dim=-1)
        mixed = (att @ v).transpose(1, 2).reshape(b, t, d)
        x = x + self.wo(mixed)
        return x + self.ff2(F.relu(self.ff1(x)))
