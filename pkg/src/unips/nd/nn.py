"""Small neural-network module system on top of the tensor graph.

Modules hold parameters as Tensors and discover structure by introspecting
instance attributes, so parameter names are stable attribute paths like
``fusion.lateral.0.weight``.  Randomized behavior (dropout) never draws from
a shared stream: every call derives its mask from (seed, layer id, step)
carried in a RunState, so replaying a step reproduces the mask exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CheckpointError, ShapeError
from . import functional as F
from .tensor import Tensor

__all__ = [
    "RunState",
    "EVAL_STATE",
    "Module",
    "Linear",
    "Conv2d",
    "LayerNorm",
    "Dropout",
    "MultiHeadAttention",
    "TransformerLayer",
    "AttentionPool",
    "PatchMerge",
    "assign_dropout_ids",
    "trunc_normal",
]


@dataclass
class RunState:
    """Per-call context threaded through forward passes."""

    seed: int = 0
    step: int = 0
    training: bool = False


EVAL_STATE = RunState(seed=0, step=0, training=False)


class Module:
    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _local_items(self):
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Tensor, Module)):
                        yield f"{name}.{i}", item

    def named_modules(self, prefix: str = ""):
        yield prefix, self
        for name, value in self._local_items():
            if isinstance(value, Module):
                sub = f"{prefix}.{name}" if prefix else name
                yield from value.named_modules(sub)

    def named_parameters(self, prefix: str = ""):
        for name, value in self._local_items():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield full, value
            else:
                yield from value.named_parameters(full)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Convert parameters in place (float64 for gradient checking)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise CheckpointError(
                f"parameter names do not match (missing {missing[:3]}, "
                f"unexpected {extra[:3]})"
            )
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise CheckpointError(
                    f"shape mismatch for '{name}': "
                    f"checkpoint {arr.shape} vs model {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype)


def assign_dropout_ids(root: Module) -> None:
    """Give every dropout a stable id derived from its attribute path."""
    for name, mod in root.named_modules():
        if isinstance(mod, Dropout):
            mod.layer_id = F.layer_key(name)


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02):
    """Normal(0, std) resampled into [-2 std, 2 std]."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(np.float32)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True):
        self.weight = Tensor(trunc_normal(rng, (in_dim, out_dim)),
                             requires_grad=True)
        self.bias = None
        if bias:
            self.bias = Tensor(np.zeros(out_dim, dtype=np.float32),
                               requires_grad=True)

    def forward(self, x):
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0):
        fan_in = kernel * kernel * in_ch
        std = np.sqrt(2.0 / fan_in)
        w = rng.normal(0.0, std, size=(kernel, kernel, in_ch, out_ch))
        self.weight = Tensor(w.astype(np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias,
                        stride=self.stride, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.eps = eps

    def forward(self, x):
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    def __init__(self, rate: float):
        self.rate = rate
        self.layer_id = 0

    def forward(self, x, state: RunState):
        return F.dropout(x, self.rate, state.seed, self.layer_id, state.step,
                         state.training)


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ShapeError(f"attention dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)

    def forward(self, q, k, v):
        out = F.attention(self.wq(q), self.wk(k), self.wv(v), self.heads)
        return self.wo(out)


class TransformerLayer(Module):
    """Pre-norm self-attention block: x + attn(ln(x)), then x + ff(ln(x))."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 ff_dim: int | None = None, dropout: float = 0.0):
        if ff_dim is None:
            ff_dim = 2 * dim
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.drop1 = Dropout(dropout)
        self.ln2 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_dim, rng)
        self.ff2 = Linear(ff_dim, dim, rng)
        self.drop2 = Dropout(dropout)

    def forward(self, x, state: RunState):
        h = self.ln1(x)
        x = x + self.drop1(self.attn(h, h, h), state)
        h = F.gelu(self.ff1(self.ln2(x)))
        x = x + self.drop2(self.ff2(h), state)
        return x


class AttentionPool(Module):
    """Pool a set (B, T, D) to (B, D) by attending from one learned seed."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        s = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(1, 1, dim))
        self.seed = Tensor(s.astype(np.float32), requires_grad=True)
        self.ln = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)

    def forward(self, x):
        b = x.shape[0]
        ones = np.ones((b, 1, 1), dtype=x.data.dtype)
        q = self.seed * ones  # broadcast the seed across the batch
        h = self.ln(x)
        out = self.attn(q, h, h)
        return out.reshape(b, out.shape[-1])


class PatchMerge(Module):
    """2x2 space-to-depth followed by a linear projection (downsample by 2)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.norm = LayerNorm(4 * in_dim)
        self.proj = Linear(4 * in_dim, out_dim, rng, bias=False)

    def forward(self, x):
        b, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"patch merge needs even spatial dims, got {(h, w)}")
        x = x.reshape(b, h // 2, 2, w // 2, 2, c)
        x = x.transpose(0, 1, 3, 2, 4, 5)
        x = x.reshape(b, h // 2, w // 2, 4 * c)
        return self.proj(self.norm(x))
