"""Lighting-context encoder.

Turns a preprocessed (q, s, s, 4) stack into one feature grid per image at
a quarter of the canonical resolution.  The path is: a five-convolution
patch embed (stride pattern 2,1,2,1,1), a hierarchy of windowed
self-attention stages with patch-merge downsampling (dims c, 2c, 4c, 8c),
optional communication across the image axis at a configurable point, and
a pyramid fusion of the multi-scale maps down to the embed dimension.

Communication is a single transformer layer applied independently at every
spatial location, attending across the q images; its placement is the main
architectural knob this codebase exists to compare.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nd import functional as F
from .nd.nn import (
    Conv2d,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    PatchMerge,
    RunState,
    TransformerLayer,
)
from .nd.tensor import Tensor

__all__ = ["EncoderConfig", "Encoder", "PLACEMENTS", "uniform_pool"]

PLACEMENTS = ("none", "during-extraction", "pre-fusion", "post-fusion")


@dataclass
class EncoderConfig:
    s: int = 64
    c: int = 24
    d_e: int = 64
    placement: str = "pre-fusion"
    window: int = 4
    heads: int = 8
    num_stages: int = 4
    dropout: float = 0.1
    uniform: bool = False

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise ConfigError(
                f"placement must be one of {PLACEMENTS}, got '{self.placement}'")
        if self.num_stages < 1:
            raise ConfigError("need at least one backbone stage")
        down = 4 * 2 ** (self.num_stages - 1)
        if self.s % down:
            raise ConfigError(
                f"canonical resolution {self.s} not divisible by {down} "
                f"({self.num_stages} stages after the 4x patch embed)")
        for i in range(self.num_stages):
            dim = self.c * 2 ** i
            if dim % self.heads:
                raise ConfigError(
                    f"stage dim {dim} not divisible by {self.heads} heads")
        if self.d_e % self.heads:
            raise ConfigError(
                f"embed dim {self.d_e} not divisible by {self.heads} heads")

    @property
    def stage_dims(self) -> list[int]:
        return [self.c * 2 ** i for i in range(self.num_stages)]

    @property
    def stage_res(self) -> list[int]:
        return [self.s // (4 * 2 ** i) for i in range(self.num_stages)]

    @property
    def context_res(self) -> int:
        return self.s // 4


class PatchEmbed(Module):
    """Five 3x3 convolutions taking (q, s, s, 4) to (q, s/4, s/4, c)."""

    def __init__(self, c: int, rng: np.random.Generator):
        strides = (2, 1, 2, 1, 1)
        dims = (4, c, c, c, c, c)
        self.convs = [Conv2d(dims[i], dims[i + 1], 3, rng,
                             stride=strides[i], padding=1)
                      for i in range(5)]

    def forward(self, x):
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = F.gelu(x)
        return x


class WindowBlock(Module):
    """Pre-norm transformer block with attention inside w x w windows."""

    def __init__(self, dim: int, window: int, heads: int,
                 rng: np.random.Generator, dropout: float):
        self.window = window
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.drop1 = Dropout(dropout)
        self.ln2 = LayerNorm(dim)
        self.ff1 = Linear(dim, 2 * dim, rng)
        self.ff2 = Linear(2 * dim, dim, rng)
        self.drop2 = Dropout(dropout)

    def _windows(self, x):
        q, h, w, c = x.shape
        win = min(self.window, h)
        if h % win or w % win:
            raise ConfigError(
                f"window {win} does not divide stage resolution {h}x{w}")
        x = x.reshape(q, h // win, win, w // win, win, c)
        x = x.transpose(0, 1, 3, 2, 4, 5)
        return x.reshape(q * (h // win) * (w // win), win * win, c), win

    def _unwindows(self, x, shape, win):
        q, h, w, c = shape
        x = x.reshape(q, h // win, w // win, win, win, c)
        x = x.transpose(0, 1, 3, 2, 4, 5)
        return x.reshape(q, h, w, c)

    def forward(self, x, state: RunState):
        shape = x.shape
        t, win = self._windows(x)
        h = self.ln1(t)
        t = t + self.drop1(self.attn(h, h, h), state)
        h = F.gelu(self.ff1(self.ln2(t)))
        t = t + self.drop2(self.ff2(h), state)
        return self._unwindows(t, shape, win)


class CommLayer(Module):
    """One transformer layer across the image axis at each location."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 dropout: float):
        self.layer = TransformerLayer(dim, heads, rng, ff_dim=2 * dim,
                                      dropout=dropout)

    def forward(self, x, state: RunState):
        q, h, w, c = x.shape
        t = x.reshape(q, h * w, c).transpose(1, 0, 2)  # (locations, q, c)
        t = self.layer(t, state)
        return t.transpose(1, 0, 2).reshape(q, h, w, c)


class PyramidFusion(Module):
    """Lateral 1x1 projections, top-down sum, smoothing, all-level sum."""

    def __init__(self, stage_dims: list[int], d_e: int,
                 rng: np.random.Generator):
        self.laterals = [Conv2d(d, d_e, 1, rng) for d in stage_dims]
        self.smooths = [Conv2d(d_e, d_e, 3, rng, padding=1)
                        for _ in stage_dims]
        self.out = Conv2d(d_e, d_e, 3, rng, padding=1)

    def forward(self, stages):
        laterals = [lat(s) for lat, s in zip(self.laterals, stages)]
        merged = [laterals[-1]]
        for lat in reversed(laterals[:-1]):
            up = F.bilinear_resize(merged[0], lat.shape[1], lat.shape[2])
            merged.insert(0, lat + up)
        smoothed = [smooth(m) for smooth, m in zip(self.smooths, merged)]
        top = smoothed[0]
        total = top
        for level in smoothed[1:]:
            total = total + F.bilinear_resize(level, top.shape[1], top.shape[2])
        return self.out(total)


def uniform_pool(contexts: Tensor) -> Tensor:
    """Collapse each context grid to its spatial mean (kept as 1x1)."""
    q, h, w, c = contexts.shape
    pooled = contexts.reshape(q, h * w, c).mean(axis=1)
    return pooled.reshape(q, 1, 1, c)


class Encoder(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        self.embed = PatchEmbed(config.c, rng)
        self.stages = [
            [WindowBlock(dim, config.window, config.heads, rng, config.dropout)
             for _ in range(2)]
            for dim in config.stage_dims
        ]
        self.merges = [
            PatchMerge(config.stage_dims[i], config.stage_dims[i + 1], rng)
            for i in range(config.num_stages - 1)
        ]
        placement = config.placement
        self.comm_stage = None
        self.comm_prefuse = None
        self.comm_postfuse = None
        if placement == "during-extraction":
            self.comm_stage = [CommLayer(d, config.heads, rng, config.dropout)
                               for d in config.stage_dims]
        elif placement == "pre-fusion":
            self.comm_prefuse = [CommLayer(d, config.heads, rng, config.dropout)
                                 for d in config.stage_dims]
        elif placement == "post-fusion":
            self.comm_postfuse = CommLayer(config.d_e, config.heads, rng,
                                           config.dropout)
        self.fusion = PyramidFusion(config.stage_dims, config.d_e, rng)

    def forward(self, stack, state: RunState) -> Tensor:
        """(q, s, s, 4) -> contexts (q, s/4, s/4, d_e) (or (q, 1, 1, d_e))."""
        if not isinstance(stack, Tensor):
            stack = Tensor(stack)
        q, s, s2, ch = stack.shape
        if s != self.config.s or s2 != self.config.s or ch != 4:
            raise ShapeError(
                f"encoder expects (q, {self.config.s}, {self.config.s}, 4), "
                f"got {stack.shape}")
        x = self.embed(stack)
        outputs = []
        for i, blocks in enumerate(self.stages):
            if i > 0:
                x = self.merges[i - 1](x)
            for block in blocks:
                x = block(x, state)
            if self.comm_stage is not None:
                x = self.comm_stage[i](x, state)
            outputs.append(x)
        if self.comm_prefuse is not None:
            outputs = [comm(o, state)
                       for comm, o in zip(self.comm_prefuse, outputs)]
        contexts = self.fusion(outputs)
        if self.comm_postfuse is not None:
            contexts = self.comm_postfuse(contexts, state)
        if self.config.uniform:
            contexts = uniform_pool(contexts)
        return contexts
