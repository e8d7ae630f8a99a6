"""Per-pixel normal prediction from sampled lighting contexts.

For each queried pixel the decoder gathers, per image, the normalized RGB
value and a bilinearly sampled context vector, projects the concatenation
into a latent set of q elements, runs transformer layers over that set,
pools it to one vector with a learned attention seed, and maps the result
through a small MLP to a unit normal.  Everything after the projection is
symmetric in the image axis, so the output is invariant to image order and
well-defined for any q >= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError
from .nd import functional as F
from .nd.nn import (
    AttentionPool,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    RunState,
    TransformerLayer,
)
from .nd.tensor import Tensor, concat, max_along, sqrt

__all__ = ["DecoderConfig", "Decoder", "sample_context", "AGGREGATIONS"]

AGGREGATIONS = ("transformer", "max-pool")


@dataclass
class DecoderConfig:
    depth: int = 3
    d_t: int = 96
    ff_dim: int = 256
    heads: int = 8
    aggregation: str = "transformer"
    dropout: float = 0.1

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(
                f"aggregation must be one of {AGGREGATIONS}, got "
                f"'{self.aggregation}'")
        if self.aggregation == "transformer" and self.depth < 1:
            raise ConfigError("transformer aggregation needs depth >= 1")
        if self.d_t % self.heads or self.d_t % 2:
            raise ConfigError(
                f"latent dim {self.d_t} must be divisible by {self.heads} "
                f"heads and by 2")


def sample_context(contexts, coords_rc: np.ndarray,
                   crop_hw: tuple[int, int]) -> Tensor:
    """Sample per-image context vectors for original-resolution pixels.

    coords_rc are integer or fractional (row, col) pixel coordinates in the
    cropped original frame of size crop_hw.  Under the project alignment
    map, pixel x in a length-n axis lands at (x + 0.5) * g / n - 0.5 on a
    length-g context grid; sampling is bilinear with edge clamping.
    Uniform (1x1) contexts return their single vector for every query.
    Returns (q, len(coords), d_e).
    """
    if not isinstance(contexts, Tensor):
        contexts = Tensor(contexts)
    qn, gh, gw, d_e = contexts.shape
    coords = np.atleast_2d(np.asarray(coords_rc, dtype=np.float64))
    n = coords.shape[0]
    if gh == 1 and gw == 1:
        flat = contexts.reshape(qn, 1, d_e)
        ones = np.ones((1, n, 1), dtype=contexts.data.dtype)
        return flat * ones
    h, w = crop_hw
    grid_rc = np.stack([
        (coords[:, 0] + 0.5) * (gh / h) - 0.5,
        (coords[:, 1] + 0.5) * (gw / w) - 0.5,
    ], axis=1)
    return F.bilinear_sample_grid(contexts, grid_rc)


class Decoder(Module):
    def __init__(self, config: DecoderConfig, d_e: int,
                 rng: np.random.Generator):
        self.config = config
        self.d_e = d_e
        self.proj = Linear(3 + d_e, config.d_t, rng)
        self.layers = []
        self.pool = None
        if config.aggregation == "transformer":
            self.layers = [
                TransformerLayer(config.d_t, config.heads, rng,
                                 ff_dim=config.ff_dim, dropout=config.dropout)
                for _ in range(config.depth)
            ]
            self.pool = AttentionPool(config.d_t, config.heads, rng)
        self.head1 = Linear(config.d_t, config.d_t // 2, rng)
        self.head2 = Linear(config.d_t // 2, 3, rng)

    def forward(self, rgb, ctx, state: RunState) -> Tensor:
        """rgb (q, n, 3) and ctx (q, n, d_e) -> unit normals (n, 3)."""
        if not isinstance(rgb, Tensor):
            rgb = Tensor(rgb)
        q = rgb.shape[0]
        if q < 1:
            raise ShapeError("decoder needs at least one image")
        if ctx.shape[0] != q or ctx.shape[1] != rgb.shape[1]:
            raise ShapeError(
                f"context {ctx.shape} does not match rgb {rgb.shape}")
        x = concat([rgb, ctx], axis=2)  # (q, n, 3 + d_e)
        x = x.transpose(1, 0, 2)  # (n, q, d)
        x = self.proj(x)
        if self.config.aggregation == "transformer":
            for layer in self.layers:
                x = layer(x, state)
            feat = self.pool(x)  # (n, d_t)
        else:
            feat = max_along(x, axis=1)
        h = F.gelu(self.head1(feat))
        raw = self.head2(h)  # (n, 3)
        return normalize_rows(raw)


def normalize_rows(raw: Tensor) -> Tensor:
    """Divide each 3-vector by its L2 norm; degenerate norms are an error."""
    sq = (raw * raw).sum(axis=-1, keepdims=True)
    norm = sqrt(sq)
    if (norm.data < 1e-12).any():
        raise NonFiniteError("normal head produced a near-zero vector")
    return raw * (norm ** -1.0)
