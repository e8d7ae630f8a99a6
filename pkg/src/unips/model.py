"""The full network: encoder + decoder, checkpointing, streaming inference."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .decoder import Decoder, DecoderConfig, sample_context
from .encoder import Encoder, EncoderConfig
from .errors import CheckpointError
from .nd.checkpoint import read_checkpoint, write_checkpoint
from .nd.nn import EVAL_STATE, Module, RunState, assign_dropout_ids
from .nd.tensor import Tensor, no_grad
from .prep import PreprocessedStack, preprocess

__all__ = [
    "NetworkConfig",
    "LightingContextNetwork",
    "infer_normal_map",
    "save_network",
    "load_network",
]


@dataclass
class NetworkConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    init_seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(encoder=EncoderConfig(**d.get("encoder", {})),
                   decoder=DecoderConfig(**d.get("decoder", {})),
                   init_seed=d.get("init_seed", 0))


class LightingContextNetwork(Module):
    """Maps an image stack plus mask to per-pixel unit surface normals."""

    def __init__(self, config: NetworkConfig | None = None):
        self.config = config or NetworkConfig()
        rng = np.random.default_rng(self.config.init_seed)
        self.encoder = Encoder(self.config.encoder, rng)
        self.decoder = Decoder(self.config.decoder, self.config.encoder.d_e, rng)
        assign_dropout_ids(self)

    def encode(self, stack: PreprocessedStack, state: RunState) -> Tensor:
        return self.encoder(stack.canonical, state)

    def decode_pixels(self, stack: PreprocessedStack, contexts: Tensor,
                      coords_rc: np.ndarray, state: RunState) -> Tensor:
        """Predict unit normals at integer crop-local (row, col) coords."""
        coords = np.atleast_2d(np.asarray(coords_rc))
        rows = coords[:, 0].astype(int)
        cols = coords[:, 1].astype(int)
        rgb = Tensor(self.stack_values(stack, rows, cols))
        ctx = sample_context(contexts, coords, stack.mask.shape)
        return self.decoder(rgb, ctx, state)

    @staticmethod
    def stack_values(stack: PreprocessedStack, rows, cols) -> np.ndarray:
        return np.ascontiguousarray(stack.images[:, rows, cols, :])

    def forward(self, stack: PreprocessedStack, coords_rc: np.ndarray,
                state: RunState) -> Tensor:
        contexts = self.encode(stack, state)
        return self.decode_pixels(stack, contexts, coords_rc, state)


def infer_normal_map(model: LightingContextNetwork, images: np.ndarray,
                     mask: np.ndarray, batch_size: int = 4096,
                     state: RunState = EVAL_STATE):
    """Full-frame normal map at the original resolution.

    Masked pixels are decoded in bounded batches so peak memory scales with
    ``batch_size``, not the image area.  Returns (normals (h, w, 3) float32,
    valid (h, w) bool); an empty mask yields an empty map with no decoding.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    out = np.zeros((h, w, 3), dtype=np.float32)
    if not mask.any():
        return out, mask.copy()
    stack = preprocess(images, mask, model.config.encoder.s)
    r0, _, c0, _ = stack.crop
    with no_grad():
        contexts = model.encode(stack, state)
        coords = np.argwhere(stack.mask)
        for lo in range(0, len(coords), batch_size):
            chunk = coords[lo:lo + batch_size]
            normals = model.decode_pixels(stack, contexts, chunk, state)
            out[chunk[:, 0] + r0, chunk[:, 1] + c0] = normals.data
    return out, mask.copy()


def save_network(path, model: LightingContextNetwork) -> None:
    """Write weights (binary) plus a config sidecar (<path>.json)."""
    write_checkpoint(path, model.state_dict())
    sidecar = Path(str(path) + ".json")
    sidecar.write_text(json.dumps(model.config.to_dict(), indent=2,
                                  sort_keys=True) + "\n")


def load_network(path, config: NetworkConfig | None = None) -> LightingContextNetwork:
    """Rebuild a network from a checkpoint (config sidecar or explicit)."""
    if config is None:
        sidecar = Path(str(path) + ".json")
        if not sidecar.exists():
            raise CheckpointError(
                f"no config given and no sidecar found at {sidecar}")
        config = NetworkConfig.from_dict(json.loads(sidecar.read_text()))
    model = LightingContextNetwork(config)
    model.load_state_dict(read_checkpoint(path))
    return model
