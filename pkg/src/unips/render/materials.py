"""Procedural material fields: base color, roughness, metallic over (x, y).

The visible surface of every geometry projects one-to-one onto the image
plane under the orthographic camera, so world (x, y) doubles as the surface
parameterization for material lookup.
"""

from __future__ import annotations

import numpy as np

from .noise import ValueNoise

__all__ = ["MaterialField"]


def _smoothstep(t, lo, hi):
    u = np.clip((t - lo) / (hi - lo), 0.0, 1.0)
    return u * u * (3 - 2 * u)


class MaterialField:
    """Noise-driven PBR-style maps, each channel clamped to [0, 1]."""

    def __init__(self, seed: int, color_a, color_b,
                 rough_lo: float = 0.2, rough_hi: float = 1.0,
                 metal_max: float = 0.0, freq: float = 3.0):
        self.seed = int(seed)
        self.color_a = np.clip(np.asarray(color_a, dtype=np.float64), 0, 1)
        self.color_b = np.clip(np.asarray(color_b, dtype=np.float64), 0, 1)
        self.rough_lo = float(np.clip(rough_lo, 0, 1))
        self.rough_hi = float(np.clip(rough_hi, 0, 1))
        self.metal_max = float(np.clip(metal_max, 0, 1))
        self._n_color = ValueNoise(seed * 3 + 1, octaves=2, base_freq=freq)
        self._n_rough = ValueNoise(seed * 3 + 2, octaves=2, base_freq=freq)
        self._n_metal = ValueNoise(seed * 3 + 3, octaves=2, base_freq=freq * 0.7)

    @classmethod
    def random(cls, rng: np.random.Generator, seed: int) -> "MaterialField":
        color_a = rng.uniform(0.08, 0.95, size=3)
        color_b = rng.uniform(0.08, 0.95, size=3)
        r_lo, r_hi = np.sort(rng.uniform(0.12, 1.0, size=2))
        metal_max = rng.uniform(0.5, 1.0) if rng.random() < 0.35 else 0.0
        freq = rng.uniform(2.0, 4.5)
        return cls(seed, color_a, color_b, r_lo, r_hi, metal_max, freq)

    @classmethod
    def constant(cls, base=(1.0, 1.0, 1.0), roughness: float = 1.0,
                 metallic: float = 0.0) -> "MaterialField":
        m = cls(0, base, base, roughness, roughness, metallic)
        m._constant_metal = True
        return m

    def sample(self, x, y):
        """(base_color, roughness, metallic) arrays at the query points."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        tc = self._n_color.value(x, y)[..., None]
        base = self.color_a + tc * (self.color_b - self.color_a)
        tr = self._n_rough.value(x, y)
        rough = self.rough_lo + tr * (self.rough_hi - self.rough_lo)
        if getattr(self, "_constant_metal", False):
            metal = np.full_like(rough, self.metal_max)
        else:
            tm = self._n_metal.value(x, y)
            metal = self.metal_max * _smoothstep(tm, 0.45, 0.62)
        return (np.clip(base, 0, 1), np.clip(rough, 0, 1), np.clip(metal, 0, 1))
