"""Lighting conditions: directional, environment (lat-long grid), mixture.

Environment maps are small HDR radiance grids indexed by (polar angle from
+z, azimuth); integration uses a fixed stratification of the sphere in
(azimuth, cos polar), so environment shading is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RenderError
from .noise import ValueNoise

__all__ = [
    "DirectionalLight",
    "EnvironmentLight",
    "MixtureLight",
    "variant_of",
    "env_sample_directions",
    "env_radiance",
    "random_directional",
    "random_environment",
]


@dataclass
class DirectionalLight:
    direction: np.ndarray  # unit, z > 0 (toward the camera side)
    rgb: np.ndarray

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=np.float64)
        norm = np.linalg.norm(self.direction)
        if not 0.999999 <= norm <= 1.000001:
            raise RenderError(f"light direction must be unit length, got {norm:.6f}")
        self.rgb = np.asarray(self.rgb, dtype=np.float64)


@dataclass
class EnvironmentLight:
    grid: np.ndarray  # (n_polar, n_azimuth, 3) radiance, nonnegative
    rotation: float = 0.0  # azimuthal offset in radians

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 3 or self.grid.shape[2] != 3:
            raise RenderError(f"environment grid must be (h, w, 3), got {self.grid.shape}")
        if (self.grid < 0).any():
            raise RenderError("environment radiance must be nonnegative")


@dataclass
class MixtureLight:
    directional: DirectionalLight
    environment: EnvironmentLight


def variant_of(light) -> str:
    if isinstance(light, DirectionalLight):
        return "directional"
    if isinstance(light, EnvironmentLight):
        return "environment"
    if isinstance(light, MixtureLight):
        return "mixture"
    raise RenderError(f"unknown lighting condition {type(light).__name__}")


def env_sample_directions(n_polar: int = 8, n_azimuth: int = 8):
    """Stratum-center directions covering the sphere and their solid angle.

    Strata are uniform in (azimuth, cos polar), so every stratum subtends
    the same solid angle 4*pi / (n_polar * n_azimuth).
    """
    cos_theta = -1.0 + (np.arange(n_polar) + 0.5) * (2.0 / n_polar)
    phi = (np.arange(n_azimuth) + 0.5) * (2.0 * np.pi / n_azimuth)
    ct, ph = np.meshgrid(cos_theta, phi, indexing="ij")
    st = np.sqrt(np.maximum(1.0 - ct * ct, 0.0))
    dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    d_omega = 4.0 * np.pi / (n_polar * n_azimuth)
    return dirs, d_omega


def env_radiance(env: EnvironmentLight, dirs: np.ndarray) -> np.ndarray:
    """Bilinear radiance lookup; azimuth wraps, polar clamps."""
    h, w, _ = env.grid.shape
    d = np.atleast_2d(dirs)
    theta = np.arccos(np.clip(d[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[:, 1], d[:, 0]) - env.rotation, 2.0 * np.pi)
    r = np.clip(theta / np.pi * h - 0.5, 0.0, h - 1.0)
    c = phi / (2.0 * np.pi) * w - 0.5
    r0 = np.floor(r).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    fr = (r - r0)[:, None]
    c0 = np.floor(c).astype(int)
    fc = (c - c0)[:, None]
    c0 = np.mod(c0, w)
    c1 = np.mod(c0 + 1, w)
    g = env.grid
    top = g[r0, c0] * (1 - fc) + g[r0, c1] * fc
    bot = g[r1, c0] * (1 - fc) + g[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def random_directional(rng: np.random.Generator) -> DirectionalLight:
    z = rng.uniform(0.25, 0.95)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    s = np.sqrt(1.0 - z * z)
    direction = np.array([s * np.cos(phi), s * np.sin(phi), z])
    base = rng.uniform(0.7, 1.3)
    tint = rng.uniform(0.9, 1.1, size=3)
    return DirectionalLight(direction, base * tint)


def random_environment(rng: np.random.Generator, seed: int,
                       n_polar: int = 16, n_azimuth: int = 32) -> EnvironmentLight:
    """Low-frequency ambient noise plus a few bright angular spots."""
    theta = (np.arange(n_polar) + 0.5) / n_polar * np.pi
    phi = (np.arange(n_azimuth) + 0.5) / n_azimuth * 2.0 * np.pi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph),
                     np.cos(th)], axis=-1)
    noise = ValueNoise(seed, octaves=2, base_freq=1.5)
    ambient = 0.05 + 0.4 * noise.value(ph / np.pi, th / np.pi) ** 2
    grid = np.repeat(ambient[:, :, None], 3, axis=2)
    for _ in range(rng.integers(1, 4)):
        z = rng.uniform(-0.2, 0.98)
        sp = rng.uniform(0.0, 2 * np.pi)
        s = np.sqrt(1 - z * z)
        center = np.array([s * np.cos(sp), s * np.sin(sp), z])
        width = rng.uniform(0.15, 0.45)
        power = rng.uniform(4.0, 20.0)
        tint = rng.uniform(0.75, 1.0, size=3)
        ang = np.arccos(np.clip(dirs @ center, -1, 1))
        grid += power * np.exp(-(ang / width) ** 2)[:, :, None] * tint
    return EnvironmentLight(grid, rotation=0.0)
