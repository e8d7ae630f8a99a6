"""Hashed value noise with an analytic gradient.

The lattice values come from a splitmix-style integer hash of the cell
coordinates, so the noise is a pure function of (seed, x, y) over the whole
plane: no stored grid, no domain bounds, and rotating or scaling the query
coordinates transforms the field exactly.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ValueNoise", "fractal_noise", "fractal_noise_grad"]

_U64 = np.uint64
_K1 = _U64(0x9E3779B97F4A7C15)
_K2 = _U64(0xC2B2AE3D27D4EB4F)
_K3 = _U64(0xD6E8FEB86659FD93)


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Uniform [0,1) value for each integer lattice point."""
    seed_term = _U64((seed * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)
    # the multiplies wrap mod 2^64 on purpose (numpy warns only for 0-d input)
    with np.errstate(over="ignore"):
        h = np.atleast_1d(ix).astype(np.int64).view(_U64) * _K1
        h = h ^ (np.atleast_1d(iy).astype(np.int64).view(_U64) * _K2)
        h = h ^ seed_term
        h = h ^ (h >> _U64(30))
        h = h * _U64(0xBF58476D1CE4E5B9)
        h = h ^ (h >> _U64(27))
        h = h * _U64(0x94D049BB133111EB)
        h = h ^ (h >> _U64(31))
    out = (h >> _U64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return out if np.ndim(ix) else out[0]


def _octave(x, y, seed):
    """One noise octave and its gradient: quintic-faded bilinear lattice."""
    ix = np.floor(x)
    iy = np.floor(y)
    fx = x - ix
    fy = y - iy
    ix = ix.astype(np.int64)
    iy = iy.astype(np.int64)
    v00 = _hash01(ix, iy, seed)
    v10 = _hash01(ix + 1, iy, seed)
    v01 = _hash01(ix, iy + 1, seed)
    v11 = _hash01(ix + 1, iy + 1, seed)
    sx = fx * fx * fx * (fx * (fx * 6 - 15) + 10)
    sy = fy * fy * fy * (fy * (fy * 6 - 15) + 10)
    dsx = 30 * fx * fx * (fx - 1) * (fx - 1)
    dsy = 30 * fy * fy * (fy - 1) * (fy - 1)
    ax = v10 - v00
    bx = v11 - v01
    vx0 = v00 + sx * ax
    vx1 = v01 + sx * bx
    value = vx0 + sy * (vx1 - vx0)
    ddx = dsx * (ax + sy * (bx - ax))
    ddy = dsy * (vx1 - vx0)
    return value, ddx, ddy


class ValueNoise:
    """Fractal (octave-summed) value noise over the plane, output in [0,1]."""

    def __init__(self, seed: int, octaves: int = 3, base_freq: float = 4.0,
                 gain: float = 0.5):
        self.seed = int(seed)
        self.octaves = int(octaves)
        self.base_freq = float(base_freq)
        self.gain = float(gain)
        self._norm = sum(gain ** o for o in range(octaves))

    def value(self, x, y) -> np.ndarray:
        v, _, _ = self.value_grad(x, y)
        return v

    def value_grad(self, x, y):
        """Noise value and its (d/dx, d/dy) at each query point."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        total = np.zeros_like(x)
        gx = np.zeros_like(x)
        gy = np.zeros_like(x)
        amp = 1.0
        freq = self.base_freq
        for o in range(self.octaves):
            v, ddx, ddy = _octave(x * freq, y * freq, self.seed + 101 * o)
            total += amp * v
            gx += amp * freq * ddx
            gy += amp * freq * ddy
            amp *= self.gain
            freq *= 2.0
        inv = 1.0 / self._norm
        return total * inv, gx * inv, gy * inv


def fractal_noise(seed, x, y, octaves=3, base_freq=4.0, gain=0.5):
    return ValueNoise(seed, octaves, base_freq, gain).value(x, y)


def fractal_noise_grad(seed, x, y, octaves=3, base_freq=4.0, gain=0.5):
    return ValueNoise(seed, octaves, base_freq, gain).value_grad(x, y)
