"""Classical calibrated Lambertian photometric stereo.

Given q images under known directional lights, each pixel's scalar
observations i_j = kappa * (l_j . n) form a linear system L b = i with
b parallel to the normal.  Observations are reduced to scalars by dividing
each channel by its light intensity before averaging, which is exact for
Lambertian surfaces of any albedo color.  Shadowed observations are dropped
by a threshold; pixels left with fewer than three usable lights, or a
rank-deficient light matrix, are marked invalid rather than failing the
solve.  This is an independent sanity floor for the learned model, not a
competitor: it requires calibration the network never sees.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .render.dataset import load_scene

__all__ = ["CalibratedProblem", "load_calibrated", "solve_lambertian",
           "solve_scene", "SHADOW_TAU_FRACTION"]

SHADOW_TAU_FRACTION = 0.01
INTENSITY_EPS = 1e-9


@dataclass
class CalibratedProblem:
    images: np.ndarray      # (q, h, w, 3) linear radiance
    directions: np.ndarray  # (q, 3) unit light directions
    intensities: np.ndarray  # (q, 3) per-channel light intensity
    mask: np.ndarray        # (h, w) bool

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.directions = np.asarray(self.directions, dtype=np.float64)
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        q = self.images.shape[0]
        if q < 3:
            raise ConfigError(f"calibrated solve needs q >= 3 images, got {q}")
        if self.images.ndim != 4 or self.images.shape[3] != 3:
            raise ShapeError(f"images must be (q, h, w, 3), got "
                             f"{self.images.shape}")
        if self.directions.shape != (q, 3) or self.intensities.shape != (q, 3):
            raise ShapeError("need one direction and intensity row per image")
        norms = np.linalg.norm(self.directions, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ConfigError("light directions must be unit length")
        if self.mask.shape != self.images.shape[1:3]:
            raise ShapeError(f"mask {self.mask.shape} does not match images")


def load_calibrated(scene_dir) -> CalibratedProblem:
    """Build a problem from a rendered scene directory with lights.txt."""
    scene = load_scene(scene_dir)
    if scene["lights"] is None:
        raise ConfigError(f"{Path(scene_dir)} has no lights.txt; the "
                          "calibrated solver needs directional lighting")
    dirs = np.stack([l.direction for l in scene["lights"]])
    rgb = np.stack([l.rgb for l in scene["lights"]])
    return CalibratedProblem(images=scene["images"], directions=dirs,
                             intensities=rgb, mask=scene["mask"])


def _scalar_observations(problem: CalibratedProblem) -> np.ndarray:
    """(q, h, w) scalar intensities: mean over channels of image/light."""
    weights = problem.intensities  # (q, 3)
    usable = weights > INTENSITY_EPS
    if not usable.any(axis=1).all():
        raise ConfigError("every light needs at least one positive channel")
    ratio = problem.images / np.where(usable, weights, 1.0)[:, None, None, :]
    ratio = ratio * usable[:, None, None, :]
    return ratio.sum(axis=3) / usable.sum(axis=1)[:, None, None]


def solve_lambertian(problem: CalibratedProblem,
                     tau_fraction: float = SHADOW_TAU_FRACTION):
    """Per-pixel least squares on usable observations.

    Returns (normals (h, w, 3), albedo (h, w), valid (h, w) bool); the
    solve runs and is returned in float64 so its residual is limited only
    by the solver.  The shadow threshold is ``tau_fraction`` of the maximum
    scalar observation; pass 0 to keep every observation.
    """
    obs = _scalar_observations(problem)  # (q, h, w)
    h, w = problem.mask.shape
    normals = np.zeros((h, w, 3), dtype=np.float64)
    albedo = np.zeros((h, w), dtype=np.float64)
    valid = np.zeros((h, w), dtype=bool)

    pixels = np.argwhere(problem.mask)
    if len(pixels) == 0:
        return normals, albedo, valid
    obs_px = obs[:, pixels[:, 0], pixels[:, 1]].T  # (n, q)
    tau = tau_fraction * obs_px.max() if tau_fraction > 0 else -np.inf
    usable = obs_px > tau  # (n, q)

    # pixels sharing a shadow pattern share a light matrix; solve per group
    patterns, group_ids = np.unique(usable, axis=0, return_inverse=True)
    for gid, pattern in enumerate(patterns):
        members = np.nonzero(group_ids == gid)[0]
        if pattern.sum() < 3:
            continue
        lights = problem.directions[pattern]  # (k, 3)
        if np.linalg.matrix_rank(lights) < 3:
            continue
        rhs = obs_px[members][:, pattern].T  # (k, m)
        b, *_ = np.linalg.lstsq(lights, rhs, rcond=None)  # (3, m)
        length = np.linalg.norm(b, axis=0)
        ok = length > 0
        rows, cols = pixels[members, 0], pixels[members, 1]
        normals[rows[ok], cols[ok]] = (b[:, ok] / length[ok]).T
        albedo[rows[ok], cols[ok]] = np.pi * length[ok]
        valid[rows[ok], cols[ok]] = True
    return normals, albedo, valid


def solve_scene(scene_dir, tau_fraction: float = SHADOW_TAU_FRACTION):
    """Convenience wrapper: load a directional scene and solve it."""
    return solve_lambertian(load_calibrated(scene_dir), tau_fraction)
