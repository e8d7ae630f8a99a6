"""Training-time augmentation of rendered samples.

Spatial transforms are applied identically to every image, the mask, and
the ground-truth normal map, with the normal components remapped so the
vectors still describe the transformed surface: a horizontal flip negates
n_x, a vertical flip negates n_y, and a 90-degree rotation maps
(n_x, n_y) -> (-n_y, n_x).  Color swapping permutes the RGB channels of
the images only.  Each augmentation fires independently with p = 0.5.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

__all__ = ["augment_sample", "hflip", "vflip", "rot90", "color_swap"]


def hflip(images, mask, normals):
    images = images[:, :, ::-1, :].copy()
    mask = mask[:, ::-1].copy()
    normals = normals[:, ::-1, :].copy()
    normals[..., 0] = -normals[..., 0]
    return images, mask, normals


def vflip(images, mask, normals):
    images = images[:, ::-1, :, :].copy()
    mask = mask[::-1, :].copy()
    normals = normals[::-1, :, :].copy()
    normals[..., 1] = -normals[..., 1]
    return images, mask, normals


def rot90(images, mask, normals):
    """Quarter-turn counterclockwise (square frames only)."""
    if images.shape[1] != images.shape[2]:
        raise ShapeError("90-degree rotation needs square images")
    images = np.rot90(images, k=1, axes=(1, 2)).copy()
    mask = np.rot90(mask, k=1).copy()
    normals = np.rot90(normals, k=1, axes=(0, 1)).copy()
    nx = normals[..., 0].copy()
    normals[..., 0] = -normals[..., 1]
    normals[..., 1] = nx
    return images, mask, normals


def color_swap(images, perm):
    return images[..., list(perm)].copy()


def augment_sample(images, mask, normals, rng: np.random.Generator):
    """Randomized augmentation; the draw order is part of the contract."""
    if rng.random() < 0.5:
        images, mask, normals = hflip(images, mask, normals)
    if rng.random() < 0.5:
        images, mask, normals = vflip(images, mask, normals)
    if rng.random() < 0.5:
        images, mask, normals = rot90(images, mask, normals)
    if rng.random() < 0.5:
        images = color_swap(images, rng.permutation(3))
    return images, mask, normals
