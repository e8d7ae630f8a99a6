"""Scene rendering: trace once, shade per lighting condition, expose.

Exposure mimics an auto-exposing camera: each image is scaled so that its
mean radiance over the object mask (channels pooled) hits a fixed target,
and the scale is reported so the physical radiometry can be recovered.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptyMaskError, RenderError
from .shading import shade_points

__all__ = ["render_image", "render_views", "normal_entropy", "EXPOSURE_TARGET"]

EXPOSURE_TARGET = 0.3


def _expose(image: np.ndarray, mask: np.ndarray, target: float):
    mean = float(image[mask].mean())
    if not np.isfinite(mean) or mean <= 0.0:
        raise RenderError("cannot expose an all-black render")
    scale = target / mean
    return image * scale, scale


def render_image(geometry, material, lighting, res: int,
                 exposure_target: float = EXPOSURE_TARGET,
                 autoexpose: bool = True, with_shadows: bool = True):
    """One HDR image of the scene plus its exposure scale.

    Returns (image (res, res, 3), scale, normals, mask).
    """
    points, normals, mask = geometry.trace(res)
    return render_with_trace(geometry, material, lighting, points, normals,
                             mask, exposure_target, autoexpose, with_shadows)


def render_with_trace(geometry, material, lighting, points, normals, mask,
                      exposure_target: float = EXPOSURE_TARGET,
                      autoexpose: bool = True, with_shadows: bool = True):
    if not mask.any():
        raise EmptyMaskError("object is entirely off-camera")
    p = points[mask]
    n = normals[mask]
    base, rough, metal = material.sample(p[:, 0], p[:, 1])
    rgb = shade_points(p, n, base, rough, metal, lighting, geometry,
                       with_shadows)
    image = np.zeros(mask.shape + (3,), dtype=np.float64)
    image[mask] = rgb
    scale = 1.0
    if autoexpose:
        image, scale = _expose(image, mask, exposure_target)
    return image.astype(np.float32), scale, normals, mask


def render_views(geometry, material, lights, res: int,
                 exposure_target: float = EXPOSURE_TARGET,
                 autoexpose: bool = True, with_shadows: bool = True,
                 trace=None):
    """Render the same scene under each lighting condition in ``lights``.

    The geometry is traced once and reused (pass ``trace`` to reuse an
    existing one).  Returns (images (q, res, res, 3), scales (q,),
    normals (res, res, 3), mask (res, res)).
    """
    points, normals, mask = geometry.trace(res) if trace is None else trace
    images = []
    scales = []
    for light in lights:
        img, scale, _, _ = render_with_trace(
            geometry, material, light, points, normals, mask,
            exposure_target, autoexpose, with_shadows)
        images.append(img)
        scales.append(scale)
    return np.stack(images), np.array(scales), normals.astype(np.float32), mask


def normal_entropy(normals: np.ndarray, mask: np.ndarray,
                   bins: int = 8) -> float:
    """Shannon entropy (bits) of masked normals over an (n_x, n_y) histogram.

    The histogram uses a bins x bins grid over [-1, 1]^2; empty masks are an
    error rather than zero entropy.
    """
    valid = np.asarray(mask, dtype=bool)
    if not valid.any():
        raise EmptyMaskError("entropy needs at least one valid normal")
    nx = normals[valid][:, 0]
    ny = normals[valid][:, 1]
    hist, _, _ = np.histogram2d(nx, ny, bins=bins, range=[[-1, 1], [-1, 1]])
    p = hist.ravel() / hist.sum()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())
