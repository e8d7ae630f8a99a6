"""Point shading: a diffuse + normalized Blinn-Phong BRDF with shadow rays.

The reflectance model covers the three material axes (albedo, roughness,
metallic) with bounded energy:

    f = (1 - metallic) * base / pi
      + k_s * spec_color * (a + 2) / (2 pi) * max(0, n.h)^a

    a          = 2 / max(roughness, eps)^2 - 2
    k_s        = metallic + (1 - metallic) * 0.08 * (1 - roughness)
    spec_color = lerp(white, base, metallic)

At roughness 1 and metallic 0 the specular weight k_s vanishes and the
model reduces exactly to Lambertian base/pi.
"""

from __future__ import annotations

import numpy as np

from ..errors import RenderError
from .lighting import (
    DirectionalLight,
    EnvironmentLight,
    MixtureLight,
    env_radiance,
    env_sample_directions,
)

__all__ = ["brdf", "shade_points"]

_VIEW = np.array([0.0, 0.0, 1.0])
_ROUGH_EPS = 1e-3


def brdf(base: np.ndarray, rough: np.ndarray, metal: np.ndarray,
         normals: np.ndarray, wi: np.ndarray) -> np.ndarray:
    """Reflectance toward the orthographic camera for incident direction wi.

    base (p, 3), rough/metal (p,), normals (p, 3); wi either (3,) shared or
    (p, 3) per point.  Returns (p, 3).
    """
    wi = np.asarray(wi, dtype=np.float64)
    h = wi + _VIEW
    h = h / np.linalg.norm(h, axis=-1, keepdims=True)
    ndoth = np.clip((normals * h).sum(axis=-1), 0.0, 1.0)
    alpha = 2.0 / np.maximum(rough, _ROUGH_EPS) ** 2 - 2.0
    ks = metal + (1.0 - metal) * 0.08 * (1.0 - rough)
    spec_color = (1.0 - metal)[:, None] + metal[:, None] * base
    diffuse = (1.0 - metal)[:, None] * base / np.pi
    lobe = (alpha + 2.0) / (2.0 * np.pi) * ndoth ** alpha
    return diffuse + (ks * lobe)[:, None] * spec_color


def _direct(points, normals, base, rough, metal, light: DirectionalLight,
            geometry, with_shadows: bool) -> np.ndarray:
    cosine = (normals @ light.direction).clip(min=0.0)
    out = np.zeros_like(base)
    lit = cosine > 0.0
    if not lit.any():
        return out
    if with_shadows:
        shadowed = geometry.occluded(points[lit], light.direction)
        vis = ~shadowed
    else:
        vis = np.ones(int(lit.sum()), dtype=bool)
    f = brdf(base[lit], rough[lit], metal[lit], normals[lit], light.direction)
    out[lit] = f * (cosine[lit] * vis)[:, None] * light.rgb
    return out


def _environment(points, normals, base, rough, metal, env: EnvironmentLight,
                 geometry, with_shadows: bool) -> np.ndarray:
    dirs, d_omega = env_sample_directions()
    radiance = env_radiance(env, dirs)
    out = np.zeros_like(base)
    for wi, rad in zip(dirs, radiance):
        cosine = (normals @ wi).clip(min=0.0)
        lit = cosine > 0.0
        if not lit.any():
            continue
        if with_shadows:
            vis = ~geometry.occluded(points[lit], wi)
        else:
            vis = np.ones(int(lit.sum()), dtype=bool)
        f = brdf(base[lit], rough[lit], metal[lit], normals[lit], wi)
        out[lit] += f * (cosine[lit] * vis)[:, None] * rad * d_omega
    return out


def shade_points(points, normals, base, rough, metal, lighting,
                 geometry, with_shadows: bool = True) -> np.ndarray:
    """Radiance of flat point arrays (p, ...) under one lighting condition."""
    if isinstance(lighting, DirectionalLight):
        return _direct(points, normals, base, rough, metal, lighting,
                       geometry, with_shadows)
    if isinstance(lighting, EnvironmentLight):
        return _environment(points, normals, base, rough, metal, lighting,
                            geometry, with_shadows)
    if isinstance(lighting, MixtureLight):
        return (_direct(points, normals, base, rough, metal,
                        lighting.directional, geometry, with_shadows)
                + _environment(points, normals, base, rough, metal,
                               lighting.environment, geometry, with_shadows))
    raise RenderError(f"unknown lighting condition {type(lighting).__name__}")
