"""Procedural scene rendering and dataset generation."""

from .augment import augment_sample
from .dataset import (
    ENTROPY_THRESHOLD,
    generate_dataset,
    generate_scene,
    load_scene,
    scene_dirs,
    write_scene,
)
from .geometry import BlobUnion, HeightField, SphereSet, fit_to_frame, rotation_matrix
from .lighting import (
    DirectionalLight,
    EnvironmentLight,
    MixtureLight,
    env_radiance,
    env_sample_directions,
    random_directional,
    random_environment,
    variant_of,
)
from .materials import MaterialField
from .noise import ValueNoise
from .scene import EXPOSURE_TARGET, normal_entropy, render_image, render_views
from .shading import brdf, shade_points

__all__ = [
    "SphereSet",
    "BlobUnion",
    "HeightField",
    "fit_to_frame",
    "rotation_matrix",
    "MaterialField",
    "ValueNoise",
    "DirectionalLight",
    "EnvironmentLight",
    "MixtureLight",
    "variant_of",
    "env_radiance",
    "env_sample_directions",
    "random_directional",
    "random_environment",
    "brdf",
    "shade_points",
    "render_image",
    "render_views",
    "normal_entropy",
    "EXPOSURE_TARGET",
    "augment_sample",
    "generate_dataset",
    "generate_scene",
    "write_scene",
    "load_scene",
    "scene_dirs",
    "ENTROPY_THRESHOLD",
]
