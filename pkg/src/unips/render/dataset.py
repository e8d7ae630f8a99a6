"""Dataset generation: procedural scenes rendered to a directory layout.

Layout per scene: ``scene_%04d/`` with ``img_%02d.pfm`` (linear HDR),
``normal.pfm``, ``mask.png`` (0/255), ``meta.json``, and for all-directional
scenes a ``lights.txt`` with one ``x y z r g b`` row per image.  Every
byte of output is a pure function of (config, seed): each object draws
from its own counter-based stream, and all file formats are deterministic.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import imgio
from ..errors import RenderError
from .geometry import BlobUnion, HeightField, SphereSet, fit_to_frame
from .lighting import (
    DirectionalLight,
    EnvironmentLight,
    MixtureLight,
    random_directional,
    random_environment,
    variant_of,
)
from .materials import MaterialField
from .scene import EXPOSURE_TARGET, normal_entropy, render_views

__all__ = [
    "generate_dataset",
    "make_test_set",
    "generate_scene",
    "write_scene",
    "load_scene",
    "scene_dirs",
    "random_rotation",
    "sample_geometry",
    "ENTROPY_THRESHOLD",
    "PNG16_RANGE",
    "LIGHTING_KINDS",
]

ENTROPY_THRESHOLD = 4.0
MAX_ROTATION_RETRIES = 8
PNG16_RANGE = 2.0  # linear radiance mapped to [0, 65535] over [0, range]

LIGHTING_KINDS = ("directional", "environment", "mixture")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (via a random unit quaternion)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def sample_geometry(rng: np.random.Generator, kind: str | None = None):
    """Draw one geometry from the procedural pool."""
    if kind is None:
        kind = ("spheres", "blobs", "terrain")[rng.integers(3)]
    if kind == "spheres":
        k = int(rng.integers(1, 5))
        centers = np.stack([rng.uniform(0.25, 0.75, size=k),
                            rng.uniform(0.25, 0.75, size=k),
                            rng.uniform(0.35, 0.65, size=k)], axis=1)
        radii = rng.uniform(0.08, 0.26, size=k)
        return kind, SphereSet(centers, radii)
    if kind == "blobs":
        k = int(rng.integers(2, 6))
        centers = np.stack([rng.uniform(0.3, 0.7, size=k),
                            rng.uniform(0.3, 0.7, size=k),
                            rng.uniform(0.4, 0.6, size=k)], axis=1)
        sigmas = rng.uniform(0.09, 0.2, size=k)
        return kind, BlobUnion(centers, sigmas)
    if kind == "terrain":
        return kind, HeightField(seed=int(rng.integers(1 << 62)),
                                 amplitude=float(rng.uniform(0.1, 0.28)),
                                 octaves=3,
                                 base_freq=float(rng.uniform(2.0, 4.0)))
    raise RenderError(f"unknown geometry kind '{kind}'")


def _sample_lights(rng: np.random.Generator, kind: str, q: int, seed: int):
    if kind == "directional":
        return [random_directional(rng) for _ in range(q)]
    if kind == "environment":
        env = random_environment(rng, seed=seed)
        return [EnvironmentLight(env.grid, rotation=float(rng.uniform(0, 2 * np.pi)))
                for _ in range(q)]
    if kind == "mixture":
        env = random_environment(rng, seed=seed)
        return [MixtureLight(
            random_directional(rng),
            EnvironmentLight(env.grid, rotation=float(rng.uniform(0, 2 * np.pi))))
            for _ in range(q)]
    raise RenderError(f"unknown lighting kind '{kind}'")


def generate_scene(seed: int, index: int, q: int, res: int,
                   lighting: str = "random",
                   entropy_threshold: float = ENTROPY_THRESHOLD,
                   max_retries: int = MAX_ROTATION_RETRIES,
                   geometry_kind: str | None = None,
                   uniform_lighting: bool = False):
    """Render one object; returns None if no rotation clears the entropy bar."""
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF],
        dtype=np.uint64)))
    kind, base_geometry = sample_geometry(rng, geometry_kind)
    material = MaterialField.random(rng, seed=int(rng.integers(1 << 62)))
    light_kind = lighting
    if lighting == "random":
        light_kind = LIGHTING_KINDS[rng.integers(3)]

    accepted = None
    for _ in range(max_retries):
        geometry = fit_to_frame(base_geometry.rotated(random_rotation(rng)))
        trace = geometry.trace(res)
        _, normals, mask = trace
        if not mask.any():
            continue
        entropy = normal_entropy(normals, mask)
        if entropy > entropy_threshold:
            accepted = (geometry, trace, entropy)
            break
    if accepted is None:
        return None
    geometry, trace, entropy = accepted

    lights = _sample_lights(rng, light_kind, q, seed=int(rng.integers(1 << 62)))
    if uniform_lighting:
        lights = [lights[0]] * q
    images, scales, normals, mask = render_views(
        geometry, material, lights, res, trace=trace)
    return {
        "images": images,
        "scales": scales,
        "normals": normals,
        "mask": mask,
        "lights": lights,
        "lighting": light_kind,
        "geometry_kind": kind,
        "entropy": entropy,
        "seed": seed,
        "index": index,
    }


def write_scene(scene_dir, sample, png16: bool = False) -> None:
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    images = sample["images"]
    for i, img in enumerate(images):
        imgio.write_pfm(scene_dir / f"img_{i:02d}.pfm", img)
        if png16:
            coded = np.clip(img / PNG16_RANGE, 0.0, 1.0)
            imgio.write_png(scene_dir / f"img_{i:02d}.png",
                            np.round(coded * 65535).astype(np.uint16))
    imgio.write_pfm(scene_dir / "normal.pfm", sample["normals"])
    imgio.write_mask(scene_dir / "mask.png", sample["mask"])
    meta = {
        "seed": int(sample["seed"]),
        "index": int(sample["index"]),
        "lighting": sample["lighting"],
        "geometry": sample["geometry_kind"],
        "entropy": round(float(sample["entropy"]), 6),
        "exposure_scales": [round(float(s), 9) for s in sample["scales"]],
        "q": int(len(images)),
        "resolution": int(images.shape[1]),
        "exposure_target": EXPOSURE_TARGET,
        "png16_range": PNG16_RANGE if png16 else None,
    }
    (scene_dir / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")
    lights = sample["lights"]
    if all(variant_of(l) == "directional" for l in lights):
        # intensities are written post-exposure so the rows describe the
        # stored images directly
        rows = []
        for l, scale in zip(lights, sample["scales"]):
            vals = list(l.direction) + [v * float(scale) for v in l.rgb]
            rows.append(" ".join(f"{v:.9g}" for v in vals))
        (scene_dir / "lights.txt").write_text("\n".join(rows) + "\n")


def load_scene(scene_dir):
    """Read a scene directory back into arrays."""
    scene_dir = Path(scene_dir)
    img_paths = sorted(scene_dir.glob("img_*.pfm"))
    if not img_paths:
        raise RenderError(f"no images found in {scene_dir}")
    images = np.stack([imgio.read_pfm(p) for p in img_paths])
    mask = imgio.read_mask(scene_dir / "mask.png")
    normals = None
    if (scene_dir / "normal.pfm").exists():
        normals = imgio.read_pfm(scene_dir / "normal.pfm")
    meta = json.loads((scene_dir / "meta.json").read_text())
    lights = None
    lights_path = scene_dir / "lights.txt"
    if lights_path.exists():
        rows = np.loadtxt(lights_path, ndmin=2)
        lights = [DirectionalLight(r[:3] / np.linalg.norm(r[:3]), r[3:6])
                  for r in rows]
    return {"images": images, "mask": mask, "normals": normals,
            "meta": meta, "lights": lights, "dir": scene_dir}


def scene_dirs(root) -> list[Path]:
    return sorted(Path(root).glob("scene_[0-9][0-9][0-9][0-9]"))


def _render_object(args):
    index, kwargs = args
    return index, generate_scene(index=index, **kwargs)


def generate_dataset(out_dir, n_objects: int, q: int, res: int,
                     lighting: str = "random", seed: int = 0,
                     png16: bool = False,
                     entropy_threshold: float = ENTROPY_THRESHOLD,
                     max_retries: int = MAX_ROTATION_RETRIES,
                     geometry_kind: str | None = None,
                     uniform_lighting: bool = False,
                     workers: int = 1,
                     log=None) -> dict:
    """Render ``n_objects`` attempts into ``out_dir``; returns the manifest.

    Each object is a pure function of (seed, index), so rendering may fan
    out over ``workers`` processes; writes stay in the main process in
    index order and the output bytes do not depend on the worker count.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kwargs = dict(seed=seed, q=q, res=res, lighting=lighting,
                  entropy_threshold=entropy_threshold,
                  max_retries=max_retries, geometry_kind=geometry_kind,
                  uniform_lighting=uniform_lighting)
    jobs = [(index, kwargs) for index in range(n_objects)]
    if workers > 1 and n_objects > 1:
        import multiprocessing

        with multiprocessing.Pool(min(workers, n_objects)) as pool:
            results = pool.imap(_render_object, jobs, chunksize=1)
            results = list(results)
    else:
        results = [_render_object(job) for job in jobs]

    emitted = []
    skipped = []
    for index, sample in results:
        if sample is None:
            skipped.append(index)
            if log is not None:
                log(f"object {index}: entropy below {entropy_threshold} "
                    f"after {max_retries} rotations, skipped")
            continue
        scene_dir = out_dir / f"scene_{len(emitted):04d}"
        write_scene(scene_dir, sample, png16=png16)
        emitted.append(scene_dir.name)
        if log is not None:
            log(f"object {index}: wrote {scene_dir.name} "
                f"({sample['lighting']}, entropy {sample['entropy']:.2f})")
    manifest = {
        "seed": int(seed),
        "n_objects": int(n_objects),
        "q": int(q),
        "resolution": int(res),
        "lighting": lighting,
        "entropy_threshold": entropy_threshold,
        "scenes": emitted,
        "skipped_objects": skipped,
    }
    (out_dir / "dataset.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def make_test_set(out_dir, n_objects: int, q: int, res: int, seed: int = 0,
                  workers: int = 1, log=None) -> dict:
    """Held-out set: each object rendered under all three lighting kinds.

    With a fixed lighting kind the stream draws for geometry, material, and
    rotation are identical across kinds, so subdirectories ``directional/``,
    ``environment`` and ``mixture/`` contain the same objects and numbering,
    differing only in illumination.
    """
    out_dir = Path(out_dir)
    manifests = {}
    for kind in LIGHTING_KINDS:
        manifests[kind] = generate_dataset(
            out_dir / kind, n_objects, q, res, lighting=kind, seed=seed,
            workers=workers, log=log)
    combined = {
        "seed": int(seed),
        "n_objects": int(n_objects),
        "q": int(q),
        "resolution": int(res),
        "variants": {k: m["scenes"] for k, m in manifests.items()},
        "skipped_objects": manifests[LIGHTING_KINDS[0]]["skipped_objects"],
    }
    (out_dir / "dataset.json").write_text(
        json.dumps(combined, indent=2, sort_keys=True) + "\n")
    return combined
