"""Procedural surfaces with orthographic tracing and shadow queries.

World frame: the image plane is the unit square, x right, y up, z toward
the camera; rays travel along -z.  Pixel (row r, col c) at resolution n
sees the point above (x, y) = ((c+0.5)/n, 1-(r+0.5)/n).  Every geometry
answers the same three questions: what surface point and normal each pixel
sees (``trace``), whether a point is shadowed along a direction
(``occluded``), and how to rigidly transform itself (``rotated``,
``rescaled``).
"""

from __future__ import annotations

import numpy as np

from ..errors import RenderError, ShapeError
from .noise import ValueNoise

__all__ = [
    "SphereSet",
    "BlobUnion",
    "HeightField",
    "pixel_grid",
    "fit_to_frame",
    "rotation_matrix",
]

_EPS_T = 1e-5


def pixel_grid(res: int):
    """World (x, y) of every pixel center, row 0 at the top (y near 1)."""
    step = 1.0 / res
    xs = (np.arange(res) + 0.5) * step
    ys = 1.0 - (np.arange(res) + 0.5) * step
    x, y = np.meshgrid(xs, ys)
    return x, y


def rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ShapeError("rotation axis must be nonzero")
    x, y, z = axis / norm
    c, s = np.cos(angle), np.sin(angle)
    k = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) + s * k + (1 - c) * (k @ k)


class SphereSet:
    """Union of spheres; tracing and shadows are exact (analytic)."""

    def __init__(self, centers: np.ndarray, radii: np.ndarray):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.radii = np.atleast_1d(np.asarray(radii, dtype=np.float64))
        if self.centers.shape[0] != self.radii.shape[0]:
            raise ShapeError("one radius per sphere center required")
        if (self.radii <= 0).any():
            raise RenderError("sphere radii must be positive")

    def trace(self, res: int):
        x, y = pixel_grid(res)
        best_z = np.full((res, res), -np.inf)
        best_i = np.full((res, res), -1)
        for i, (c, r) in enumerate(zip(self.centers, self.radii)):
            d2 = (x - c[0]) ** 2 + (y - c[1]) ** 2
            inside = d2 <= r * r
            z = np.where(inside, c[2] + np.sqrt(np.maximum(r * r - d2, 0.0)), -np.inf)
            closer = z > best_z
            best_z = np.where(closer, z, best_z)
            best_i = np.where(closer, i, best_i)
        mask = best_i >= 0
        pts = np.stack([x, y, np.where(mask, best_z, 0.0)], axis=-1)
        normals = np.zeros((res, res, 3))
        for i, (c, r) in enumerate(zip(self.centers, self.radii)):
            sel = best_i == i
            if sel.any():
                normals[sel] = (pts[sel] - c) / r
        return pts, normals, mask

    def occluded(self, points: np.ndarray, direction: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        d = np.asarray(direction, dtype=np.float64)
        hit = np.zeros(p.shape[0], dtype=bool)
        for c, r in zip(self.centers, self.radii):
            oc = p - c
            b = 2.0 * oc @ d
            cc = np.einsum("ij,ij->i", oc, oc) - r * r
            disc = b * b - 4.0 * cc
            ok = disc > 0
            root = np.sqrt(np.maximum(disc, 0.0))
            t1 = (-b - root) / 2.0
            t2 = (-b + root) / 2.0
            hit |= ok & ((t1 > _EPS_T) | (t2 > _EPS_T) & (t1 < _EPS_T))
        return hit

    def rotated(self, rot: np.ndarray) -> "SphereSet":
        pivot = self.centers.mean(axis=0)
        return SphereSet((self.centers - pivot) @ rot.T + pivot, self.radii.copy())

    def rescaled(self, scale: float, shift: np.ndarray) -> "SphereSet":
        return SphereSet(self.centers * scale + shift, self.radii * scale)


class BlobUnion:
    """Isosurface of a sum of Gaussian blobs, ray-marched along -z."""

    def __init__(self, centers, sigmas, iso: float = 0.4,
                 z_steps: int = 64, shadow_steps: int = 48):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.sigmas = np.atleast_1d(np.asarray(sigmas, dtype=np.float64))
        if self.centers.shape[0] != self.sigmas.shape[0]:
            raise ShapeError("one sigma per blob center required")
        if (self.sigmas <= 0).any():
            raise RenderError("blob sigmas must be positive")
        self.iso = float(iso)
        self.z_steps = z_steps
        self.shadow_steps = shadow_steps

    def field(self, pts: np.ndarray) -> np.ndarray:
        """Blob density minus iso level; positive inside the surface."""
        f = -self.iso * np.ones(pts.shape[:-1])
        for c, s in zip(self.centers, self.sigmas):
            d2 = ((pts - c) ** 2).sum(axis=-1)
            f = f + np.exp(-d2 / (s * s))
        return f

    def _field_grad(self, pts: np.ndarray) -> np.ndarray:
        g = np.zeros_like(pts)
        for c, s in zip(self.centers, self.sigmas):
            diff = pts - c
            d2 = (diff ** 2).sum(axis=-1)
            g += np.exp(-d2 / (s * s))[..., None] * (-2.0 / (s * s)) * diff
        return g

    def _z_range(self):
        lo = (self.centers[:, 2] - 3 * self.sigmas).min()
        hi = (self.centers[:, 2] + 3 * self.sigmas).max()
        return lo, hi

    def trace(self, res: int):
        x, y = pixel_grid(res)
        z_lo, z_hi = self._z_range()
        zs = np.linspace(z_hi, z_lo, self.z_steps)
        flat_xy = np.stack([x.ravel(), y.ravel()], axis=-1)
        n_px = flat_xy.shape[0]
        prev_z = np.full(n_px, z_hi)
        hit_lo = np.zeros(n_px)
        hit_hi = np.zeros(n_px)
        found = np.zeros(n_px, dtype=bool)
        for z in zs:
            pts = np.concatenate([flat_xy, np.full((n_px, 1), z)], axis=1)
            inside = self.field(pts) >= 0.0
            first = inside & ~found
            hit_lo[first] = z
            hit_hi[first] = prev_z[first]
            found |= first
            prev_z = np.full(n_px, z)
        # bisection refinement between the last outside and first inside z
        lo, hi = hit_lo.copy(), hit_hi.copy()
        for _ in range(10):
            mid = 0.5 * (lo + hi)
            pts = np.concatenate([flat_xy, mid[:, None]], axis=1)
            inside = self.field(pts) >= 0.0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        z_hit = lo
        pts = np.concatenate([flat_xy, z_hit[:, None]], axis=1)
        grad = self._field_grad(pts)
        normals = -grad
        norms = np.linalg.norm(normals, axis=-1, keepdims=True)
        normals = normals / np.maximum(norms, 1e-12)
        # visible surface cannot face away from an orthographic camera
        normals[:, 2] = np.maximum(normals[:, 2], 0.0)
        normals /= np.maximum(np.linalg.norm(normals, axis=-1, keepdims=True), 1e-12)
        mask = found.reshape(res, res)
        pts_img = pts.reshape(res, res, 3)
        pts_img[~mask] = 0.0
        normals_img = normals.reshape(res, res, 3)
        normals_img[~mask] = 0.0
        return pts_img, normals_img, mask

    def occluded(self, points: np.ndarray, direction: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        d = np.asarray(direction, dtype=np.float64)
        span = self.sigmas.max() * 6 + np.ptp(self.centers, axis=0).max()
        ts = np.linspace(0.04 * span, span, self.shadow_steps)
        hit = np.zeros(p.shape[0], dtype=bool)
        live = np.arange(p.shape[0])
        for t in ts:
            q = p[live] + t * d
            inside = self.field(q) >= 0.0
            hit[live[inside]] = True
            live = live[~inside]
            if live.size == 0:
                break
        return hit

    def rotated(self, rot: np.ndarray) -> "BlobUnion":
        pivot = self.centers.mean(axis=0)
        return BlobUnion((self.centers - pivot) @ rot.T + pivot,
                         self.sigmas.copy(), self.iso,
                         self.z_steps, self.shadow_steps)

    def rescaled(self, scale: float, shift: np.ndarray) -> "BlobUnion":
        return BlobUnion(self.centers * scale + shift, self.sigmas * scale,
                         self.iso, self.z_steps, self.shadow_steps)


class HeightField:
    """Terrain z = base + amplitude * noise(x, y), full-frame silhouette.

    The elevation comes from hashed value noise, so the surface is defined
    on the whole plane and in-plane rotation just rotates the query
    coordinates; normals use the analytic noise gradient.
    """

    def __init__(self, seed: int, amplitude: float = 0.18, base_z: float = 0.0,
                 octaves: int = 3, base_freq: float = 3.0, angle: float = 0.0,
                 shadow_steps: int = 64):
        self.seed = int(seed)
        self.amplitude = float(amplitude)
        self.base_z = float(base_z)
        self.octaves = octaves
        self.base_freq = base_freq
        self.angle = float(angle)
        self.shadow_steps = shadow_steps
        self._noise = ValueNoise(seed, octaves, base_freq)
        self._shadow_cache = None

    def _to_local(self, x, y):
        c, s = np.cos(self.angle), np.sin(self.angle)
        xl = c * (x - 0.5) + s * (y - 0.5) + 0.5
        yl = -s * (x - 0.5) + c * (y - 0.5) + 0.5
        return xl, yl

    def height(self, x, y):
        xl, yl = self._to_local(x, y)
        v = self._noise.value(xl, yl)
        return self.base_z + self.amplitude * v

    def height_grad(self, x, y):
        xl, yl = self._to_local(x, y)
        v, gx, gy = self._noise.value_grad(xl, yl)
        c, s = np.cos(self.angle), np.sin(self.angle)
        # chain rule through the in-plane rotation of the query
        dx = self.amplitude * (gx * c - gy * s)
        dy = self.amplitude * (gx * s + gy * c)
        return self.base_z + self.amplitude * v, dx, dy

    def trace(self, res: int):
        x, y = pixel_grid(res)
        z, dx, dy = self.height_grad(x, y)
        pts = np.stack([x, y, z], axis=-1)
        normals = np.stack([-dx, -dy, np.ones_like(z)], axis=-1)
        normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
        mask = np.ones((res, res), dtype=bool)
        return pts, normals, mask

    def _shadow_height(self, x, y):
        """Nearest-sample height from a cached grid over [-0.5, 1.5]^2.

        Shadow marching evaluates the terrain tens of millions of times per
        environment-lit image; the cache trades exact noise evaluation for a
        192x192 lookup table (the trace itself stays exact).
        """
        if self._shadow_cache is None:
            n = 192
            xs = np.linspace(-0.5, 1.5, n)
            gx, gy = np.meshgrid(xs, xs)
            self._shadow_cache = self.height(gx, gy)
        n = self._shadow_cache.shape[0]
        ci = np.clip(((x + 0.5) * (n - 1) / 2.0).round().astype(int), 0, n - 1)
        ri = np.clip(((y + 0.5) * (n - 1) / 2.0).round().astype(int), 0, n - 1)
        return self._shadow_cache[ri, ci]

    def occluded(self, points: np.ndarray, direction: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        d = np.asarray(direction, dtype=np.float64)
        # rays without real elevation cannot clear a continuous terrain
        if d[2] <= 0.02:
            return np.ones(p.shape[0], dtype=bool)
        z_max = self.base_z + self.amplitude
        t_max = max(min(2.0, (z_max - p[:, 2].min()) / d[2] + 1e-3), 1e-2)
        ts = np.linspace(0.01, t_max, self.shadow_steps)
        hit = np.zeros(p.shape[0], dtype=bool)
        live = np.arange(p.shape[0])
        for t in ts:
            q = p[live] + t * d
            below = q[:, 2] < self._shadow_height(q[:, 0], q[:, 1])
            hit[live[below]] = True
            live = live[~below]
            if live.size == 0:
                break
        return hit

    def rotated(self, rot: np.ndarray) -> "HeightField":
        # a terrain only admits in-plane rotation; extract the z component
        angle = float(np.arctan2(rot[1, 0], rot[0, 0]))
        return HeightField(self.seed, self.amplitude, self.base_z,
                           self.octaves, self.base_freq, self.angle + angle,
                           self.shadow_steps)

    def rescaled(self, scale: float, shift: np.ndarray) -> "HeightField":
        return self  # full-frame by construction


def fit_to_frame(geometry, probe_res: int = 96):
    """Rescale so the silhouette's longer extent spans the unit frame."""
    if isinstance(geometry, HeightField):
        return geometry
    _, _, mask = geometry.trace(probe_res)
    if not mask.any():
        raise RenderError("object silhouette is empty; cannot fit to frame")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    step = 1.0 / probe_res
    x_lo, x_hi = cols[0] * step, (cols[-1] + 1) * step
    y_lo, y_hi = 1.0 - (rows[-1] + 1) * step, 1.0 - rows[0] * step
    extent = max(x_hi - x_lo, y_hi - y_lo)
    scale = 1.0 / extent
    center = np.array([(x_lo + x_hi) / 2, (y_lo + y_hi) / 2, 0.0])
    target = np.array([0.5, 0.5, 0.0])
    return geometry.rescaled(scale, target - center * scale)
