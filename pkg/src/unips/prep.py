"""Input preprocessing: mean normalization, bounding crop, canonical resize.

Order matters and is part of the contract: each image is first divided by
its masked mean (making the pipeline exactly invariant to per-image
exposure scale), then the whole stack is cropped to the mask's bounding box
plus a margin, then resized to the canonical s x s resolution and
concatenated with the resized mask as a fourth channel.

The pixel-center alignment used for the resize (and by the decoder's
context sampler) maps source index i in a length-n axis to target
coordinate (i + 0.5) * m / n - 0.5 in a length-m axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateImageError, EmptyMaskError, ShapeError
from .nd.functional import resize_array

__all__ = [
    "PreprocessedStack",
    "normalize_by_mean",
    "crop_bounding",
    "to_canonical",
    "preprocess",
]

CROP_MARGIN = 4


@dataclass
class PreprocessedStack:
    """Everything the network needs from one capture.

    canonical: (q, s, s, 4) float32 encoder input (RGB + mask channel);
    images: (q, ch, cw, 3) mean-normalized crop at original resolution;
    mask: (ch, cw) bool crop-local mask;
    crop: (r0, r1, c0, c1) rectangle in the original frame (end-exclusive);
    original_hw: size of the uncropped frame.
    """

    canonical: np.ndarray
    images: np.ndarray
    mask: np.ndarray
    crop: tuple[int, int, int, int]
    original_hw: tuple[int, int]

    @property
    def q(self) -> int:
        return self.canonical.shape[0]

    @property
    def s(self) -> int:
        return self.canonical.shape[1]


def normalize_by_mean(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Divide by the mean over masked pixels (all channels pooled)."""
    if not mask.any():
        raise EmptyMaskError("cannot normalize with an empty mask")
    mean = image[mask].mean(dtype=image.dtype)
    if not np.isfinite(mean) or mean <= 0:
        raise DegenerateImageError(f"masked image mean {mean} is not positive")
    return image / mean


def crop_bounding(images: np.ndarray, mask: np.ndarray,
                  margin: int = CROP_MARGIN):
    """Crop stack and mask to the mask's bounding box plus a margin.

    Returns (cropped images, cropped mask, (r0, r1, c0, c1)).
    """
    if not mask.any():
        raise EmptyMaskError("cannot crop with an empty mask")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = mask.shape
    r0 = max(int(rows[0]) - margin, 0)
    r1 = min(int(rows[-1]) + 1 + margin, h)
    c0 = max(int(cols[0]) - margin, 0)
    c1 = min(int(cols[-1]) + 1 + margin, w)
    return images[:, r0:r1, c0:c1], mask[r0:r1, c0:c1], (r0, r1, c0, c1)


def to_canonical(images: np.ndarray, mask: np.ndarray, s: int) -> np.ndarray:
    """Bilinear resize to s x s and append the resized mask channel."""
    if s < 16 or s % 4:
        raise ShapeError(f"canonical resolution must be >= 16 and divisible by 4, got {s}")
    q = images.shape[0]
    out = np.empty((q, s, s, 4), dtype=np.float32)
    mask_f = mask.astype(np.float32)
    mask_r = np.clip(resize_array(mask_f, s, s), 0.0, 1.0)
    for i in range(q):
        out[i, :, :, :3] = resize_array(images[i].astype(np.float32), s, s)
        out[i, :, :, 3] = mask_r
    return out


def preprocess(images: np.ndarray, mask: np.ndarray, s: int,
               margin: int = CROP_MARGIN) -> PreprocessedStack:
    """Full pipeline: normalize each image, crop the stack, resize."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[3] != 3:
        raise ShapeError(f"expected (q, h, w, 3) images, got {images.shape}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != images.shape[1:3]:
        raise ShapeError(
            f"mask {mask.shape} does not match images {images.shape[1:3]}")
    original_hw = mask.shape
    normed = np.stack([normalize_by_mean(im, mask) for im in images])
    cropped, mask_c, rect = crop_bounding(normed, mask, margin)
    canonical = to_canonical(cropped, mask_c, s)
    return PreprocessedStack(canonical=canonical, images=cropped,
                             mask=mask_c, crop=rect, original_hw=original_hw)
