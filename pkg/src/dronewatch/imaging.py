"""Grayscale image primitives: luminance, cropping, bilinear warps, PNG I/O.

All in-memory images are numpy arrays indexed (row, col) with values in
[0, 1]. Sampling coordinates within 1e-9 of a grid point are snapped to
it, so grid-aligned warps (identity resize, quarter turns) are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FRAME_SIZE = 64

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True, eq=False)
class FrameSample:
    """One timestamped grayscale frame, 64x64 after preprocessing."""

    timestamp: float
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.shape != (FRAME_SIZE, FRAME_SIZE):
            raise ValueError(f"frame pixels must be {FRAME_SIZE}x{FRAME_SIZE}, got {px.shape}")
        if not np.isfinite(px).all():
            raise ValueError("frame pixels must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("frame pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Reduce color to luminance (Rec.601 weights) and scale to [0, 1] floats."""
    a = np.asarray(img)
    orig_dtype = a.dtype
    if a.ndim == 3:
        if a.shape[2] == 4:
            a = a[..., :3]
        if a.shape[2] == 3:
            a = a.astype(np.float64) @ _LUMA
        elif a.shape[2] == 1:
            a = a[..., 0]
        else:
            raise ValueError(f"expected 1, 3 or 4 channels, got image shape {a.shape}")
    elif a.ndim != 2:
        raise ValueError(f"expected a 2D or 3D image array, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("empty image")
    if np.issubdtype(orig_dtype, np.integer):
        a = a.astype(np.float64) / np.iinfo(orig_dtype).max
    return a.astype(np.float32)


def _snap(coords: np.ndarray) -> np.ndarray:
    rounded = np.rint(coords)
    return np.where(np.abs(coords - rounded) < 1e-9, rounded, coords)


def bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample img at fractional (row, col) positions; coordinates are clamped."""
    h, w = img.shape
    rr = _snap(np.clip(rows, 0.0, h - 1.0))
    cc = _snap(np.clip(cols, 0.0, w - 1.0))
    r0 = np.floor(rr).astype(np.intp)
    c0 = np.floor(cc).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rr - r0
    fc = cc - c0
    top = img[r0, c0] * (1.0 - fc) + img[r0, c1] * fc
    bot = img[r1, c0] * (1.0 - fc) + img[r1, c1] * fc
    return (top * (1.0 - fr) + bot * fr).astype(np.float32)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample to (out_h, out_w); a same-size resize is an exact copy."""
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return np.array(img, dtype=np.float32)
    rows = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    cols = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return bilinear_sample(img, rr, cc)


def center_crop(img: np.ndarray, side_h: int, side_w: int | None = None) -> np.ndarray:
    side_w = side_h if side_w is None else side_w
    h, w = img.shape
    r0 = (h - side_h) // 2
    c0 = (w - side_w) // 2
    return img[r0:r0 + side_h, c0:c0 + side_w]


def rotate_about_center(img: np.ndarray, theta_degrees: float) -> np.ndarray:
    """Rotate the full grid about the image center, bilinear, edge-clamped.

    Border regions that sample outside the source are artifacts; callers
    that need artifact-free output crop afterwards (see largest_clean_square).
    A quarter turn maps pixel (r, c) to (c, h-1-r) exactly.
    """
    h, w = img.shape
    t = math.radians(theta_degrees)
    c, s = math.cos(t), math.sin(t)
    ctr_r = (h - 1) / 2.0
    ctr_c = (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64) - ctr_r,
                         np.arange(w, dtype=np.float64) - ctr_c, indexing="ij")
    src_r = c * rr - s * cc + ctr_r
    src_c = s * rr + c * cc + ctr_c
    return bilinear_sample(img, src_r, src_c)


def largest_clean_square(size: int, theta_degrees: float) -> tuple[int, int]:
    """(side, offset) of the biggest centered square free of rotation artifacts.

    A crop pixel at distance e from the center lands within the source
    grid iff e * (|cos| + |sin|) <= (size-1)/2; the side is shrunk until
    every crop pixel satisfies that.
    """
    t = math.radians(theta_degrees)
    cs = abs(math.cos(t)) + abs(math.sin(t))
    half = (size - 1) / 2.0
    side = min(size, int(math.floor((size - 1) / cs)) + 1)
    while side > 1:
        off = (size - side) // 2
        reach = max(abs(off - half), abs(off + side - 1 - half))
        if reach * cs <= half + 1e-12:
            break
        side -= 1
    return side, (size - side) // 2


def preprocess_array(img: np.ndarray) -> np.ndarray:
    """Luminance, center crop to square, resample to 64x64, clamp to [0, 1].

    A 64x64 grayscale input in [0, 1] passes through bit-identically.
    """
    gray = to_grayscale(img)
    h, w = gray.shape
    side = min(h, w)
    sq = center_crop(gray, side)
    out = resize_bilinear(sq, FRAME_SIZE, FRAME_SIZE)
    return np.clip(out, 0.0, 1.0)


def load_image(path) -> np.ndarray:
    """Read a raster image file into an array; raises naming the file on failure."""
    from PIL import Image

    try:
        with Image.open(path) as im:
            return np.asarray(im)
    except Exception as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc


def save_image_gray(path, img: np.ndarray) -> None:
    """Write a [0, 1] grayscale array as an 8-bit PNG."""
    from PIL import Image

    a = np.asarray(img, dtype=np.float64)
    u8 = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path, format="PNG")
