"""Deterministic pixel-level primitives.

Images are numpy float64 arrays, shape (H, W) for grayscale or (H, W, 3)
for RGB, with values in [0, 255]. Arithmetic stays in double precision;
quantization to 8-bit happens only on export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import convolve1d

from .errors import DegenerateGeometryError, EmptyRegionError

# ITU-R BT.601 luma weights
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class RegionBox:
    """Half-open pixel box [top, bottom) x [left, right)."""

    top: int
    left: int
    bottom: int
    right: int

    def clamped(self, height, width):
        return RegionBox(
            top=max(self.top, 0),
            left=max(self.left, 0),
            bottom=min(self.bottom, height),
            right=min(self.right, width),
        )

    @property
    def empty(self):
        return self.bottom <= self.top or self.right <= self.left


def validate_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")
    if img.size == 0:
        raise ValueError("empty image")
    if np.any(~np.isfinite(img)) or img.min() < 0 or img.max() > 255:
        raise ValueError("image values must be finite and within [0, 255]")
    return img


def grayscale(img):
    """Weighted RGB -> single channel. Single-channel input passes through."""
    img = validate_image(img)
    if img.ndim == 2:
        return img
    return img @ GRAY_WEIGHTS


def rotate_upright(img, left_eye_center, right_eye_center):
    """Rotate about the image center so the eye line becomes horizontal.

    Returns (rotated image, affine) where affine is a 2x3 matrix mapping
    original (x, y) pixel coordinates into the rotated image. Bilinear
    sampling; samples outside the source read as 0.
    """
    img = validate_image(img)
    lx, ly = float(left_eye_center[0]), float(left_eye_center[1])
    rx, ry = float(right_eye_center[0]), float(right_eye_center[1])
    if lx == rx and ly == ry:
        raise DegenerateGeometryError("coincident eye centers")

    angle = math.atan2(ry - ly, rx - lx)
    c, s = math.cos(angle), math.sin(angle)
    h, w = img.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0

    # forward map: p' = R(-angle) (p - center) + center
    fwd = np.array([
        [c, s, cx - c * cx - s * cy],
        [-s, c, cy + s * cx - c * cy],
    ])

    if angle == 0.0:
        return img.copy(), fwd

    # inverse-map each output pixel into the source and sample bilinearly
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    src_x = c * (xs - cx) - s * (ys - cy) + cx
    src_y = s * (xs - cx) + c * (ys - cy) + cy
    out = _bilinear_sample_zero(img, src_x, src_y)
    return out, fwd


def apply_affine(affine, points):
    """Map (x, y) points through a 2x3 affine matrix."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = pts @ affine[:, :2].T + affine[:, 2]
    return out[0] if np.asarray(points).ndim == 1 else out


def _bilinear_sample_zero(img, src_x, src_y):
    """Bilinear sampling with out-of-bounds treated as zero."""
    h, w = img.shape[:2]
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0

    def tap(yi, xi):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        yc = np.clip(yi, 0, h - 1)
        xc = np.clip(xi, 0, w - 1)
        vals = img[yc, xc]
        if img.ndim == 3:
            vals = np.where(valid[..., None], vals, 0.0)
        else:
            vals = np.where(valid, vals, 0.0)
        return vals

    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = tap(y0, x0) * (1 - fx) + tap(y0, x0 + 1) * fx
    bot = tap(y0 + 1, x0) * (1 - fx) + tap(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bot * fy


def crop(img, box: RegionBox):
    """Copy the boxed region; the box is clamped to the image first."""
    img = validate_image(img)
    if box.bottom <= box.top or box.right <= box.left:
        raise EmptyRegionError(f"invalid box {box}")
    h, w = img.shape[:2]
    cb = box.clamped(h, w)
    if cb.empty:
        raise EmptyRegionError(f"box {box} is empty after clamping to {h}x{w}")
    return img[cb.top:cb.bottom, cb.left:cb.right].copy()


def gaussian_kernel1d(sigma):
    """Gaussian taps at integer offsets, truncated at radius ceil(3*sigma),
    renormalized to sum 1."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_filter(img, sigma):
    """Separable Gaussian blur with edge replication at the borders."""
    img = validate_image(img)
    k = gaussian_kernel1d(sigma)
    out = convolve1d(img, k, axis=0, mode="nearest")
    out = convolve1d(out, k, axis=1, mode="nearest")
    return out


def resize_bilinear(img, out_h, out_w):
    """Bilinear resize using the half-pixel-center convention
    (src = (dst + 0.5) * scale - 0.5, clamped to the source grid)."""
    img = validate_image(img)
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.copy()

    src_y = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    src_x = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = src_y - y0
    fx = src_x - x0

    if img.ndim == 3:
        fy_c = fy[:, None, None]
        fx_c = fx[None, :, None]
    else:
        fy_c = fy[:, None]
        fx_c = fx[None, :]

    top = img[np.ix_(y0, x0)] * (1 - fx_c) + img[np.ix_(y0, x1)] * fx_c
    bot = img[np.ix_(y1, x0)] * (1 - fx_c) + img[np.ix_(y1, x1)] * fx_c
    return top * (1 - fy_c) + bot * fy_c


def quantize_u8(img):
    """Round-half-away quantization to uint8, clamped to [0, 255]."""
    img = np.asarray(img, dtype=np.float64)
    rounded = np.floor(np.abs(img) + 0.5) * np.sign(img)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def load_image(path):
    """Read an 8-bit grayscale or RGB PNG/PGM/PPM file as float64."""
    with Image.open(path) as im:
        if im.format not in ("PNG", "PPM"):
            raise ValueError(f"unsupported image format {im.format!r} for {path}")
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(im, dtype=np.float64)
    return arr


def save_image(img, path):
    """Quantize to 8-bit and write PNG or PGM/PPM, chosen by extension."""
    arr = quantize_u8(validate_image(img))
    im = Image.fromarray(arr, mode="L" if arr.ndim == 2 else "RGB")
    im.save(path)
