"""Raster preprocessing: grayscale, blur, coin segmentation, Sobel, wedges."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ImageReadError, NoCoinFound

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = np.array([[-1.0, -2.0, -1.0],
                    [0.0, 0.0, 0.0],
                    [1.0, 2.0, 1.0]])

MIN_SIDE = 64


@dataclass(frozen=True)
class PreprocessConfig:
    blur_sigma: float = 1.5
    blur_kernel_radius: int | None = None
    background_threshold: float = 0.2
    opening_radius: int = 5
    min_area_fraction: float = 0.05

    def __post_init__(self):
        if not self.blur_sigma > 0:
            raise ValueError("blur_sigma must be positive")
        if self.blur_kernel_radius is not None and self.blur_kernel_radius < 1:
            raise ValueError("blur_kernel_radius must be >= 1")
        if not 0.0 <= self.background_threshold <= 1.0:
            raise ValueError("background_threshold must lie in [0, 1]")
        if self.opening_radius < 0:
            raise ValueError("opening_radius must be >= 0")

    @property
    def kernel_radius(self) -> int:
        if self.blur_kernel_radius is not None:
            return self.blur_kernel_radius
        return max(1, math.ceil(3.0 * self.blur_sigma))


@dataclass
class CoinImage:
    """RGB raster of one coin side with its segmentation.

    ``center`` is ``(cx, cy)``: column then row, in pixels.
    """

    pixels: np.ndarray
    mask: np.ndarray
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got {self.pixels.shape}")
        h, w = self.pixels.shape[:2]
        if h < MIN_SIDE or w < MIN_SIDE:
            raise ValueError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {h}x{w}")
        if self.mask.shape != (h, w):
            raise ValueError("mask shape does not match pixels")
        if not self.mask.any():
            raise ValueError("coin mask is empty")


@dataclass
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    g: np.ndarray
    mask: np.ndarray


@dataclass(frozen=True)
class WedgeSpec:
    n_slices: int
    center: tuple[float, float]
    radius: float
    start_angle: float = 0.0

    def __post_init__(self):
        if self.n_slices not in (4, 8):
            raise ValueError("n_slices must be 4 or 8")

    def bounds(self, k: int) -> tuple[float, float]:
        width = 2.0 * math.pi / self.n_slices
        return self.start_angle + k * width, self.start_angle + (k + 1) * width


def load_rgb(path) -> np.ndarray:
    """Decode a PNG/JPEG file into an HxWx3 uint8 array."""
    from PIL import Image

    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            rgb = im.convert("RGB")
    except FileNotFoundError:
        raise ImageReadError(f"image not found: {path}") from None
    except Exception as exc:
        raise ImageReadError(f"cannot decode image {path}: {exc}") from exc
    return np.asarray(rgb, dtype=np.uint8).copy()


def save_png(path, pixels: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def to_grayscale(img) -> np.ndarray:
    """Rec. 601 luma in [0, 1]. Accepts a CoinImage or a raw RGB array."""
    pixels = img.pixels if isinstance(img, CoinImage) else np.asarray(img)
    rgb = pixels.astype(np.float64) / 255.0
    r, g, b = LUMA_WEIGHTS
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(gray: np.ndarray, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    # separable pass, border handled by edge replication ("nearest")
    k = gaussian_kernel(cfg.blur_sigma, cfg.kernel_radius)
    out = ndimage.correlate1d(np.asarray(gray, dtype=np.float64), k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def disk_structure(radius: int) -> np.ndarray:
    y, x = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return (x * x + y * y) <= radius * radius


def segment_coin(rgb: np.ndarray, cfg: PreprocessConfig = PreprocessConfig()) -> CoinImage:
    """Find the coin: threshold, open away the holder prongs, keep the largest blob."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected HxWx3 RGB raster, got shape {rgb.shape}")
    gray = to_grayscale(rgb)
    fg = gray > cfg.background_threshold
    if cfg.opening_radius > 0:
        fg = ndimage.binary_opening(fg, structure=disk_structure(cfg.opening_radius))
    labels, n = ndimage.label(fg)
    if n == 0:
        raise NoCoinFound("no foreground above the background threshold")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    best = int(np.argmax(sizes))
    if sizes[best] < cfg.min_area_fraction * gray.size:
        raise NoCoinFound(
            f"largest component covers {sizes[best] / gray.size:.1%} of the image "
            f"(need {cfg.min_area_fraction:.0%})")
    mask = ndimage.binary_fill_holes(labels == best)
    rows, cols = np.nonzero(mask)
    cy, cx = rows.mean(), cols.mean()
    radius = float(np.sqrt(((cols - cx) ** 2 + (rows - cy) ** 2).max()))
    return CoinImage(pixels=rgb.astype(np.uint8, copy=False), mask=mask,
                     center=(float(cx), float(cy)), radius=radius)


def _correlate3x3(padded: np.ndarray, kernel: np.ndarray, shape) -> np.ndarray:
    # positive and negative taps are summed separately, row-major, then
    # subtracted, so a constant window cancels exactly
    h, w = shape
    pos = np.zeros(shape, dtype=np.float64)
    neg = np.zeros(shape, dtype=np.float64)
    for i in range(3):
        for j in range(3):
            wgt = kernel[i, j]
            if wgt > 0.0:
                pos += wgt * padded[i:i + h, j:j + w]
            elif wgt < 0.0:
                neg += -wgt * padded[i:i + h, j:j + w]
    return pos - neg


def sobel(gray: np.ndarray, mask: np.ndarray | None = None) -> GradientField:
    """Sobel gradients with edge-replicated borders, zeroed outside ``mask``.

    The kernels are applied as a correlation: a dark-to-bright step going
    left to right gives positive ``gx``.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if mask is None:
        mask = np.ones(gray.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(gray, 1, mode="edge")
    gx = _correlate3x3(padded, SOBEL_X, gray.shape)
    gy = _correlate3x3(padded, SOBEL_Y, gray.shape)
    g = np.sqrt(gx * gx + gy * gy)
    off = ~mask
    gx[off] = 0.0
    gy[off] = 0.0
    g[off] = 0.0
    return GradientField(gx=gx, gy=gy, g=g, mask=mask)


def wedge_labels(spec: WedgeSpec, mask: np.ndarray) -> np.ndarray:
    """Integer wedge index per pixel, -1 outside the mask."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    cx, cy = spec.center
    rows, cols = np.nonzero(mask)
    dx = cols - cx
    dy = rows - cy  # raster y axis points down
    two_pi = 2.0 * math.pi
    ang = np.mod(np.arctan2(dy, dx) - spec.start_angle, two_pi)
    k = np.floor(ang / (two_pi / spec.n_slices)).astype(np.int64)
    np.clip(k, 0, spec.n_slices - 1, out=k)
    k[(dx == 0) & (dy == 0)] = 0
    out = np.full((h, w), -1, dtype=np.int64)
    out[rows, cols] = k
    return out


def wedge_masks(spec: WedgeSpec, mask: np.ndarray) -> list[np.ndarray]:
    labels = wedge_labels(spec, mask)
    return [labels == k for k in range(spec.n_slices)]


@dataclass
class Preprocessed:
    coin: CoinImage
    gray: np.ndarray
    blurred: np.ndarray


def preprocess(rgb: np.ndarray, cfg: PreprocessConfig = PreprocessConfig()) -> Preprocessed:
    coin = segment_coin(rgb, cfg)
    gray = to_grayscale(coin)
    return Preprocessed(coin=coin, gray=gray, blurred=gaussian_blur(gray, cfg))
