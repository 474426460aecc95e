"""Seeded image perturbations.

Two families, applied to decoded images before any backend call:

* weak transforms (crop / rotate / translate / contrast / brightness) that
  preserve the content while varying its presentation, and
* distortions (Poisson shot noise + additive Gaussian noise) that degrade
  fine detail for the contrast branch.

All operations are pure functions of (image, config, seed): equal inputs
produce bit-identical outputs, and output shape always equals input shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImage, InvalidConfig, UnsupportedFormat

__all__ = [
    "ImageTensor",
    "WeakTransformConfig",
    "DistortionConfig",
    "load_image",
    "apply_weak_transform",
    "apply_distortion",
]


@dataclass(frozen=True)
class ImageTensor:
    """Decoded image: float64 pixels in [0, 1], shape (height, width, channels)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise InvalidConfig(f"expected (H, W, 1|3) pixel array, got shape {px.shape}")
        if px.size == 0:
            raise InvalidConfig("empty image")
        if px.min() < 0.0 or px.max() > 1.0:
            raise InvalidConfig("pixel values outside [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


def _check_range(name: str, pair: tuple[float, float]) -> None:
    if len(pair) != 2 or not (pair[0] <= pair[1]):
        raise InvalidConfig(f"{name} must be a (low, high) pair with low <= high, got {pair}")


@dataclass(frozen=True)
class WeakTransformConfig:
    """Content-preserving transform ranges; defaults are the trans1 preset."""

    crop_area_range: tuple[float, float] = (0.90, 1.00)
    rotation_range: tuple[float, float] = (-10.0, 10.0)
    translate_max_frac: float = 0.10
    brightness_range: tuple[float, float] = (0.8, 1.2)
    contrast_range: tuple[float, float] = (0.8, 1.2)
    enabled: bool = True

    def validate(self) -> None:
        _check_range("crop_area_range", self.crop_area_range)
        _check_range("rotation_range", self.rotation_range)
        _check_range("brightness_range", self.brightness_range)
        _check_range("contrast_range", self.contrast_range)
        if not (0.0 < self.crop_area_range[0] and self.crop_area_range[1] <= 1.0):
            raise InvalidConfig("crop area fractions must lie in (0, 1]")
        if not (0.0 <= self.translate_max_frac < 1.0):
            raise InvalidConfig("translate_max_frac must lie in [0, 1)")
        if self.brightness_range[0] < 0 or self.contrast_range[0] < 0:
            raise InvalidConfig("brightness/contrast factors must be nonnegative")

    @classmethod
    def identity(cls) -> "WeakTransformConfig":
        return cls(
            crop_area_range=(1.0, 1.0),
            rotation_range=(0.0, 0.0),
            translate_max_frac=0.0,
            brightness_range=(1.0, 1.0),
            contrast_range=(1.0, 1.0),
        )

    @classmethod
    def preset(cls, name: str) -> "WeakTransformConfig":
        """Intensity presets trans1..trans4; trans1 equals the defaults.

        Each step widens rotation by 5 degrees, lowers the crop floor by
        0.05, widens brightness/contrast jitter by 0.1, and raises the
        translation cap by 0.05.
        """
        try:
            level = {"trans1": 0, "trans2": 1, "trans3": 2, "trans4": 3}[name.lower()]
        except KeyError:
            raise InvalidConfig(f"unknown transform preset {name!r}") from None
        return cls(
            crop_area_range=(0.90 - 0.05 * level, 1.00),
            rotation_range=(-10.0 - 5.0 * level, 10.0 + 5.0 * level),
            translate_max_frac=0.10 + 0.05 * level,
            brightness_range=(0.8 - 0.1 * level, 1.2 + 0.1 * level),
            contrast_range=(0.8 - 0.1 * level, 1.2 + 0.1 * level),
        )


@dataclass(frozen=True)
class DistortionConfig:
    """Detail-degrading noise; defaults are the noise3 preset."""

    gaussian_std: float = 0.07
    poisson_scale: float = 70.0

    def validate(self) -> None:
        if self.gaussian_std < 0:
            raise InvalidConfig("gaussian_std must be >= 0")
        if self.poisson_scale <= 0:
            raise InvalidConfig("poisson_scale must be > 0")

    _PRESETS = {
        "noise1": (0.03, 30.0),
        "noise2": (0.05, 50.0),
        "noise3": (0.07, 70.0),
        "noise4": (0.09, 90.0),
    }

    @classmethod
    def preset(cls, name: str) -> "DistortionConfig":
        try:
            std, scale = cls._PRESETS[name.lower()]
        except KeyError:
            raise InvalidConfig(f"unknown distortion preset {name!r}") from None
        return cls(gaussian_std=std, poisson_scale=scale)


def load_image(path) -> ImageTensor:
    """Decode a PNG or JPEG file to an ImageTensor.

    Grayscale inputs stay single-channel; palette/alpha images are
    flattened to RGB.
    """
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise UnsupportedFormat(f"{path}: format {im.format!r} (need PNG or JPEG)")
            if im.mode in ("L", "I", "I;16", "1"):
                im = im.convert("L")
            else:
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise CorruptImage(f"{path}: {exc}") from exc
    except (OSError, SyntaxError) as exc:
        raise CorruptImage(f"{path}: {exc}") from exc
    return ImageTensor(arr)


def _sample_bilinear(pixels: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup at fractional coordinates, clamping to the edge."""
    h, w = pixels.shape[:2]
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    wy = (ys - y0)[:, :, np.newaxis]
    wx = (xs - x0)[:, :, np.newaxis]
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    p00 = pixels[y0c, x0c]
    p01 = pixels[y0c, x1c]
    p10 = pixels[y1c, x0c]
    p11 = pixels[y1c, x1c]
    top = p00 * (1.0 - wx) + p01 * wx
    bot = p10 * (1.0 - wx) + p11 * wx
    return top * (1.0 - wy) + bot * wy


def _dest_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")


def apply_weak_transform(img: ImageTensor, cfg: WeakTransformConfig, seed: int) -> ImageTensor:
    """Apply one seeded weak transform; disabled or identity configs are exact no-ops.

    Parameter draw order is fixed (crop fraction, crop offsets, angle,
    translation, contrast, brightness) so outputs are stable across calls.
    """
    cfg.validate()
    if not cfg.enabled:
        return img

    rng = np.random.default_rng(seed)
    h, w = img.height, img.width
    pixels = img.pixels

    area = rng.uniform(*cfg.crop_area_range)
    side = math.sqrt(area)
    ch = max(1, round(h * side))
    cw = max(1, round(w * side))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    angle = math.radians(rng.uniform(*cfg.rotation_range))
    tx = rng.uniform(-cfg.translate_max_frac, cfg.translate_max_frac) * w
    ty = rng.uniform(-cfg.translate_max_frac, cfg.translate_max_frac) * h
    contrast = rng.uniform(*cfg.contrast_range)
    brightness = rng.uniform(*cfg.brightness_range)

    # Crop then resample back to the original resolution.
    if (ch, cw) != (h, w) or top or left:
        ii, jj = _dest_grid(h, w)
        ys = top + (ii + 0.5) * (ch / h) - 0.5
        xs = left + (jj + 0.5) * (cw / w) - 0.5
        pixels = _sample_bilinear(pixels, ys, xs)

    if angle != 0.0:
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        ii, jj = _dest_grid(h, w)
        dy, dx = ii - cy, jj - cx
        cos_t, sin_t = math.cos(angle), math.sin(angle)
        ys = cy + dy * cos_t - dx * sin_t
        xs = cx + dy * sin_t + dx * cos_t
        pixels = _sample_bilinear(pixels, ys, xs)

    if tx != 0.0 or ty != 0.0:
        ii, jj = _dest_grid(h, w)
        pixels = _sample_bilinear(pixels, ii - ty, jj - tx)

    if contrast != 1.0:
        mean = pixels.mean()
        pixels = mean + (pixels - mean) * contrast

    if brightness != 1.0:
        pixels = pixels * brightness

    return ImageTensor(np.clip(pixels, 0.0, 1.0))


def apply_distortion(img: ImageTensor, cfg: DistortionConfig, seed: int) -> ImageTensor:
    """Poisson shot noise (rate = pixel * scale) plus Gaussian noise, clamped."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    shot = rng.poisson(img.pixels * cfg.poisson_scale).astype(np.float64) / cfg.poisson_scale
    noise = rng.normal(0.0, cfg.gaussian_std, size=img.pixels.shape)
    return ImageTensor(np.clip(shot + noise, 0.0, 1.0))
