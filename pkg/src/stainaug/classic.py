"""Classical tile augmentations: flips/rotations, HSV color jitter, erasing.

Every transform is a pure function of ``(image, rng)``: supplying the same
numpy Generator state reproduces the output exactly. All transforms map
``[0, 1]`` tiles to ``[0, 1]`` tiles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from .colorspace import hsv_to_rgb, rgb_to_hsv
from .errors import InputShapeError, RangeError
from .types import ImageTile

GEOMETRIC_OPS = ("identity", "hflip", "vflip", "rot90", "rot180", "rot270")


def _apply_geometric(pixels: np.ndarray, op: str) -> np.ndarray:
    if op == "identity":
        return pixels.copy()
    if op == "hflip":
        return pixels[:, :, ::-1].copy()
    if op == "vflip":
        return pixels[:, ::-1, :].copy()
    if op == "rot90":
        return np.rot90(pixels, 1, axes=(1, 2)).copy()
    if op == "rot180":
        return np.rot90(pixels, 2, axes=(1, 2)).copy()
    if op == "rot270":
        return np.rot90(pixels, 3, axes=(1, 2)).copy()
    raise ValueError(f"unknown geometric op {op!r}")


def geometric(image: ImageTile, rng: np.random.Generator) -> ImageTile:
    """Apply one of the six axis-aligned flips/rotations, drawn uniformly.

    The input must be square (rotations would change the shape otherwise).
    The result is a pixel-exact permutation of the input.
    """
    if image.pixels.shape[1] != image.pixels.shape[2]:
        raise InputShapeError("geometric augmentation requires a square tile")
    op = GEOMETRIC_OPS[int(rng.integers(len(GEOMETRIC_OPS)))]
    return image.with_pixels(_apply_geometric(image.pixels, op))


@dataclass(frozen=True)
class HsvAugmentConfig:
    """Strengths and probabilities of the HSV color augmentation.

    ``hue_factor`` is the half-width of the uniform hue shift in turns
    (wrap-around); saturation is scaled by a uniform draw from
    ``[1 - hue_factor, 1 + hue_factor]``. Contrast is a multiplicative
    jitter, brightness an additive shift, blur a Gaussian with the given
    sigma range in pixels.
    """

    blur_prob: float = 0.25
    blur_sigma: Tuple[float, float] = (0.1, 2.0)
    contrast_brightness_prob: float = 0.5
    contrast_range: Tuple[float, float] = (0.75, 1.25)
    brightness_range: Tuple[float, float] = (-0.1, 0.1)
    hue_saturation_prob: float = 0.5
    hue_factor: float = 0.5


DEFAULT_HSV_CONFIG = HsvAugmentConfig()


def hsv_augment(
    image: ImageTile,
    rng: np.random.Generator,
    config: HsvAugmentConfig = DEFAULT_HSV_CONFIG,
) -> ImageTile:
    """Color jitter: blur, contrast/brightness, and hue/saturation shifts.

    The three perturbations are applied independently with their configured
    probabilities, in that order, and the result is clamped to ``[0, 1]``.
    """
    x = image.pixels.astype(np.float64)

    if rng.random() < config.blur_prob:
        sigma = rng.uniform(*config.blur_sigma)
        x = np.stack([ndimage.gaussian_filter(c, sigma) for c in x])

    if rng.random() < config.contrast_brightness_prob:
        scale = rng.uniform(*config.contrast_range)
        shift = rng.uniform(*config.brightness_range)
        mean = x.mean()
        x = (x - mean) * scale + mean + shift

    if rng.random() < config.hue_saturation_prob:
        hue_shift = rng.uniform(-config.hue_factor, config.hue_factor)
        sat_scale = rng.uniform(1.0 - config.hue_factor, 1.0 + config.hue_factor)
        hsv = rgb_to_hsv(np.clip(x, 0.0, 1.0))
        hsv[0] = (hsv[0] + hue_shift) % 1.0
        hsv[1] = np.clip(hsv[1] * sat_scale, 0.0, 1.0)
        x = hsv_to_rgb(hsv)

    return image.with_pixels(np.clip(x, 0.0, 1.0).astype(np.float32))


#: Bounds of the erased rectangle: area fraction and aspect ratio.
ERASE_AREA_RANGE = (0.02, 0.33)
ERASE_ASPECT_RANGE = (0.3, 3.3)


def random_erasing(
    image: ImageTile,
    rng: np.random.Generator,
    p: float = 0.5,
) -> ImageTile:
    """With probability ``p``, replace one random rectangle by uniform noise.

    The realized rectangle always covers an area fraction within
    :data:`ERASE_AREA_RANGE` at an aspect ratio within
    :data:`ERASE_ASPECT_RANGE`; draws that would round or clip outside those
    bounds are rejected and resampled.
    """
    if not 0.0 <= p <= 1.0:
        raise RangeError(f"erasing probability must be in [0, 1], got {p}")
    if rng.random() >= p:
        return image.with_pixels(image.pixels.copy())

    c, h, w = image.pixels.shape
    lo, hi = ERASE_AREA_RANGE
    while True:
        area = rng.uniform(lo, hi) * h * w
        aspect = rng.uniform(*ERASE_ASPECT_RANGE)
        eh = max(1, round(np.sqrt(area * aspect)))
        ew = max(1, round(np.sqrt(area / aspect)))
        if eh <= h and ew <= w and lo <= (eh * ew) / (h * w) <= hi:
            break
    y = int(rng.integers(0, h - eh + 1))
    x = int(rng.integers(0, w - ew + 1))
    out = image.pixels.copy()
    out[:, y:y + eh, x:x + ew] = rng.uniform(size=(c, eh, ew)).astype(np.float32)
    return image.with_pixels(out)
