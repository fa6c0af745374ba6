"""Color space conversions used by the augmentations and batch-effect metrics.

All functions take and return float64/float32 arrays of shape ``(3, H, W)``
(channel-first) with RGB in ``[0, 1]``. Conventions:

* HSV: hue in turns ``[0, 1)``, saturation ``(max-min)/max``, value ``max``.
* LAB: CIE L*a*b* under the D65 illuminant (2 degree observer), computed
  through linearized sRGB and the standard XYZ matrix.
* HED: stain concentrations obtained by optical-density deconvolution with
  the Ruifrok-Johnston hematoxylin / eosin / DAB absorbance matrix.
* gray: ITU-R 709 luma (0.2125, 0.7154, 0.0721).
"""

from __future__ import annotations

import numpy as np

from .errors import InputShapeError

# sRGB -> XYZ (D65), rows X, Y, Z.
RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])

# D65 reference white.
WHITE_D65 = np.array([0.95047, 1.0, 1.08883])

# Ruifrok-Johnston absorbance rows: hematoxylin, eosin, DAB.
STAIN_MATRIX = np.array([
    [0.65, 0.70, 0.29],
    [0.07, 0.99, 0.11],
    [0.27, 0.57, 0.78],
])
STAIN_MATRIX_INV = np.linalg.inv(STAIN_MATRIX)

GRAY_WEIGHTS = np.array([0.2125, 0.7154, 0.0721])

# Optical density floor: transmittance is clipped here before the log.
OD_EPS = 1e-6


def _check_rgb(rgb: np.ndarray) -> np.ndarray:
    a = np.asarray(rgb, dtype=np.float64)
    if a.ndim != 3 or a.shape[0] != 3:
        raise InputShapeError(f"expected (3, H, W) RGB array, got shape {a.shape}")
    return a


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    rgb = _check_rgb(rgb)
    r, g, b = rgb
    mx = rgb.max(axis=0)
    mn = rgb.min(axis=0)
    delta = mx - mn

    h = np.zeros_like(mx)
    nz = delta > 0
    rmax = nz & (mx == r)
    gmax = nz & ~rmax & (mx == g)
    bmax = nz & ~rmax & ~gmax
    h[rmax] = ((g - b)[rmax] / delta[rmax]) % 6.0
    h[gmax] = (b - r)[gmax] / delta[gmax] + 2.0
    h[bmax] = (r - g)[bmax] / delta[bmax] + 4.0
    h /= 6.0

    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx])


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    if hsv.ndim != 3 or hsv.shape[0] != 3:
        raise InputShapeError(f"expected (3, H, W) HSV array, got shape {hsv.shape}")
    h, s, v = hsv
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))

    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    rgb = _check_rgb(rgb)
    lin = _srgb_to_linear(rgb)
    xyz = np.einsum("ij,jhw->ihw", RGB_TO_XYZ, lin)
    xyz = xyz / WHITE_D65[:, None, None]

    eps = (6.0 / 29.0) ** 3
    kappa = 3.0 * (6.0 / 29.0) ** 2
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / kappa + 4.0 / 29.0)

    fx, fy, fz = f
    lab_l = 116.0 * fy - 16.0
    lab_a = 500.0 * (fx - fy)
    lab_b = 200.0 * (fy - fz)
    return np.stack([lab_l, lab_a, lab_b])


def rgb_to_od(rgb: np.ndarray) -> np.ndarray:
    """Optical density per channel: ``-log10(max(rgb, OD_EPS))``."""
    rgb = _check_rgb(rgb)
    return -np.log10(np.clip(rgb, OD_EPS, None))


def rgb_to_hed(rgb: np.ndarray) -> np.ndarray:
    od = rgb_to_od(rgb)
    # od (as a row vector per pixel) = hed @ STAIN_MATRIX
    return np.einsum("ji,jhw->ihw", STAIN_MATRIX_INV, od)


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    rgb = _check_rgb(rgb)
    return np.einsum("j,jhw->hw", GRAY_WEIGHTS, rgb)
