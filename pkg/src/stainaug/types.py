"""Core value types: image tiles, domain vectors, loss weights/breakdowns.

Images are float32 arrays of shape ``(3, H, W)`` with values in ``[0, 1]``,
channel-first throughout the package. Helpers convert to and from the
``(H, W, 3)`` layout used by image files.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DomainVectorError, InputShapeError, InputValueError

TUMOR = "tumor"
NON_TUMOR = "non-tumor"
LABELS = (NON_TUMOR, TUMOR)

#: Length of the color appearance vector produced by the attribute encoder.
ATTRIBUTE_DIM = 8

#: Tolerance on the sum of a domain weight vector.
DOMAIN_SUM_TOL = 1e-6


def as_chw(pixels: np.ndarray) -> np.ndarray:
    """Return ``pixels`` as a float32 ``(3, H, W)`` array.

    Accepts ``(3, H, W)`` or ``(H, W, 3)`` input.
    """
    a = np.asarray(pixels)
    if a.ndim != 3:
        raise InputShapeError(f"expected a 3-d array, got shape {a.shape}")
    if a.shape[0] == 3:
        out = a
    elif a.shape[2] == 3:
        out = np.moveaxis(a, 2, 0)
    else:
        raise InputShapeError(f"no channel axis of size 3 in shape {a.shape}")
    return np.ascontiguousarray(out, dtype=np.float32)


def to_hwc(pixels: np.ndarray) -> np.ndarray:
    """Return a ``(H, W, 3)`` view of a ``(3, H, W)`` array."""
    return np.moveaxis(pixels, 0, 2)


@dataclass(frozen=True)
class ImageTile:
    """An RGB raster tile with optional domain and class annotations.

    ``pixels`` is float32, shape ``(3, H, W)``, values in ``[0, 1]``,
    H == W. ``domain_id`` must lie in ``[0, domain_count)`` when a domain
    count is known to the caller; validation here only checks it is
    nonnegative.
    """

    pixels: np.ndarray
    domain_id: Optional[int] = None
    class_label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "pixels", as_chw(self.pixels))
        p = self.pixels
        if p.shape[1] != p.shape[2]:
            raise InputShapeError(f"tile must be square, got {p.shape[1]}x{p.shape[2]}")
        if not np.all(np.isfinite(p)):
            raise InputValueError("tile contains non-finite pixel values")
        if p.min() < 0.0 or p.max() > 1.0:
            raise InputValueError(
                f"pixel values outside [0, 1]: min={p.min():.4g} max={p.max():.4g}"
            )
        if self.domain_id is not None and self.domain_id < 0:
            raise DomainVectorError(f"domain_id must be >= 0, got {self.domain_id}")
        if self.class_label is not None and self.class_label not in LABELS:
            raise InputValueError(f"unknown class label {self.class_label!r}")

    @property
    def size(self) -> int:
        return self.pixels.shape[1]

    def with_pixels(self, pixels: np.ndarray) -> "ImageTile":
        """A copy of this tile with new pixel data, annotations preserved."""
        return replace(self, pixels=pixels)


@dataclass(frozen=True)
class DomainVector:
    """Nonnegative weights over the training domains, summing to one.

    One-hot at training time; convex mixtures are allowed at inference.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "weights", w)
        if w.size < 1:
            raise DomainVectorError("domain vector must have at least one entry")
        if not np.all(np.isfinite(w)):
            raise DomainVectorError("domain vector has non-finite entries")
        if w.min() < 0:
            raise DomainVectorError(f"domain weights must be >= 0, got min {w.min():.4g}")
        if abs(w.sum() - 1.0) > DOMAIN_SUM_TOL:
            raise DomainVectorError(f"domain weights must sum to 1, got {w.sum():.8g}")

    @classmethod
    def one_hot(cls, index: int, count: int) -> "DomainVector":
        if not 0 <= index < count:
            raise DomainVectorError(f"domain index {index} out of range [0, {count})")
        w = np.zeros(count)
        w[index] = 1.0
        return cls(w)

    @property
    def count(self) -> int:
        return int(self.weights.size)

    @property
    def is_one_hot(self) -> bool:
        w = self.weights
        return bool(np.isclose(w.max(), 1.0, atol=DOMAIN_SUM_TOL) and
                    np.count_nonzero(w) == 1)

    def require_one_hot(self) -> int:
        """Return the hot index, or raise if the vector is not one-hot."""
        if not self.is_one_hot:
            raise DomainVectorError(f"expected a one-hot domain vector, got {self.weights}")
        return int(np.argmax(self.weights))


@dataclass(frozen=True)
class LossWeights:
    """Weights of the six training objective terms."""

    w_cc: float = 10.0
    w_c: float = 1.0
    w_d: float = 1.0
    w_recon: float = 10.0
    w_latent: float = 10.0
    w_kl: float = 0.01

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not np.isfinite(value) or value < 0:
                raise InputValueError(f"loss weight {name} must be finite and >= 0")

    def as_dict(self) -> dict:
        return {
            "w_cc": self.w_cc, "w_c": self.w_c, "w_d": self.w_d,
            "w_recon": self.w_recon, "w_latent": self.w_latent, "w_kl": self.w_kl,
        }


@dataclass(frozen=True)
class LossBreakdown:
    """The six objective terms plus their weighted total."""

    cc: float
    c: float
    d: float
    recon: float
    latent: float
    kl: float
    total: float

    FIELDS = ("cc", "c", "d", "recon", "latent", "kl", "total")

    def __post_init__(self):
        for name in self.FIELDS:
            if not np.isfinite(getattr(self, name)):
                raise InputValueError(f"loss term {name} is not finite")

    @classmethod
    def from_terms(cls, weights: LossWeights, **terms: float) -> "LossBreakdown":
        total = (weights.w_cc * terms["cc"] + weights.w_c * terms["c"]
                 + weights.w_d * terms["d"] + weights.w_recon * terms["recon"]
                 + weights.w_latent * terms["latent"] + weights.w_kl * terms["kl"])
        return cls(total=total, **terms)

    def weighted_total(self, weights: LossWeights) -> float:
        """Recompute the total from the stored terms and given weights."""
        return (weights.w_cc * self.cc + weights.w_c * self.c
                + weights.w_d * self.d + weights.w_recon * self.recon
                + weights.w_latent * self.latent + weights.w_kl * self.kl)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}
