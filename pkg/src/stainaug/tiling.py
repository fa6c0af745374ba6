"""Tissue detection and grid tiling of large stained images.

A stained image is first segmented into tissue and background with a naive
RGB whiteness rule combined with per-image Otsu thresholding of the gray
channel, then cut into non-overlapping square tiles. Tiles are kept when
they contain enough tissue and labeled ``tumor`` when strictly more than 1%
of their pixels are annotated as tumor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .colorspace import rgb_to_gray
from .errors import AlignmentError, DegenerateHistogramError, InputShapeError
from .types import NON_TUMOR, TUMOR, ImageTile, as_chw

#: A pixel counts as background when all its RGB channels exceed this value.
WHITE_RGB_THRESHOLD = 0.8

#: Tiles whose tumor pixel ratio exceeds this (strictly) are labeled tumor.
TUMOR_RATIO_THRESHOLD = 0.01


@dataclass(frozen=True)
class TileRecord:
    """Bookkeeping for one tile cut from a source image."""

    source_id: str
    grid_x: int
    grid_y: int
    label: str
    tumor_pixel_ratio: float
    tissue_fraction: float
    domain_id: Optional[int] = None


@dataclass(frozen=True)
class TissueMask:
    """Foreground mask plus how it was obtained."""

    mask: np.ndarray
    foreground_fraction: float
    otsu_used: bool
    threshold: Optional[int]


def otsu_threshold(histogram: np.ndarray) -> int:
    """Threshold of a 256-bin histogram maximizing between-class variance.

    The returned value ``t`` splits the bins into a low class ``[0, t)`` and
    a high class ``[t, 255]``. Ties are broken toward the lowest qualifying
    ``t``. Comparisons use exact integer arithmetic, so the result is
    reproducible bit-for-bit.
    """
    counts = np.asarray(histogram)
    if counts.shape != (256,):
        raise InputShapeError(f"expected 256 histogram bins, got shape {counts.shape}")
    if np.any(counts < 0):
        raise ValueError("histogram counts must be nonnegative")
    counts = counts.astype(np.int64)
    occupied = np.nonzero(counts)[0]
    if counts.sum() <= 0 or occupied.size < 2:
        raise DegenerateHistogramError(
            "histogram needs at least two occupied bins for a threshold"
        )

    total_w = int(counts.sum())
    total_s = int((counts * np.arange(256, dtype=np.int64)).sum())

    # Between-class variance at t is (S0*W1 - S1*W0)^2 / (W0*W1*W^2); the
    # W^2 factor is constant, so compare N^2/D with exact big-int products.
    best_t = -1
    best_num = 0
    best_den = 1
    w0 = 0
    s0 = 0
    for t in range(1, 256):
        w0 += int(counts[t - 1])
        s0 += (t - 1) * int(counts[t - 1])
        w1 = total_w - w0
        if w0 == 0 or w1 == 0:
            continue
        s1 = total_s - s0
        num = (s0 * w1 - s1 * w0) ** 2
        den = w0 * w1
        # num/den > best_num/best_den  <=>  num*best_den > best_num*den
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def quantize_gray(gray: np.ndarray) -> np.ndarray:
    """Map gray values in [0, 1] to integer bins 0..255 (round-half-even)."""
    return np.clip(np.rint(np.asarray(gray) * 255.0), 0, 255).astype(np.int64)


def tissue_mask(image: np.ndarray) -> TissueMask:
    """Foreground (tissue) mask of an RGB image.

    A pixel is tissue when it is not near-white (``min(R,G,B) <=``
    :data:`WHITE_RGB_THRESHOLD`) and its gray level falls strictly below the
    per-image Otsu threshold. When the gray histogram is degenerate (e.g. a
    constant image) only the RGB rule is applied and the result is flagged
    via ``otsu_used=False``.
    """
    rgb = as_chw(image).astype(np.float64)
    not_white = rgb.min(axis=0) <= WHITE_RGB_THRESHOLD

    gray = quantize_gray(rgb_to_gray(rgb))
    hist = np.bincount(gray.reshape(-1), minlength=256)
    try:
        t = otsu_threshold(hist)
        mask = not_white & (gray < t)
        used, thr = True, t
    except DegenerateHistogramError:
        mask = not_white
        used, thr = False, None
    return TissueMask(mask=mask, foreground_fraction=float(mask.mean()),
                      otsu_used=used, threshold=thr)


def label_from_ratio(tumor_pixel_ratio: float) -> str:
    """``tumor`` iff strictly more than 1% of pixels are tumor-annotated."""
    return TUMOR if tumor_pixel_ratio > TUMOR_RATIO_THRESHOLD else NON_TUMOR


def tile_grid(
    image: np.ndarray,
    annotation_mask: np.ndarray,
    tile_size: int = 512,
    min_tissue: float = 0.5,
    source_id: str = "image",
    domain_id: Optional[int] = None,
) -> List[Tuple[ImageTile, TileRecord]]:
    """Cut an annotated image into labeled square tiles.

    The grid is axis-aligned with offsets at multiples of ``tile_size``;
    partial tiles at the right/bottom edges are dropped. A tile is kept when
    its tissue fraction (from :func:`tissue_mask` computed on the whole
    image) is at least ``min_tissue``. Records carry pixel offsets as
    ``grid_x``/``grid_y``.
    """
    rgb = as_chw(image)
    ann = np.asarray(annotation_mask)
    if ann.shape != rgb.shape[1:]:
        raise AlignmentError(
            f"annotation mask shape {ann.shape} does not match image {rgb.shape[1:]}"
        )
    ann = ann.astype(bool)
    mask = tissue_mask(rgb).mask

    h, w = rgb.shape[1:]
    out: List[Tuple[ImageTile, TileRecord]] = []
    for y in range(0, h - tile_size + 1, tile_size):
        for x in range(0, w - tile_size + 1, tile_size):
            sl = np.s_[y:y + tile_size, x:x + tile_size]
            tissue_frac = float(mask[sl].mean())
            if tissue_frac < min_tissue:
                continue
            ratio = float(ann[sl].mean())
            record = TileRecord(
                source_id=source_id, grid_x=x, grid_y=y,
                label=label_from_ratio(ratio),
                tumor_pixel_ratio=ratio, tissue_fraction=tissue_frac,
                domain_id=domain_id,
            )
            tile = ImageTile(rgb[:, y:y + tile_size, x:x + tile_size],
                             domain_id=domain_id, class_label=record.label)
            out.append((tile, record))
    return out


def tumor_tile_fraction(records: List[TileRecord]) -> float:
    """Fraction of tiles labeled tumor, for dataset sanity reporting."""
    if not records:
        return 0.0
    return sum(r.label == TUMOR for r in records) / len(records)
