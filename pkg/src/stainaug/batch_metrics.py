"""Batch-effect quantification for collections of stained tiles.

Each tile is summarized by a 13-dimensional vector of per-channel means over
five color representations; collections are embedded in 2D and the mixing of
domains is scored by the mean local diversity (mLD): Shannon equitability of
domain labels over k-nearest neighborhoods, 0 for fully separated domains
and 1 for perfectly mixed ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import spatial

from . import colorspace
from .embedding import EmbedParams, embed_2d
from .errors import ParameterError
from .types import ImageTile, as_chw

#: Order of the color statistics vector.
COLOR_STAT_NAMES = (
    "rgb_r", "rgb_g", "rgb_b",
    "hsv_h", "hsv_s", "hsv_v",
    "lab_l", "lab_a", "lab_b",
    "hed_h", "hed_e", "hed_d",
    "gray",
)


def color_stats(image) -> np.ndarray:
    """13-vector of channel means over RGB, HSV, LAB, HED and gray.

    Accepts an :class:`ImageTile` or a raw ``(3, H, W)`` / ``(H, W, 3)``
    array with values in ``[0, 1]``.
    """
    rgb = as_chw(image.pixels if isinstance(image, ImageTile) else image)
    rgb = rgb.astype(np.float64)
    parts = [
        rgb.mean(axis=(1, 2)),
        colorspace.rgb_to_hsv(rgb).mean(axis=(1, 2)),
        colorspace.rgb_to_lab(rgb).mean(axis=(1, 2)),
        colorspace.rgb_to_hed(rgb).mean(axis=(1, 2)),
        np.atleast_1d(colorspace.rgb_to_gray(rgb).mean()),
    ]
    return np.concatenate(parts)


def color_stats_matrix(tiles: Sequence) -> np.ndarray:
    """Stack :func:`color_stats` over a sequence of tiles, one row each."""
    return np.stack([color_stats(t) for t in tiles])


def _knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of each point's k nearest neighbors, excluding itself."""
    n = points.shape[0]
    if n < k + 1:
        raise ParameterError(f"need at least k+1={k + 1} points, got {n}")
    tree = spatial.cKDTree(points)
    _, idx = tree.query(points, k=k + 1)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        row = [j for j in idx[i] if j != i][:k]
        out[i] = row
    return out


def local_diversity(
    points: np.ndarray,
    labels: np.ndarray,
    k: int = 10,
    n_domains: Optional[int] = None,
) -> np.ndarray:
    """Shannon equitability of domain labels in each k-neighborhood.

    For each point, the label proportions ``p_j`` over its ``k`` nearest
    neighbors (Euclidean, excluding the point itself) give an entropy
    ``H = -sum p_j ln p_j`` which is normalized by ``ln(D)`` where ``D`` is
    the total number of domains in the dataset (not the neighborhood).
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape[0] != points.shape[0]:
        raise ParameterError("points and labels must have equal length")
    uniq = np.unique(labels)
    d = int(n_domains) if n_domains is not None else int(uniq.size)
    if d < 2:
        raise ParameterError(f"need at least 2 domains, got {d}")

    label_ids = np.searchsorted(uniq, labels)
    idx = _knn_indices(points, k)
    out = np.empty(points.shape[0])
    log_d = np.log(d)
    for i in range(points.shape[0]):
        counts = np.bincount(label_ids[idx[i]], minlength=uniq.size)
        p = counts[counts > 0] / k
        h = -np.sum(p * np.log(p))
        out[i] = h / log_d
    return out


def mld(
    points: np.ndarray,
    labels: np.ndarray,
    k: int = 10,
    n_domains: Optional[int] = None,
) -> float:
    """Mean local diversity over all points (higher means better mixed)."""
    return float(local_diversity(points, labels, k=k, n_domains=n_domains).mean())


@dataclass(frozen=True)
class BatchEffectReport:
    """Color statistics, 2D embedding, and mixing score of a tile set."""

    stats: np.ndarray
    embedding: np.ndarray
    domains: np.ndarray
    mld: float


def evaluate_batch_effects(
    tiles: Sequence[ImageTile],
    k: int = 10,
    seed: int = 0,
    embed_params: EmbedParams = EmbedParams(),
    standardize: bool = True,
) -> BatchEffectReport:
    """Full pipeline: stats, (standardized) embedding, and mLD.

    Per-feature standardization equalizes the very different scales of the
    color components (LAB spans ~100 units, RGB one) before the embedding.
    """
    domains = np.array([t.domain_id for t in tiles])
    if np.any(domains == None):  # noqa: E711 - object array comparison
        raise ParameterError("all tiles need a domain_id for batch metrics")
    domains = domains.astype(np.int64)

    stats = color_stats_matrix(tiles)
    feats = stats
    if standardize:
        std = stats.std(axis=0)
        feats = (stats - stats.mean(axis=0)) / np.where(std > 0, std, 1.0)
    xy = embed_2d(feats, embed_params, seed=seed)
    score = mld(xy, domains, k=k)
    return BatchEffectReport(stats=stats, embedding=xy, domains=domains, mld=score)
