"""Seeded 2D embeddings of color-statistics vectors.

``embed_2d`` implements the UMAP recipe at desk scale: a fuzzy k-nearest
neighbor graph with per-point bandwidth calibration, symmetrized by the
probabilistic t-conorm, laid out in 2D by stochastic gradient descent on the
fuzzy cross-entropy with negative sampling. A deterministic PCA projection
is available as an oracle-friendly fallback (``method="pca"``).

The optimizer is a vectorized variant: each epoch samples all edges with
probability proportional to their membership strength and applies the
attractive/repulsive updates in bulk. This keeps the layout deterministic
under a fixed seed with a single thread.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, sparse, spatial

from .errors import ParameterError

SMOOTH_K_TOLERANCE = 1e-5
GRAD_CLIP = 4.0


@dataclass(frozen=True)
class EmbedParams:
    """Knobs of the 2D embedding."""

    n_neighbors: int = 15
    min_dist: float = 0.1
    n_epochs: int = 300
    negative_samples: int = 5
    learning_rate: float = 1.0
    method: str = "umap"  # or "pca"


def pca_2d(x: np.ndarray) -> np.ndarray:
    """Project rows of ``x`` onto their first two principal components."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    # Fix component signs so the largest-magnitude loading is positive.
    for i in range(comps.shape[0]):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T


def _smooth_knn_calibration(dists: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (rho, sigma) so that sum_j exp(-(d_ij - rho)/sigma) = log2(k)."""
    n, k = dists.shape
    # rho is the distance to the nearest neighbor with positive distance.
    rho = np.zeros(n)
    for i in range(n):
        pos = dists[i][dists[i] > 0]
        rho[i] = pos[0] if pos.size else 0.0
    target = np.log2(k)
    sigma = np.ones(n)
    for i in range(n):
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(64):
            val = np.exp(-np.maximum(dists[i] - rho[i], 0.0) / mid).sum()
            if abs(val - target) < SMOOTH_K_TOLERANCE:
                break
            if val > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if np.isinf(hi) else (lo + hi) / 2.0
        sigma[i] = mid
    return rho, sigma


def _fuzzy_graph(x: np.ndarray, n_neighbors: int) -> sparse.coo_matrix:
    n = x.shape[0]
    tree = spatial.cKDTree(x)
    dists, idx = tree.query(x, k=n_neighbors + 1)
    # Drop each point's own entry (guard against duplicate coordinates).
    keep_d = np.empty((n, n_neighbors))
    keep_i = np.empty((n, n_neighbors), dtype=np.int64)
    for i in range(n):
        row = [j for j in range(n_neighbors + 1) if idx[i, j] != i][:n_neighbors]
        keep_d[i] = dists[i, row]
        keep_i[i] = idx[i, row]

    rho, sigma = _smooth_knn_calibration(keep_d)
    w = np.exp(-np.maximum(keep_d - rho[:, None], 0.0) / sigma[:, None])

    rows = np.repeat(np.arange(n), n_neighbors)
    cols = keep_i.reshape(-1)
    p = sparse.coo_matrix((w.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()
    pt = p.T.tocsr()
    graph = p + pt - p.multiply(pt)
    graph = graph.tocoo()
    graph.eliminate_zeros()
    return graph


def _fit_ab(min_dist: float) -> tuple[float, float]:
    """Fit the rational attraction curve 1/(1 + a*y^(2b)) to the min_dist kernel."""
    xs = np.linspace(0.0, 3.0, 300)
    ys = np.where(xs < min_dist, 1.0, np.exp(-(xs - min_dist)))

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    (a, b), _ = optimize.curve_fit(curve, xs, ys, p0=(1.0, 1.0), maxfev=10000)
    return float(a), float(b)


def _optimize_layout(
    graph: sparse.coo_matrix,
    init: np.ndarray,
    params: EmbedParams,
    rng: np.random.Generator,
) -> np.ndarray:
    n = init.shape[0]
    head, tail, weight = graph.row, graph.col, graph.data
    p_edge = weight / weight.max()
    a, b = _fit_ab(params.min_dist)
    y = init.copy()

    for epoch in range(params.n_epochs):
        alpha = params.learning_rate * (1.0 - epoch / params.n_epochs)
        active = rng.random(p_edge.size) < p_edge
        h, t = head[active], tail[active]
        if h.size == 0:
            continue

        diff = y[h] - y[t]
        d2 = np.maximum(np.einsum("ij,ij->i", diff, diff), 1e-12)
        # Attractive gradient of the fuzzy cross-entropy.
        coef = (-2.0 * a * b * d2 ** (b - 1.0)) / (1.0 + a * d2 ** b)
        grad = np.clip(coef[:, None] * diff, -GRAD_CLIP, GRAD_CLIP)
        np.add.at(y, h, alpha * grad)
        np.add.at(y, t, -alpha * grad)

        # Repulsive updates from uniformly sampled non-neighbors.
        for _ in range(params.negative_samples):
            neg = rng.integers(0, n, size=h.size)
            diff = y[h] - y[neg]
            d2 = np.einsum("ij,ij->i", diff, diff)
            coef = (2.0 * b) / ((0.001 + d2) * (1.0 + a * d2 ** b))
            grad = np.clip(coef[:, None] * diff, -GRAD_CLIP, GRAD_CLIP)
            np.add.at(y, h, alpha * grad)
    return y


def embed_2d(
    x: np.ndarray,
    params: EmbedParams = EmbedParams(),
    seed: Optional[int] = 0,
) -> np.ndarray:
    """Embed the rows of ``x`` into 2D, deterministically under ``seed``.

    Raises :class:`ParameterError` when there are not strictly more points
    than ``n_neighbors``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError(f"expected a 2-d feature matrix, got shape {x.shape}")
    n = x.shape[0]
    if params.method == "pca":
        return pca_2d(x)
    if params.method != "umap":
        raise ParameterError(f"unknown embedding method {params.method!r}")
    if n <= params.n_neighbors:
        raise ParameterError(
            f"need more than n_neighbors={params.n_neighbors} points, got {n}"
        )

    rng = np.random.default_rng(seed)
    graph = _fuzzy_graph(x, params.n_neighbors)

    init = pca_2d(x)
    scale = np.abs(init).max()
    if scale > 0:
        init = init / scale * 10.0
    init = init + rng.normal(scale=1e-4, size=init.shape)

    return _optimize_layout(graph, init, params, rng)
