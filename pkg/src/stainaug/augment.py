"""Model-based color augmentation of tiles from a trained checkpoint.

One input tile maps to arbitrarily many color variants: encode its structure
once, then decode under sampled attribute vectors and (possibly interpolated)
domain vectors. Structure is preserved because only the attribute/domain
inputs change.

Tiles whose size differs from the trained size are center-cropped or
symmetrically padded to it, and the augmented result is mapped back onto the
original raster; nothing is ever rescaled. Pass ``size_policy="strict"`` to
reject mismatched sizes instead.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .errors import DomainVectorError, ParameterError, RangeError, ResizePolicyError
from .gan.checkpoint import Checkpoint
from .gan.model import AttributeCode, StainGAN
from .types import ATTRIBUTE_DIM, DomainVector, ImageTile, as_chw


def sample_attribute(rng: np.random.Generator) -> AttributeCode:
    """One standard-normal draw of the 8-dim color appearance vector."""
    return AttributeCode(value=rng.standard_normal(ATTRIBUTE_DIM))


def interpolate_domains(d_a: DomainVector, d_b: DomainVector,
                        t: float) -> DomainVector:
    """Convex combination (1 - t) * d_a + t * d_b of two domain vectors."""
    if not (np.isfinite(t) and 0.0 <= t <= 1.0):
        raise RangeError(f"interpolation weight t must lie in [0, 1], got {t!r}")
    if d_a.count != d_b.count:
        raise DomainVectorError(
            f"domain vectors disagree in length: {d_a.count} vs {d_b.count}")
    if t == 0.0:
        return d_a
    if t == 1.0:
        return d_b
    return DomainVector((1.0 - t) * d_a.weights + t * d_b.weights)


def _fit_window(size: int, trained: int) -> Tuple[slice, slice]:
    """Slices into (original, padded/cropped) rasters for the shared window."""
    if size >= trained:
        off = (size - trained) // 2
        return slice(off, off + trained), slice(0, trained)
    off = (trained - size) // 2
    return slice(0, size), slice(off, off + size)


class Augmenter:
    """Reusable augmentation engine bound to one trained model."""

    def __init__(self, model: StainGAN, attribute_stats: Optional[dict] = None):
        self.model = model
        self.attribute_stats = attribute_stats
        self._chol: Dict[int, np.ndarray] = {}

    @classmethod
    def from_checkpoint(cls, checkpoint: Union[str, Path, Checkpoint]) -> "Augmenter":
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = Checkpoint.load(checkpoint)
        return cls(checkpoint.load_model(), checkpoint.attribute_stats)

    @property
    def domain_count(self) -> int:
        return self.model.domain_count

    @property
    def trained_size(self) -> int:
        return self.model.image_size

    # -- attribute sampling --------------------------------------------------

    def sample_domain_attribute(self, rng: np.random.Generator,
                                domain: int) -> AttributeCode:
        """Draw from the per-domain Gaussian fitted at training time."""
        stats = self.attribute_stats
        if stats is None:
            raise ParameterError(
                "checkpoint carries no fitted attribute statistics; "
                "use sample_attribute instead")
        if domain not in self._chol:
            cov = np.asarray(stats["cov"][domain], dtype=np.float64)
            cov = cov + 1e-9 * np.eye(cov.shape[0])
            self._chol[domain] = np.linalg.cholesky(cov)
        mean = np.asarray(stats["mean"][domain], dtype=np.float64)
        return AttributeCode(
            value=mean + self._chol[domain] @ rng.standard_normal(ATTRIBUTE_DIM))

    # -- single-tile API -----------------------------------------------------

    def augment(self, image: Union[ImageTile, np.ndarray],
                target_domain: Optional[Union[int, str, DomainVector]] = None,
                z_a: Optional[Union[AttributeCode, np.ndarray]] = None,
                rng: Optional[np.random.Generator] = None,
                size_policy: str = "crop_pad") -> ImageTile:
        """Re-render one tile under a chosen or sampled color appearance.

        ``target_domain`` may be an index, a name, or any convex domain
        vector (so interpolations are accepted). Missing domain/attribute
        arguments are sampled from ``rng``.
        """
        if size_policy not in ("crop_pad", "strict"):
            raise ParameterError(f"unknown size_policy {size_policy!r}")
        if target_domain is None or z_a is None:
            if rng is None:
                raise ParameterError(
                    "an rng is required when target_domain or z_a is sampled")
        if target_domain is None:
            target_domain = int(rng.integers(self.domain_count))
        if z_a is None:
            z_a = sample_attribute(rng)
        dvec = self.model.domain_vector(target_domain)

        tile = image if isinstance(image, ImageTile) else ImageTile(pixels=image)
        size, trained = tile.size, self.trained_size
        if size != trained and size_policy == "strict":
            raise ResizePolicyError(
                f"tile size {size} != trained size {trained} (strict policy)")

        work = tile.pixels
        if size < trained:
            pad = (trained - size) // 2
            pads = ((0, 0), (pad, trained - size - pad), (pad, trained - size - pad))
            mode = "reflect" if size > max(p for pair in pads for p in pair) else "edge"
            work = np.pad(work, pads, mode=mode)
        elif size > trained:
            orig, _ = _fit_window(size, trained)
            work = work[:, orig, orig]

        content = self.model.encode_content(work)
        out = self.model.generate(content, z_a, dvec).pixels

        if size < trained:
            _, win = _fit_window(size, trained)
            out = out[:, win, win]
        elif size > trained:
            orig, _ = _fit_window(size, trained)
            merged = tile.pixels.copy()
            merged[:, orig, orig] = out
            out = merged
        return tile.with_pixels(np.ascontiguousarray(out))

    def stochastic_transform(self, image: Union[ImageTile, np.ndarray],
                             rng: np.random.Generator, p: float = 0.5,
                             mode: str = "domain",
                             attribute_source: str = "standard") -> ImageTile:
        """With probability ``p`` augment the tile, else return it unchanged.

        ``mode="domain"`` picks a training domain uniformly;
        ``mode="interpolate"`` blends two distinct domains at t ~ U[0, 1].
        ``attribute_source="fitted"`` draws the attribute from the stored
        per-domain Gaussian (for interpolation, the first endpoint's).
        """
        if not (np.isfinite(p) and 0.0 <= p <= 1.0):
            raise RangeError(f"probability p must lie in [0, 1], got {p!r}")
        if mode not in ("domain", "interpolate"):
            raise ParameterError(f"unknown mode {mode!r}")
        if attribute_source not in ("standard", "fitted"):
            raise ParameterError(f"unknown attribute_source {attribute_source!r}")
        tile = image if isinstance(image, ImageTile) else ImageTile(pixels=image)
        if rng.random() >= p:
            return tile
        if mode == "domain":
            domain_idx = int(rng.integers(self.domain_count))
            target: Union[int, DomainVector] = domain_idx
        else:
            i, j = rng.choice(self.domain_count, size=2, replace=False)
            t = float(rng.random())
            target = interpolate_domains(
                DomainVector.one_hot(int(i), self.domain_count),
                DomainVector.one_hot(int(j), self.domain_count), t)
            domain_idx = int(i)
        if attribute_source == "fitted":
            z_a = self.sample_domain_attribute(rng, domain_idx)
        else:
            z_a = sample_attribute(rng)
        return self.augment(tile, target_domain=target, z_a=z_a)

    # -- batched fast path -----------------------------------------------------

    def augment_batch(self, images: np.ndarray, domain_weights: np.ndarray,
                      attributes: np.ndarray, chunk: int = 32) -> np.ndarray:
        """Vectorized augmentation of a (n, 3, s, s) stack at the trained size.

        ``domain_weights`` is (n, D); ``attributes`` is (n, 8). Returns the
        augmented stack, float32 in [0, 1].
        """
        images = np.ascontiguousarray(images, dtype=np.float32)
        n = images.shape[0]
        if images.ndim != 4 or images.shape[2] != self.trained_size:
            raise ResizePolicyError(
                f"augment_batch needs (n, 3, {self.trained_size}, "
                f"{self.trained_size}) input, got {images.shape}")
        if domain_weights.shape != (n, self.domain_count):
            raise DomainVectorError(
                f"domain_weights must be (n, {self.domain_count})")
        if attributes.shape != (n, ATTRIBUTE_DIM):
            raise ParameterError(f"attributes must be (n, {ATTRIBUTE_DIM})")
        nets = self.model.networks
        dtype = next(nets.enc_content.parameters()).dtype
        out = np.empty_like(images)
        with torch.no_grad():
            for lo in range(0, n, chunk):
                hi = min(lo + chunk, n)
                x = torch.from_numpy(images[lo:hi]).to(dtype)
                d = torch.from_numpy(domain_weights[lo:hi]).to(dtype)
                za = torch.from_numpy(attributes[lo:hi]).to(dtype)
                y = nets.gen(nets.enc_content(x), za, d)
                out[lo:hi] = y.to(torch.float32).numpy()
        return np.clip(out, 0.0, 1.0)


def augment(image: Union[ImageTile, np.ndarray],
            checkpoint: Union[str, Path, Checkpoint, Augmenter],
            target_domain: Optional[Union[int, str, DomainVector]] = None,
            z_a: Optional[Union[AttributeCode, np.ndarray]] = None,
            rng: Optional[np.random.Generator] = None,
            size_policy: str = "crop_pad") -> ImageTile:
    """One-shot form of :meth:`Augmenter.augment`."""
    aug = checkpoint if isinstance(checkpoint, Augmenter) else Augmenter.from_checkpoint(checkpoint)
    return aug.augment(image, target_domain=target_domain, z_a=z_a, rng=rng,
                       size_policy=size_policy)


def stochastic_transform(image: Union[ImageTile, np.ndarray],
                         checkpoint: Union[str, Path, Checkpoint, Augmenter],
                         rng: np.random.Generator, p: float = 0.5,
                         mode: str = "domain") -> ImageTile:
    """One-shot form of :meth:`Augmenter.stochastic_transform`."""
    aug = checkpoint if isinstance(checkpoint, Augmenter) else Augmenter.from_checkpoint(checkpoint)
    return aug.stochastic_transform(image, rng, p=p, mode=mode)
