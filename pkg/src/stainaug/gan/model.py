"""Numpy-facing wrapper around the five networks.

`StainGAN` owns a `Networks` bundle plus the domain names and exposes
single-image encode/generate/discriminate operations that take and return
numpy arrays. All operations are deterministic given the weights: there is
no dropout and normalization keeps no running statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from ..errors import DomainVectorError, InputShapeError, InputValueError
from ..types import ATTRIBUTE_DIM, DomainVector, ImageTile
from .networks import ArchConfig, Networks, build_networks


@dataclass(frozen=True)
class ContentCode:
    """Spatial structure code of one tile, shape (channels, h, w)."""

    features: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float32)
        if f.ndim != 3:
            raise InputShapeError(f"content code must be 3-d, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise InputValueError("content code contains non-finite values")
        object.__setattr__(self, "features", f)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.features.shape)


@dataclass(frozen=True)
class AttributeCode:
    """Color appearance code: an 8-vector, with (mean, logvar) when encoded."""

    value: np.ndarray
    mean: Optional[np.ndarray] = None
    logvar: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("value", "mean", "logvar"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64).reshape(-1)
            if v.shape != (ATTRIBUTE_DIM,):
                raise InputShapeError(
                    f"attribute {name} must have length {ATTRIBUTE_DIM}, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise InputValueError(f"attribute {name} is not finite")
            object.__setattr__(self, name, v)


def _as_image_tensor(image: Union[ImageTile, np.ndarray], size: int,
                     dtype: torch.dtype) -> torch.Tensor:
    tile = image if isinstance(image, ImageTile) else ImageTile(pixels=image)
    if tile.size != size:
        raise InputShapeError(
            f"tile size {tile.size} does not match the configured size {size}")
    return torch.from_numpy(tile.pixels[None]).to(dtype)


class StainGAN:
    """The translation model: five networks plus domain bookkeeping."""

    def __init__(self, networks: Networks, domain_names: Optional[Sequence[str]] = None):
        cfg = networks.config
        if domain_names is None:
            domain_names = [f"domain{i}" for i in range(cfg.domain_count)]
        if len(domain_names) != cfg.domain_count:
            raise DomainVectorError(
                f"got {len(domain_names)} domain names for {cfg.domain_count} domains")
        self.networks = networks
        self.config = cfg
        self.domain_names: List[str] = list(domain_names)
        networks.eval_()

    @classmethod
    def new(cls, config: ArchConfig, domain_names: Optional[Sequence[str]] = None,
            seed: int = 0) -> "StainGAN":
        """Freshly initialized model; the seed fixes the weight draw."""
        torch.manual_seed(seed)
        return cls(build_networks(config), domain_names)

    # -- helpers -----------------------------------------------------------

    @property
    def domain_count(self) -> int:
        return self.config.domain_count

    @property
    def image_size(self) -> int:
        return self.config.image_size

    def domain_vector(self, domain: Union[int, str, DomainVector]) -> DomainVector:
        """Resolve a domain given by index, name, or vector."""
        if isinstance(domain, DomainVector):
            if domain.count != self.domain_count:
                raise DomainVectorError(
                    f"domain vector has {domain.count} entries, model has "
                    f"{self.domain_count} domains")
            return domain
        if isinstance(domain, str):
            if domain not in self.domain_names:
                raise DomainVectorError(f"unknown domain name {domain!r}")
            domain = self.domain_names.index(domain)
        return DomainVector.one_hot(int(domain), self.domain_count)

    def _dtype(self) -> torch.dtype:
        return next(self.networks.enc_content.parameters()).dtype

    # -- operations --------------------------------------------------------

    def encode_content(self, image: Union[ImageTile, np.ndarray]) -> ContentCode:
        """Map a tile to its structure code."""
        x = _as_image_tensor(image, self.image_size, self._dtype())
        with torch.no_grad():
            features = self.networks.enc_content(x)[0]
        return ContentCode(features=features.numpy())

    def encode_attribute(self, image: Union[ImageTile, np.ndarray],
                         domain: Union[int, str, DomainVector]) -> Tuple[np.ndarray, np.ndarray]:
        """Map a tile to the (mean, logvar) of its color appearance code."""
        dvec = self.domain_vector(domain)
        dvec.require_one_hot()
        x = _as_image_tensor(image, self.image_size, self._dtype())
        d = torch.from_numpy(dvec.weights[None]).to(self._dtype())
        with torch.no_grad():
            mean, logvar = self.networks.enc_attr(x, d)
        return mean[0].numpy().astype(np.float64), logvar[0].numpy().astype(np.float64)

    def generate(self, content: ContentCode,
                 attribute: Union[AttributeCode, np.ndarray],
                 domain: Union[int, str, DomainVector]) -> ImageTile:
        """Decode (content, attribute, domain) into a tile in [0, 1].

        The domain may be any convex mixture, so interpolated vectors are
        accepted here directly.
        """
        cfg = self.config
        expected = (cfg.content_channels, cfg.content_size, cfg.content_size)
        if content.shape != expected:
            raise InputShapeError(
                f"content code shape {content.shape} does not match {expected}")
        if not isinstance(attribute, AttributeCode):
            attribute = AttributeCode(value=attribute)
        dvec = self.domain_vector(domain)
        dtype = self._dtype()
        zc = torch.from_numpy(content.features[None]).to(dtype)
        za = torch.from_numpy(attribute.value[None]).to(dtype)
        d = torch.from_numpy(dvec.weights[None]).to(dtype)
        with torch.no_grad():
            out = self.networks.gen(zc, za, d)[0]
        pixels = np.clip(out.numpy().astype(np.float32), 0.0, 1.0)
        return ImageTile(pixels=pixels)

    def discriminate_domain(self, image: Union[ImageTile, np.ndarray]) -> Tuple[float, np.ndarray]:
        """Mean patch realness plus domain logits for a tile."""
        x = _as_image_tensor(image, self.image_size, self._dtype())
        with torch.no_grad():
            realness, logits = self.networks.dis_domain(x)
        return float(realness.mean()), logits[0].numpy().astype(np.float64)

    def discriminate_content(self, content: ContentCode) -> np.ndarray:
        """Domain logits predicted from a structure code."""
        cfg = self.config
        expected = (cfg.content_channels, cfg.content_size, cfg.content_size)
        if content.shape != expected:
            raise InputShapeError(
                f"content code shape {content.shape} does not match {expected}")
        zc = torch.from_numpy(content.features[None]).to(self._dtype())
        with torch.no_grad():
            logits = self.networks.dis_content(zc)
        return logits[0].numpy().astype(np.float64)
