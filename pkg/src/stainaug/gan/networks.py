"""The five networks of the multi-domain color translation model.

A content encoder maps a tile to a spatial, appearance-free structure code;
an attribute encoder maps a tile (conditioned on its domain) to the mean and
log-variance of an 8-dimensional color appearance code; the generator
reassembles a tile from a content code, an attribute code, and a domain
weight vector. A domain discriminator judges realness and classifies the
domain of tiles; a content discriminator tries to recover the domain from
content codes, which trains the content encoder to drop domain cues.

All image inputs are in [0, 1]; encoders rescale to [-1, 1] internally and
the generator squashes its output back to [0, 1] with a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn as nn

from ..errors import ConfigError
from ..types import ATTRIBUTE_DIM


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters; all sizes are configurable."""

    image_size: int = 64
    domain_count: int = 5
    base_channels: int = 32
    content_downsamples: int = 2
    content_channels: Optional[int] = None
    content_res_blocks: int = 3
    gen_res_blocks: int = 4
    attr_downsamples: int = 4
    dis_downsamples: int = 4
    film_hidden: int = 64

    def __post_init__(self):
        if self.domain_count < 2:
            raise ConfigError("domain_count must be >= 2")
        for name in ("image_size", "base_channels", "content_downsamples",
                     "content_res_blocks", "gen_res_blocks",
                     "attr_downsamples", "dis_downsamples", "film_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.image_size % (2 ** max(self.content_downsamples,
                                       self.attr_downsamples,
                                       self.dis_downsamples)) != 0:
            raise ConfigError("image_size must be divisible by the downsampling factors")
        derived = self.base_channels * 2 ** self.content_downsamples
        if self.content_channels is None:
            object.__setattr__(self, "content_channels", derived)
        elif self.content_channels != derived:
            raise ConfigError(
                "content_channels must equal base_channels * 2**content_downsamples "
                f"({derived}), got {self.content_channels}")

    @property
    def content_size(self) -> int:
        return self.image_size // 2 ** self.content_downsamples

    def as_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "domain_count": self.domain_count,
            "base_channels": self.base_channels,
            "content_downsamples": self.content_downsamples,
            "content_channels": self.content_channels,
            "content_res_blocks": self.content_res_blocks,
            "gen_res_blocks": self.gen_res_blocks,
            "attr_downsamples": self.attr_downsamples,
            "dis_downsamples": self.dis_downsamples,
            "film_hidden": self.film_hidden,
        }


def gaussian_weights_init(m: nn.Module) -> None:
    classname = m.__class__.__name__
    if classname.find("Conv") == 0 and hasattr(m, "weight"):
        nn.init.normal_(m.weight, 0.0, 0.02)
        if m.bias is not None:
            nn.init.zeros_(m.bias)


def _conv(in_ch, out_ch, kernel, stride=1):
    return nn.Conv2d(in_ch, out_ch, kernel, stride=stride,
                     padding=kernel // 2, padding_mode="reflect")


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = _conv(channels, channels, 3)
        self.norm1 = nn.InstanceNorm2d(channels)
        self.conv2 = _conv(channels, channels, 3)
        self.norm2 = nn.InstanceNorm2d(channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return x + h


class FilmResBlock(nn.Module):
    """Residual block whose normalized features are scaled/shifted per channel."""

    def __init__(self, channels: int, cond_dim: int):
        super().__init__()
        self.conv1 = _conv(channels, channels, 3)
        self.norm1 = nn.InstanceNorm2d(channels)
        self.conv2 = _conv(channels, channels, 3)
        self.norm2 = nn.InstanceNorm2d(channels)
        self.film1 = nn.Linear(cond_dim, 2 * channels)
        self.film2 = nn.Linear(cond_dim, 2 * channels)
        self.act = nn.ReLU(inplace=True)

    @staticmethod
    def _modulate(x, film):
        gamma, beta = film.chunk(2, dim=1)
        return x * (1.0 + gamma[:, :, None, None]) + beta[:, :, None, None]

    def forward(self, x, cond):
        h = self.act(self._modulate(self.norm1(self.conv1(x)), self.film1(cond)))
        h = self._modulate(self.norm2(self.conv2(h)), self.film2(cond))
        return x + h


class FilmUpsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, cond_dim: int):
        super().__init__()
        self.conv = _conv(in_ch, out_ch, 3)
        self.norm = nn.InstanceNorm2d(out_ch)
        self.film = nn.Linear(cond_dim, 2 * out_ch)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x, cond):
        x = nn.functional.interpolate(x, scale_factor=2, mode="nearest")
        h = self.norm(self.conv(x))
        return self.act(FilmResBlock._modulate(h, self.film(cond)))


class ContentEncoder(nn.Module):
    def __init__(self, cfg: ArchConfig):
        super().__init__()
        ch = cfg.base_channels
        layers = [_conv(3, ch, 7), nn.InstanceNorm2d(ch), nn.ReLU(inplace=True)]
        for _ in range(cfg.content_downsamples):
            layers += [nn.Conv2d(ch, ch * 2, 4, stride=2, padding=1),
                       nn.InstanceNorm2d(ch * 2), nn.ReLU(inplace=True)]
            ch *= 2
        self.down = nn.Sequential(*layers)
        self.blocks = nn.Sequential(*[ResBlock(ch) for _ in range(cfg.content_res_blocks)])
        self.out_channels = ch

    def forward(self, x):
        return self.blocks(self.down(x * 2.0 - 1.0))


class AttributeEncoder(nn.Module):
    """Domain-conditioned encoder of the color appearance distribution."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        ch = cfg.base_channels
        layers = [nn.Conv2d(3 + cfg.domain_count, ch, 4, stride=2, padding=1),
                  nn.ReLU(inplace=True)]
        for _ in range(cfg.attr_downsamples - 1):
            nxt = min(ch * 2, cfg.base_channels * 4)
            layers += [nn.Conv2d(ch, nxt, 4, stride=2, padding=1),
                       nn.ReLU(inplace=True)]
            ch = nxt
        self.net = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc_mean = nn.Linear(ch, ATTRIBUTE_DIM)
        self.fc_logvar = nn.Linear(ch, ATTRIBUTE_DIM)

    def forward(self, x, domain):
        d = domain[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        h = self.net(torch.cat([x * 2.0 - 1.0, d], dim=1))
        h = self.pool(h).flatten(1)
        return self.fc_mean(h), self.fc_logvar(h)


class Generator(nn.Module):
    """Decodes (content, attribute, domain) into a [0, 1] tile."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        ch = cfg.content_channels
        cond = cfg.film_hidden
        self.cond_mlp = nn.Sequential(
            nn.Linear(ATTRIBUTE_DIM, cond), nn.ReLU(inplace=True),
            nn.Linear(cond, cond), nn.ReLU(inplace=True),
        )
        self.stem = nn.Sequential(_conv(ch + cfg.domain_count, ch, 3),
                                  nn.InstanceNorm2d(ch), nn.ReLU(inplace=True))
        self.blocks = nn.ModuleList(
            [FilmResBlock(ch, cond) for _ in range(cfg.gen_res_blocks)])
        ups = []
        for _ in range(cfg.content_downsamples):
            ups.append(FilmUpsample(ch, ch // 2, cond))
            ch //= 2
        self.ups = nn.ModuleList(ups)
        self.head = _conv(ch, 3, 7)

    def forward(self, content, attribute, domain):
        cond = self.cond_mlp(attribute)
        d = domain[:, :, None, None].expand(-1, -1, content.shape[2], content.shape[3])
        h = self.stem(torch.cat([content, d], dim=1))
        for block in self.blocks:
            h = block(h, cond)
        for up in self.ups:
            h = up(h, cond)
        return torch.sigmoid(self.head(h))


class DomainDiscriminator(nn.Module):
    """Patch realness map plus a domain classification head."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        ch = cfg.base_channels
        layers = [nn.Conv2d(3, ch, 4, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True)]
        for _ in range(cfg.dis_downsamples - 1):
            nxt = min(ch * 2, cfg.base_channels * 8)
            layers += [nn.Conv2d(ch, nxt, 4, stride=2, padding=1),
                       nn.LeakyReLU(0.2, inplace=True)]
            ch = nxt
        self.net = nn.Sequential(*layers)
        self.realness = nn.Conv2d(ch, 1, 3, padding=1)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.domain_head = nn.Linear(ch, cfg.domain_count)

    def forward(self, x):
        h = self.net(x * 2.0 - 1.0)
        return self.realness(h), self.domain_head(self.pool(h).flatten(1))


class ContentDiscriminator(nn.Module):
    """Predicts the source domain from a content code."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        ch = cfg.content_channels
        layers = []
        for _ in range(3):
            layers += [nn.Conv2d(ch, ch, 3, stride=2, padding=1),
                       nn.LeakyReLU(0.2, inplace=True)]
        self.net = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(ch, cfg.domain_count)

    def forward(self, content):
        return self.head(self.pool(self.net(content)).flatten(1))


@dataclass
class Networks:
    """The five networks as one bundle."""

    enc_content: ContentEncoder
    enc_attr: AttributeEncoder
    gen: Generator
    dis_domain: DomainDiscriminator
    dis_content: ContentDiscriminator
    config: ArchConfig = field(repr=False, default=None)

    def generator_side(self):
        """Parameters updated on the encoder/generator objective."""
        for net in (self.enc_content, self.enc_attr, self.gen):
            yield from net.parameters()

    def all_modules(self) -> dict:
        return {
            "enc_content": self.enc_content,
            "enc_attr": self.enc_attr,
            "gen": self.gen,
            "dis_domain": self.dis_domain,
            "dis_content": self.dis_content,
        }

    def eval_(self):
        for m in self.all_modules().values():
            m.eval()
        return self

    def train_(self):
        for m in self.all_modules().values():
            m.train()
        return self

    def to_(self, dtype=None, device=None):
        for m in self.all_modules().values():
            m.to(dtype=dtype, device=device)
        return self


def build_networks(cfg: ArchConfig) -> Networks:
    """Construct and gaussian-initialize all five networks."""
    nets = Networks(
        enc_content=ContentEncoder(cfg),
        enc_attr=AttributeEncoder(cfg),
        gen=Generator(cfg),
        dis_domain=DomainDiscriminator(cfg),
        dis_content=ContentDiscriminator(cfg),
        config=cfg,
    )
    for m in nets.all_modules().values():
        m.apply(gaussian_weights_init)
    return nets
