"""Deterministic multi-domain histology-like toy data.

Every tile is built in two independent stages:

* structure (its own rng stream): elliptical "nuclei" scattered over a
  smooth textured background; tumor tiles additionally get a dense cluster
  of small nuclei with an aligned boolean mask. The tumor signal is purely
  morphological (local blob density) and uses the same color distribution
  as normal nuclei, so class labels carry no color shortcut.
* domain appearance (a second rng stream): a fixed per-domain style (hue
  rotation evenly spaced around the circle, saturation/value scaling, an
  additive color cast, blur, and a noise level) plus small per-tile jitter.

Because the structure stream never sees the domain index when
``paired_structure`` is on, the same tile index yields the same geometry in
every domain, which enables paired cross-domain tests. Generation is pure:
a (seed, domain, index) triple fully determines a tile.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from .colorspace import hsv_to_rgb, rgb_to_hsv
from .errors import ConfigError
from .io import save_tiles
from .tiling import TileRecord
from .types import NON_TUMOR, TUMOR, ImageTile

#: Styles are derived from this fixed entropy so domain identity does not
#: depend on the dataset seed.
_STYLE_ENTROPY = 20240713

_BG_COLOR = np.array([0.91, 0.79, 0.86])
#: Same hue as the background, darker and more saturated: tile-level mean
#: hue then barely depends on nuclei density, keeping domains tight in hue.
_NUCLEUS_COLOR = np.array([0.48, 0.24, 0.38])


@dataclass(frozen=True)
class SynthConfig:
    domains: int = 5
    tiles_per_domain: int = 200
    size: int = 64
    seed: int = 0
    tumor_prevalence: float = 0.5
    paired_structure: bool = False

    def __post_init__(self):
        if self.domains < 2:
            raise ConfigError("need at least two domains")
        if self.tiles_per_domain < 1 or self.size < 16:
            raise ConfigError("tiles_per_domain must be >= 1 and size >= 16")
        if not 0.0 <= self.tumor_prevalence <= 1.0:
            raise ConfigError("tumor_prevalence must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "domains": self.domains, "tiles_per_domain": self.tiles_per_domain,
            "size": self.size, "seed": self.seed,
            "tumor_prevalence": self.tumor_prevalence,
            "paired_structure": self.paired_structure,
        }


@dataclass(frozen=True)
class DomainStyle:
    """The fixed color appearance of one domain."""

    hue_shift: float
    sat_scale: float
    val_scale: float
    cast: np.ndarray
    noise_sigma: float
    blur_sigma: float


def domain_styles(count: int) -> List[DomainStyle]:
    """Per-domain styles; hue shifts are spread evenly around the circle."""
    styles = []
    for d in range(count):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=_STYLE_ENTROPY, spawn_key=(d,)))
        styles.append(DomainStyle(
            hue_shift=d / count,
            sat_scale=float(rng.uniform(0.7, 1.3)),
            val_scale=float(rng.uniform(0.85, 1.1)),
            cast=rng.uniform(-0.05, 0.05, size=3),
            noise_sigma=float(rng.uniform(0.005, 0.03)),
            blur_sigma=float(rng.uniform(0.0, 0.8)),
        ))
    return styles


def most_shifted_domain(train_domain: int, count: int) -> int:
    """The domain whose hue shift is circularly farthest from the given one."""
    hues = np.array([s.hue_shift for s in domain_styles(count)]) % 1.0
    delta = np.abs(hues - hues[train_domain])
    dist = np.minimum(delta, 1.0 - delta)
    return int(np.argmax(dist))


def _paint_ellipses(indicator: np.ndarray, shade: np.ndarray,
                    centers: np.ndarray, radii: np.ndarray,
                    angles: np.ndarray, shades: np.ndarray) -> None:
    """Rasterize filled rotated ellipses onto bounded local windows."""
    size = indicator.shape[0]
    for (cy, cx), (ry, rx), theta, value in zip(centers, radii, angles, shades):
        r = max(ry, rx)
        y0, y1 = max(0, int(cy - r - 1)), min(size, int(cy + r + 2))
        x0, x1 = max(0, int(cx - r - 1)), min(size, int(cx + r + 2))
        if y0 >= y1 or x0 >= x1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        dy, dx = yy - cy, xx - cx
        c, s = np.cos(theta), np.sin(theta)
        u = (dx * c + dy * s) / rx
        v = (-dx * s + dy * c) / ry
        inside = u * u + v * v <= 1.0
        window = indicator[y0:y1, x0:x1]
        shade_win = shade[y0:y1, x0:x1]
        shade_win[inside & (window == 0)] = value
        window |= inside


def _structure(size: int, rng: np.random.Generator,
               tumor: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(background texture, nucleus alpha, nucleus shade, tumor mask)."""
    scale = size / 64.0
    texture = gaussian_filter(rng.random((size, size)), sigma=size / 8.0)
    span = texture.max() - texture.min()
    texture = 0.88 + 0.12 * (texture - texture.min()) / (span + 1e-9)

    indicator = np.zeros((size, size), dtype=bool)
    shade = np.ones((size, size))

    n = int(rng.integers(8, 16))
    centers = rng.uniform(0, size, size=(n, 2))
    radii = rng.uniform(2.2, 4.5, size=(n, 2)) * scale
    angles = rng.uniform(0, np.pi, size=n)
    shades = rng.uniform(0.85, 1.15, size=n)
    _paint_ellipses(indicator, shade, centers, radii, angles, shades)

    tumor_mask = np.zeros((size, size), dtype=bool)
    if tumor:
        cluster = rng.uniform(0.25 * size, 0.75 * size, size=2)
        m = int(rng.integers(28, 42))
        centers = np.clip(cluster + rng.normal(0, size / 7.0, size=(m, 2)),
                          0, size - 1)
        radii = rng.uniform(1.8, 3.2, size=(m, 2)) * scale
        angles = rng.uniform(0, np.pi, size=m)
        shades = rng.uniform(0.85, 1.15, size=m)
        tumor_ind = np.zeros((size, size), dtype=bool)
        tumor_shade = np.ones((size, size))
        _paint_ellipses(tumor_ind, tumor_shade, centers, radii, angles, shades)
        tumor_mask = tumor_ind
        shade = np.where(tumor_ind & ~indicator, tumor_shade, shade)
        indicator |= tumor_ind

    alpha = np.clip(gaussian_filter(indicator.astype(np.float64), 0.7), 0.0, 1.0)
    return texture, alpha, shade, tumor_mask


def _apply_style(rgb: np.ndarray, style: DomainStyle,
                 rng: np.random.Generator) -> np.ndarray:
    hsv = rgb_to_hsv(np.clip(rgb, 0.0, 1.0).astype(np.float32))
    hue_jitter = rng.normal(0.0, 0.006)
    sat_jitter = rng.uniform(0.95, 1.05)
    hsv[0] = (hsv[0] + style.hue_shift + hue_jitter) % 1.0
    hsv[1] = np.clip(hsv[1] * style.sat_scale * sat_jitter, 0.0, 1.0)
    hsv[2] = np.clip(hsv[2] * style.val_scale, 0.0, 1.0)
    out = hsv_to_rgb(hsv).astype(np.float64)
    out += style.cast[:, None, None]
    if style.blur_sigma > 0:
        for ch in range(3):
            out[ch] = gaussian_filter(out[ch], style.blur_sigma)
    out += rng.normal(0.0, style.noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _tile_rngs(config: SynthConfig, domain: int,
               index: int) -> Tuple[np.random.Generator, np.random.Generator]:
    structure_key = 0 if config.paired_structure else domain + 1
    structure = np.random.default_rng(np.random.SeedSequence(
        entropy=config.seed, spawn_key=(101, structure_key, index)))
    appearance = np.random.default_rng(np.random.SeedSequence(
        entropy=config.seed, spawn_key=(102, domain, index)))
    return structure, appearance


def make_tile(config: SynthConfig, domain: int,
              index: int) -> Tuple[ImageTile, np.ndarray]:
    """One tile plus its aligned boolean tumor mask."""
    structure_rng, appearance_rng = _tile_rngs(config, domain, index)
    tumor = structure_rng.random() < config.tumor_prevalence
    texture, alpha, shade, tumor_mask = _structure(config.size, structure_rng, tumor)

    base = (_BG_COLOR[:, None, None] * texture[None]) * (1.0 - alpha[None]) \
        + (_NUCLEUS_COLOR[:, None, None] * shade[None]) * alpha[None]
    style = domain_styles(config.domains)[domain]
    pixels = _apply_style(base, style, appearance_rng)
    tile = ImageTile(pixels=pixels, domain_id=domain,
                     class_label=TUMOR if tumor else NON_TUMOR)
    return tile, tumor_mask


@dataclass
class SynthDataset:
    """All generated tiles with records mirroring the tiling schema."""

    config: SynthConfig
    tiles: List[ImageTile]
    masks: List[np.ndarray]
    records: List[TileRecord]

    def by_domain(self) -> Dict[int, List[ImageTile]]:
        out: Dict[int, List[ImageTile]] = {d: [] for d in range(self.config.domains)}
        for tile in self.tiles:
            out[tile.domain_id].append(tile)
        return out

    def pixels_by_domain(self) -> Dict[int, np.ndarray]:
        return {d: np.stack([t.pixels for t in tiles])
                for d, tiles in self.by_domain().items()}

    def save(self, out_dir: Union[str, Path]) -> Path:
        """Write PNG tiles plus a manifest; returns the manifest path."""
        return save_tiles(out_dir, self.tiles, self.records)


def generate(domains: int = 5, tiles_per_domain: int = 200, size: int = 64,
             seed: int = 0, tumor_prevalence: float = 0.5,
             paired_structure: bool = False,
             config: Optional[SynthConfig] = None) -> SynthDataset:
    """Generate the full dataset; same arguments give byte-identical output."""
    if config is None:
        config = SynthConfig(domains=domains, tiles_per_domain=tiles_per_domain,
                             size=size, seed=seed,
                             tumor_prevalence=tumor_prevalence,
                             paired_structure=paired_structure)
    tiles: List[ImageTile] = []
    masks: List[np.ndarray] = []
    records: List[TileRecord] = []
    for domain in range(config.domains):
        for index in range(config.tiles_per_domain):
            tile, mask = make_tile(config, domain, index)
            ratio = float(mask.mean())
            tiles.append(tile)
            masks.append(mask)
            records.append(TileRecord(
                source_id=f"synth_d{domain}", grid_x=index, grid_y=0,
                label=tile.class_label, tumor_pixel_ratio=ratio,
                tissue_fraction=1.0, domain_id=domain))
    return SynthDataset(config=config, tiles=tiles, masks=masks, records=records)
