"""PNG tile I/O and CSV tile manifests.

A tile directory is a flat or nested set of 8-bit RGB PNGs plus one
``manifest.csv`` whose rows carry the bookkeeping of each tile:

    file,source_id,grid_x,grid_y,label,tumor_pixel_ratio,tissue_fraction,domain_id

``file`` is a path relative to the manifest's directory. Pixel values
round-trip through uint8, so written tiles are read back bit-identically.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .errors import DatasetError
from .tiling import TileRecord
from .types import ImageTile, as_chw, to_hwc

MANIFEST_NAME = "manifest.csv"

MANIFEST_HEADER = ("file", "source_id", "grid_x", "grid_y", "label",
                   "tumor_pixel_ratio", "tissue_fraction", "domain_id")


def write_png(path: Union[str, Path], pixels: np.ndarray) -> None:
    """Write a (3, H, W) float image in [0, 1] as an 8-bit RGB PNG."""
    chw = as_chw(pixels)
    u8 = np.clip(np.rint(chw * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(to_hwc(u8))).save(path, format="PNG")


def read_png(path: Union[str, Path]) -> np.ndarray:
    """Read an image file as float32 (3, H, W) in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing image file {path}")
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return as_chw(rgb)


def write_manifest(path: Union[str, Path], records: Sequence[TileRecord],
                   files: Sequence[Union[str, Path]]) -> None:
    """Write tile records and their relative file paths as CSV."""
    if len(records) != len(files):
        raise DatasetError(
            f"{len(records)} records but {len(files)} files for the manifest")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for rec, file in zip(records, files):
            writer.writerow([
                str(file), rec.source_id, rec.grid_x, rec.grid_y, rec.label,
                f"{rec.tumor_pixel_ratio:.10g}", f"{rec.tissue_fraction:.10g}",
                "" if rec.domain_id is None else rec.domain_id,
            ])


def read_manifest(path: Union[str, Path]) -> List[Tuple[str, TileRecord]]:
    """Read a manifest back as (relative file, record) pairs."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing manifest {path}")
    out: List[Tuple[str, TileRecord]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(MANIFEST_HEADER):
            raise DatasetError(
                f"unexpected manifest header in {path}: {header}")
        for row in reader:
            if not row:
                continue
            (file, source_id, gx, gy, label, ratio, tissue, domain) = row
            out.append((file, TileRecord(
                source_id=source_id, grid_x=int(gx), grid_y=int(gy),
                label=label, tumor_pixel_ratio=float(ratio),
                tissue_fraction=float(tissue),
                domain_id=None if domain == "" else int(domain))))
    return out


def save_tiles(out_dir: Union[str, Path], tiles: Sequence[ImageTile],
               records: Sequence[TileRecord],
               names: Optional[Sequence[str]] = None) -> Path:
    """Write tiles as PNGs plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    if len(tiles) != len(records):
        raise DatasetError(f"{len(tiles)} tiles but {len(records)} records")
    if names is None:
        names = []
        for i, rec in enumerate(records):
            dom = "x" if rec.domain_id is None else str(rec.domain_id)
            names.append(f"d{dom}/{rec.source_id}_x{rec.grid_x}_y{rec.grid_y}_{i:05d}.png")
    for tile, name in zip(tiles, names):
        write_png(out_dir / name, tile.pixels)
    manifest = out_dir / MANIFEST_NAME
    write_manifest(manifest, records, names)
    return manifest


def load_tiles(src: Union[str, Path]) -> Tuple[List[ImageTile], List[TileRecord]]:
    """Load a tile directory (or a manifest path) back into memory.

    Tiles carry the manifest's domain and label annotations.
    """
    src = Path(src)
    manifest = src if src.is_file() else src / MANIFEST_NAME
    base = manifest.parent
    tiles: List[ImageTile] = []
    records: List[TileRecord] = []
    for file, rec in read_manifest(manifest):
        pixels = read_png(base / file)
        tiles.append(ImageTile(pixels=pixels, domain_id=rec.domain_id,
                               class_label=rec.label))
        records.append(rec)
    if not tiles:
        raise DatasetError(f"manifest {manifest} lists no tiles")
    return tiles, records
