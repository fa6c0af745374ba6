"""Generate a small multi-domain corpus and cut a mock slide into tiles.

Writes everything under demos/out/01/:
  corpus/    three synthetic domains, 60 tiles each, with manifest.csv
  slide/     tiles cut from one composite image via the grid pipeline
"""

from pathlib import Path

import numpy as np

from stainaug import synthdata
from stainaug.io import save_tiles
from stainaug.tiling import tile_grid, tumor_tile_fraction

OUT = Path(__file__).parent / "out" / "01"


def main():
    ds = synthdata.generate(domains=3, tiles_per_domain=60, size=32, seed=0)
    ds.save(OUT / "corpus")
    print(f"corpus: {len(ds.tiles)} tiles in {OUT / 'corpus'}")
    for d, style in enumerate(synthdata.domain_styles(3)):
        print(f"  domain {d}: hue shift {style.hue_shift:.2f}, "
              f"value scale {style.val_scale:.2f}")

    # A mock slide: four corpus tiles side by side over a white background,
    # with a tumor annotation covering the left half.
    tiles = ds.by_domain()[0][:4]
    slide = np.ones((3, 64, 64), dtype=np.float32)
    slide[:, :32, :32] = tiles[0].pixels
    slide[:, :32, 32:] = tiles[1].pixels
    slide[:, 32:, :32] = tiles[2].pixels
    slide[:, 32:, 32:] = tiles[3].pixels
    annotation = np.zeros((64, 64), dtype=bool)
    annotation[:, :32] = True

    cut = tile_grid(slide, annotation, tile_size=32, min_tissue=0.05,
                    source_id="demo_slide", domain_id=0)
    save_tiles(OUT / "slide", [t for t, _ in cut], [r for _, r in cut])
    for _, r in cut:
        print(f"  tile at ({r.grid_x:2d},{r.grid_y:2d}): {r.label:9s} "
              f"tumor ratio {r.tumor_pixel_ratio:.2f} tissue {r.tissue_fraction:.2f}")
    print(f"tumor tile fraction: {tumor_tile_fraction([r for _, r in cut]):.2f}")


if __name__ == "__main__":
    main()
