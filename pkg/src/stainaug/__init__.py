"""Stain-color augmentation for histopathology tiles.

A multi-domain image translation model disentangles tissue structure from
stain appearance, so one tile can be re-rendered in the color style of any
training domain (or an interpolation between domains). The package also
ships classical geometric/HSV augmentation baselines, a slide tiling
pipeline, a batch-effect mixing metric, a downstream tumor-classification
harness, and a synthetic multi-domain data generator for end-to-end tests.
"""

__version__ = "0.1.0"

from .errors import StainAugError
from .types import (
    ATTRIBUTE_DIM,
    DomainVector,
    ImageTile,
    LossBreakdown,
    LossWeights,
    NON_TUMOR,
    TUMOR,
)

__all__ = [
    "__version__",
    "StainAugError",
    "ATTRIBUTE_DIM", "DomainVector", "ImageTile", "LossBreakdown",
    "LossWeights", "NON_TUMOR", "TUMOR",
]
