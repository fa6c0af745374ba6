from .networks import ArchConfig, Networks, build_networks
from .model import StainGAN, ContentCode, AttributeCode
from .losses import (
    DomainPairBatch,
    NoiseBundle,
    compute_losses,
    draw_noise,
    generator_losses,
    kl_to_standard_normal,
    reparameterize,
    weighted_total,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, build_optimizers, train, training_step

__all__ = [
    "ArchConfig", "Networks", "build_networks",
    "StainGAN", "ContentCode", "AttributeCode",
    "DomainPairBatch", "NoiseBundle", "compute_losses", "draw_noise",
    "generator_losses", "kl_to_standard_normal", "reparameterize",
    "weighted_total",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "build_optimizers", "train", "training_step",
]
