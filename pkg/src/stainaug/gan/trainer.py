"""Alternating adversarial training of the translation model.

Each iteration samples one unordered domain pair, updates the content
discriminator, then the domain discriminator, then the encoders+generator
on the six-term objective, and logs the objective terms to CSV with header
``iter,cc,c,d,recon,latent,kl,total``.

Determinism: every iteration derives its own numpy generator from
(seed, iteration) alone, and all stochastic choices (domain pair, tile
indices, Gaussian noise) are drawn from it in a fixed order. Resuming from
a checkpoint at iteration k therefore replays iterations k+1, k+2, ... with
exactly the draws of an uninterrupted run. Torch's global RNG is used only
for weight initialization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch

from ..errors import (BatchCompositionError, ConfigError, DatasetError,
                      DivergenceError)
from ..types import ImageTile, LossBreakdown, LossWeights
from .checkpoint import Checkpoint, save_checkpoint
from .losses import (DomainPairBatch, content_discriminator_loss,
                     domain_discriminator_loss, draw_noise, generator_losses,
                     weighted_total)
from .networks import ArchConfig, Networks, build_networks

LOG_HEADER = ("iter", "cc", "c", "d", "recon", "latent", "kl", "total")

OPTIMIZER_NAMES = ("dis_content", "dis_domain", "eg")

ADAM_BETAS = (0.5, 0.999)


@dataclass(frozen=True)
class TrainConfig:
    """Run parameters; architecture knobs are embedded via overrides."""

    iterations: int = 2000
    batch_size: int = 2
    lr_dis: float = 1e-4
    lr_eg: float = 1e-4
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 500
    image_size: int = 64
    domain_count: int = 5
    base_channels: int = 32
    fit_attribute_stats: bool = True
    attribute_stat_samples: int = 128

    def __post_init__(self):
        for name in ("iterations", "batch_size", "checkpoint_every",
                     "image_size", "domain_count", "base_channels",
                     "attribute_stat_samples"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a count >= 1, got {v!r}")
        for name in ("lr_dis", "lr_eg"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be > 0, got {v!r}")
        if self.domain_count < 2:
            raise ConfigError("training needs at least two domains")

    def arch(self) -> ArchConfig:
        return ArchConfig(image_size=self.image_size,
                          domain_count=self.domain_count,
                          base_channels=self.base_channels)

    def as_dict(self) -> dict:
        d = {name: getattr(self, name) for name in (
            "iterations", "batch_size", "lr_dis", "lr_eg", "seed",
            "checkpoint_every", "image_size", "domain_count", "base_channels",
            "fit_attribute_stats", "attribute_stat_samples")}
        d["weights"] = self.weights.as_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        weights = d.pop("weights", None)
        if isinstance(weights, dict):
            weights = LossWeights(**weights)
        return cls(weights=weights or LossWeights(), **d)


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    """The stateless per-iteration generator; stream 0 is the trainer's."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(0, iteration)))


def build_optimizers(networks: Networks,
                     config: TrainConfig) -> Dict[str, torch.optim.Optimizer]:
    return {
        "dis_content": torch.optim.Adam(networks.dis_content.parameters(),
                                        lr=config.lr_dis, betas=ADAM_BETAS),
        "dis_domain": torch.optim.Adam(networks.dis_domain.parameters(),
                                       lr=config.lr_dis, betas=ADAM_BETAS),
        "eg": torch.optim.Adam(list(networks.generator_side()),
                               lr=config.lr_eg, betas=ADAM_BETAS),
    }


def training_step(batch: DomainPairBatch, networks: Networks,
                  optimizers: Dict[str, torch.optim.Optimizer],
                  config: TrainConfig,
                  rng: Optional[np.random.Generator] = None) -> LossBreakdown:
    """One full update: content dis, domain dis, then encoders+generator.

    Returns the objective terms from the encoder/generator pass, which runs
    after both discriminator updates.
    """
    if batch.domain_a == batch.domain_b:
        raise BatchCompositionError(
            f"batch holds only domain {batch.domain_a}; need two distinct domains")
    if rng is None:
        rng = iteration_rng(config.seed, 0)
    noise = draw_noise(rng, batch.batch_size)

    opt = optimizers["dis_content"]
    opt.zero_grad(set_to_none=True)
    content_discriminator_loss(networks, batch).backward()
    opt.step()

    opt = optimizers["dis_domain"]
    opt.zero_grad(set_to_none=True)
    domain_discriminator_loss(networks, batch, noise).backward()
    opt.step()

    opt = optimizers["eg"]
    opt.zero_grad(set_to_none=True)
    terms = generator_losses(networks, batch, noise)
    weighted_total(terms, config.weights).backward()
    opt.step()

    values = {k: float(v.detach()) for k, v in terms.items()}
    if not all(np.isfinite(v) for v in values.values()):
        bad = sorted(k for k, v in values.items() if not np.isfinite(v))
        raise DivergenceError(f"non-finite loss terms {bad}")
    return LossBreakdown.from_terms(config.weights, **values)


def _group_by_domain(dataset, config: TrainConfig) -> Dict[int, np.ndarray]:
    """Normalize the dataset to {domain_id: (n, 3, size, size) float32}."""
    if isinstance(dataset, dict):
        groups = {int(k): np.ascontiguousarray(v, dtype=np.float32)
                  for k, v in dataset.items()}
    else:
        tiles: Dict[int, List[np.ndarray]] = {}
        for tile in dataset:
            if not isinstance(tile, ImageTile) or tile.domain_id is None:
                raise DatasetError("training tiles must be domain-labeled ImageTiles")
            tiles.setdefault(tile.domain_id, []).append(tile.pixels)
        groups = {d: np.stack(px) for d, px in tiles.items()}

    expected = set(range(config.domain_count))
    missing = expected - set(groups)
    if missing:
        raise DatasetError(f"no tiles for domain(s) {sorted(missing)}")
    extra = set(groups) - expected
    if extra:
        raise DatasetError(
            f"tiles labeled with unknown domain(s) {sorted(extra)} "
            f"for domain_count={config.domain_count}")
    for d, arr in groups.items():
        if arr.ndim != 4 or arr.shape[1:] != (3, config.image_size, config.image_size):
            raise DatasetError(
                f"domain {d}: tiles have shape {arr.shape[1:]}, expected "
                f"(3, {config.image_size}, {config.image_size})")
        if arr.shape[0] < 1:
            raise DatasetError(f"domain {d} is empty")
    return groups


def sample_pair_batch(groups: Dict[int, np.ndarray], config: TrainConfig,
                      rng: np.random.Generator) -> DomainPairBatch:
    """Uniform unordered domain pair, then tiles with replacement."""
    pairs = list(combinations(range(config.domain_count), 2))
    dom_a, dom_b = pairs[int(rng.integers(len(pairs)))]
    idx_a = rng.integers(0, groups[dom_a].shape[0], size=config.batch_size)
    idx_b = rng.integers(0, groups[dom_b].shape[0], size=config.batch_size)
    return DomainPairBatch(images_a=groups[dom_a][idx_a], domain_a=dom_a,
                           images_b=groups[dom_b][idx_b], domain_b=dom_b,
                           domain_count=config.domain_count)


def _fit_attribute_stats(networks: Networks, groups: Dict[int, np.ndarray],
                         config: TrainConfig) -> dict:
    """Per-domain Gaussian of encoded attribute means (augmentation prior)."""
    means, covs, counts = [], [], []
    dtype = next(networks.enc_content.parameters()).dtype
    for d in range(config.domain_count):
        arr = groups[d][:config.attribute_stat_samples]
        x = torch.from_numpy(arr).to(dtype)
        onehot = torch.zeros(arr.shape[0], config.domain_count, dtype=dtype)
        onehot[:, d] = 1.0
        with torch.no_grad():
            mu, _ = networks.enc_attr(x, onehot)
        mu = mu.numpy().astype(np.float64)
        means.append(mu.mean(axis=0).tolist())
        cov = (np.cov(mu, rowvar=False) if mu.shape[0] > 1
               else np.zeros((mu.shape[1], mu.shape[1])))
        covs.append(np.atleast_2d(cov).tolist())
        counts.append(int(mu.shape[0]))
    return {"mean": means, "cov": covs, "samples": counts}


def _rewrite_log(log_path: Path, upto_iteration: int) -> List[List[str]]:
    """Keep log rows at or below the resume point; drop the rest."""
    rows: List[List[str]] = []
    if log_path.is_file():
        with open(log_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header == list(LOG_HEADER):
                rows = [r for r in reader if r and int(r[0]) <= upto_iteration]
    return rows


def train(dataset, config: TrainConfig, out_dir: Union[str, Path],
          domain_names: Optional[Sequence[str]] = None,
          resume_from: Optional[Union[str, Path, Checkpoint]] = None) -> Checkpoint:
    """Run the full loop; returns the final checkpoint.

    ``dataset`` is an iterable of domain-labeled ImageTiles or a dict
    {domain_id: (n, 3, size, size) array}. Checkpoints land in
    ``out_dir/ckpt_NNNNNN``; the loss log is ``out_dir/train_log.csv``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = _group_by_domain(dataset, config)

    if resume_from is not None:
        ckpt = (resume_from if isinstance(resume_from, Checkpoint)
                else Checkpoint.load(resume_from))
        networks = ckpt.load_networks()
        optimizers = build_optimizers(networks, config)
        for name in OPTIMIZER_NAMES:
            optimizers[name].load_state_dict(ckpt.load_optimizer_state(name))
        start_iter = ckpt.iteration
        if domain_names is None:
            domain_names = ckpt.domain_names
        last_good: Optional[Checkpoint] = ckpt
    else:
        torch.manual_seed(config.seed)
        networks = build_networks(config.arch())
        optimizers = build_optimizers(networks, config)
        start_iter = 0
        last_good = None

    log_path = out_dir / "train_log.csv"
    kept_rows = _rewrite_log(log_path, start_iter)

    def checkpoint_at(iteration: int) -> Checkpoint:
        stats = None
        if config.fit_attribute_stats and iteration == config.iterations:
            stats = _fit_attribute_stats(networks, groups, config)
        return save_checkpoint(
            out_dir / f"ckpt_{iteration:06d}", networks, iteration,
            domain_names=domain_names, train_config=config.as_dict(),
            optimizers=optimizers, attribute_stats=stats)

    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        writer.writerows(kept_rows)
        for iteration in range(start_iter + 1, config.iterations + 1):
            rng = iteration_rng(config.seed, iteration)
            batch = sample_pair_batch(groups, config, rng)
            try:
                breakdown = training_step(batch, networks, optimizers, config, rng)
            except DivergenceError as exc:
                raise DivergenceError(
                    f"iteration {iteration}: {exc}",
                    last_checkpoint=None if last_good is None else last_good.path)
            writer.writerow([iteration] + [f"{getattr(breakdown, k):.10g}"
                                           for k in LOG_HEADER[1:]])
            if iteration % config.checkpoint_every == 0 and iteration != config.iterations:
                fh.flush()
                last_good = checkpoint_at(iteration)
        final = checkpoint_at(config.iterations)
    return final
