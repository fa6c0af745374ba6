"""Downstream tumor-classification harness.

For one training domain and one augmentation strategy, train a small binary
classifier and evaluate it on the held-out test split of every domain. The
three strategies share a geometric base (flips/rotations) and random
erasing; they differ in the color step:

    geometric   no color change
    hsv         blur, contrast/brightness, hue/saturation jitter
    histaugan   the trained translation model, applied to half the tiles

The loss is class-weighted cross-entropy (inverse class frequency, weights
normalized to mean one) and the reported metrics are tumor-class PR-AUC and
F1. Out-of-domain aggregates follow the convention: first average each test
domain over repeats, then take mean/std across the out-of-domain test
domains.
"""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .augment import Augmenter
from .classic import HsvAugmentConfig, geometric, hsv_augment, random_erasing
from .errors import ConfigError, DatasetError, ParameterError
from .metrics import f1_tumor, pr_auc
from .types import ATTRIBUTE_DIM, ImageTile, TUMOR

STRATEGIES = ("geometric", "hsv", "histaugan")

#: Fraction of each domain's tiles held out as its test split.
TEST_FRACTION = 0.2

#: Fraction of the training pool held out for epoch selection.
VAL_FRACTION = 0.2

#: Seed of the deterministic per-domain split shuffle (fixed so that every
#: strategy and repeat sees identical splits).
SPLIT_SEED = 777


@dataclass(frozen=True)
class ClassifierConfig:
    arch: str = "cnn6"
    lr: float = 1e-3
    weight_decay: float = 1e-5
    epochs: int = 8
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("cnn6", "resnet18"):
            raise ConfigError(f"unknown classifier arch {self.arch!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not (np.isfinite(self.lr) and self.lr > 0):
            raise ConfigError("lr must be > 0")
        if not (np.isfinite(self.weight_decay) and self.weight_decay >= 0):
            raise ConfigError("weight_decay must be >= 0")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in
                ("arch", "lr", "weight_decay", "epochs", "batch_size", "seed")}


@dataclass(frozen=True)
class ExperimentSpec:
    train_domain: int
    aug_strategy: str
    repeats: int = 3
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    gan_checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.aug_strategy not in STRATEGIES:
            raise ConfigError(
                f"aug_strategy must be one of {STRATEGIES}, got {self.aug_strategy!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    def as_dict(self) -> dict:
        return {
            "train_domain": self.train_domain, "aug_strategy": self.aug_strategy,
            "repeats": self.repeats, "classifier": self.classifier.as_dict(),
            "gan_checkpoint": self.gan_checkpoint,
        }


class SmallCNN(nn.Module):
    """Six weight layers: four strided convs, two fully connected."""

    def __init__(self, num_classes: int = 2):
        super().__init__()
        chans = (3, 16, 32, 64, 64)
        self.convs = nn.ModuleList(
            [nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1)
             for i in range(4)])
        self.fc1 = nn.Linear(64, 32)
        self.fc2 = nn.Linear(32, num_classes)

    def forward(self, x):
        h = x * 2.0 - 1.0
        for conv in self.convs:
            h = F.relu(conv(h))
        h = F.adaptive_avg_pool2d(h, 1).flatten(1)
        return self.fc2(F.relu(self.fc1(h)))


def build_classifier(config: ClassifierConfig) -> Tuple[nn.Module, List[torch.nn.Parameter]]:
    """Model plus the parameters to optimize (all, except ResNet freezing)."""
    if config.arch == "cnn6":
        model = SmallCNN()
        return model, list(model.parameters())
    # Residual network: only the last two blocks and the head are tuned.
    try:
        from torchvision.models import resnet18
    except ImportError as exc:
        raise ConfigError("arch 'resnet18' requires torchvision") from exc
    model = resnet18(weights=None, num_classes=2)
    for p in model.parameters():
        p.requires_grad_(False)
    trained = []
    for block in (model.layer3, model.layer4, model.fc):
        for p in block.parameters():
            p.requires_grad_(True)
            trained.append(p)
    return model, trained


def class_weights_from_labels(labels: np.ndarray) -> np.ndarray:
    """Inverse class frequency weights for {0, 1} labels."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=2).astype(np.float64)
    if np.any(counts == 0):
        raise DatasetError("training split lacks one of the two classes")
    return counts.sum() / (2.0 * counts)


def _torch_weighted_ce(logits: torch.Tensor, labels: torch.Tensor,
                       weights: np.ndarray) -> torch.Tensor:
    """Plain batch mean of -w_y log softmax_y, weights normalized to mean 1."""
    w = torch.as_tensor(weights / np.mean(weights), dtype=logits.dtype)
    per_sample = F.cross_entropy(logits, labels, reduction="none")
    return (per_sample * w[labels]).mean()


def apply_strategy(images: np.ndarray, strategy: str, rng: np.random.Generator,
                   augmenter: Optional[Augmenter] = None,
                   hsv_config: Optional[HsvAugmentConfig] = None,
                   erasing_prob: float = 0.5,
                   gan_prob: float = 0.5) -> np.ndarray:
    """One training-time augmentation pass over a (n, 3, s, s) stack.

    Per-tile random draws happen in index order, so results are fixed by the
    rng state. The translation model runs batched over the gated subset.
    """
    if strategy not in STRATEGIES:
        raise ParameterError(f"unknown strategy {strategy!r}")
    out = np.empty_like(images)
    for i in range(images.shape[0]):
        out[i] = geometric(ImageTile(images[i]), rng).pixels

    if strategy == "hsv":
        cfg = hsv_config or HsvAugmentConfig()
        for i in range(out.shape[0]):
            out[i] = hsv_augment(ImageTile(out[i]), rng, cfg).pixels
    elif strategy == "histaugan":
        if augmenter is None:
            raise ParameterError("strategy 'histaugan' needs an Augmenter")
        take, domains, attrs = [], [], []
        for i in range(out.shape[0]):
            gate = rng.random() < gan_prob
            domain = int(rng.integers(augmenter.domain_count))
            z = rng.standard_normal(ATTRIBUTE_DIM)
            if gate:
                take.append(i)
                domains.append(domain)
                attrs.append(z)
        if take:
            onehot = np.zeros((len(take), augmenter.domain_count), dtype=np.float32)
            onehot[np.arange(len(take)), domains] = 1.0
            out[take] = augmenter.augment_batch(
                out[take], onehot, np.asarray(attrs, dtype=np.float32))

    for i in range(out.shape[0]):
        out[i] = random_erasing(ImageTile(out[i]), rng, p=erasing_prob).pixels
    return out


@dataclass
class TrainedClassifier:
    """A fitted model with everything needed to reuse or persist it."""

    model: nn.Module
    config: ClassifierConfig
    strategy: str
    train_domain: int
    best_epoch: int
    best_val_f1: float

    def scores(self, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
        """Tumor-class probabilities for a (n, 3, s, s) stack."""
        self.model.eval()
        probs = []
        with torch.no_grad():
            for lo in range(0, images.shape[0], batch_size):
                x = torch.from_numpy(images[lo:lo + batch_size])
                probs.append(torch.softmax(self.model(x), dim=1)[:, 1].numpy())
        return np.concatenate(probs).astype(np.float64)

    def save(self, out_dir: Union[str, Path]) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        torch.save(self.model.state_dict(), out_dir / "weights.pt")
        meta = {
            "config": self.config.as_dict(), "strategy": self.strategy,
            "train_domain": self.train_domain, "best_epoch": self.best_epoch,
            "best_val_f1": self.best_val_f1,
        }
        (out_dir / "classifier.json").write_text(json.dumps(meta, indent=1))
        return out_dir

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainedClassifier":
        path = Path(path)
        meta_file = path / "classifier.json"
        if not meta_file.is_file():
            raise DatasetError(f"not a classifier directory: missing {meta_file}")
        meta = json.loads(meta_file.read_text())
        config = ClassifierConfig(**meta["config"])
        model, _ = build_classifier(config)
        model.load_state_dict(torch.load(path / "weights.pt", weights_only=True))
        return cls(model=model, config=config, strategy=meta["strategy"],
                   train_domain=meta["train_domain"],
                   best_epoch=meta["best_epoch"], best_val_f1=meta["best_val_f1"])


def _labels(tiles: Sequence[ImageTile]) -> np.ndarray:
    return np.array([1 if t.class_label == TUMOR else 0 for t in tiles])


def _stack(tiles: Sequence[ImageTile]) -> Tuple[np.ndarray, np.ndarray]:
    return np.stack([t.pixels for t in tiles]), _labels(tiles)


def stratified_split(labels: np.ndarray, fraction: float,
                     rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """(rest, held) index split holding out ``fraction`` of every class."""
    labels = np.asarray(labels)
    held_parts = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        k = max(1, int(round(len(idx) * fraction)))
        held_parts.append(rng.permutation(idx)[:k])
    held = np.sort(np.concatenate(held_parts))
    return np.setdiff1d(np.arange(len(labels)), held), held


def split_domain(labels: np.ndarray, domain: int) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic (train pool, test) index split for one domain.

    Stratified by class so that a domain containing both classes always
    contributes both to its test split; fixed by the domain id alone, hence
    identical across strategies and repeats.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=SPLIT_SEED, spawn_key=(domain,)))
    return stratified_split(labels, TEST_FRACTION, rng)


def train_classifier(train_tiles: Sequence[ImageTile],
                     val_tiles: Sequence[ImageTile],
                     strategy: str, config: ClassifierConfig,
                     augmenter: Optional[Augmenter] = None,
                     rng: Optional[np.random.Generator] = None,
                     train_domain: int = -1) -> TrainedClassifier:
    """Fit one classifier; the best-validation-F1 epoch's weights win."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    x_train, y_train = _stack(train_tiles)
    x_val, y_val = _stack(val_tiles)
    weights = class_weights_from_labels(y_train)

    torch.manual_seed(config.seed)
    model, params = build_classifier(config)
    optimizer = torch.optim.Adam(params, lr=config.lr,
                                 weight_decay=config.weight_decay)

    best_state = copy.deepcopy(model.state_dict())
    best_f1, best_epoch = -1.0, 0
    n = x_train.shape[0]
    for epoch in range(1, config.epochs + 1):
        model.train()
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            batch = apply_strategy(x_train[idx], strategy, rng, augmenter=augmenter)
            logits = model(torch.from_numpy(batch))
            loss = _torch_weighted_ce(logits, torch.from_numpy(y_train[idx]), weights)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

        model.eval()
        with torch.no_grad():
            val_logits = model(torch.from_numpy(x_val))
        val_pred = val_logits.argmax(dim=1).numpy()
        val_f1 = f1_tumor(val_pred, y_val)
        if val_f1 > best_f1:
            best_f1, best_epoch = val_f1, epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    model.eval()
    return TrainedClassifier(model=model, config=config, strategy=strategy,
                             train_domain=train_domain, best_epoch=best_epoch,
                             best_val_f1=best_f1)


RESULT_HEADER = ("train_domain", "aug", "repeat", "test_domain", "pr_auc", "f1")


@dataclass
class EvalResult:
    """Per-(repeat, test domain) metrics plus the Fig-style aggregates."""

    spec: ExperimentSpec
    rows: List[dict]

    def per_domain_mean(self, metric: str) -> Dict[int, float]:
        """Mean of one metric over repeats, keyed by test domain."""
        sums: Dict[int, List[float]] = {}
        for row in self.rows:
            sums.setdefault(row["test_domain"], []).append(row[metric])
        return {d: float(np.mean(v)) for d, v in sorted(sums.items())}

    def ood_aggregate(self, metric: str) -> Tuple[float, float]:
        """(mean, std) across out-of-domain test domains of repeat means."""
        per_dom = self.per_domain_mean(metric)
        ood = [v for d, v in per_dom.items() if d != self.spec.train_domain]
        if not ood:
            raise DatasetError("no out-of-domain test domains present")
        return float(np.mean(ood)), float(np.std(ood))

    def in_domain_mean(self, metric: str) -> float:
        return self.per_domain_mean(metric)[self.spec.train_domain]

    def write_csv(self, path: Union[str, Path], append: bool = False) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        exists = append and path.is_file()
        with open(path, "a" if append else "w", newline="") as fh:
            writer = csv.writer(fh)
            if not exists:
                writer.writerow(RESULT_HEADER)
            for row in self.rows:
                writer.writerow([row["train_domain"], row["aug"], row["repeat"],
                                 row["test_domain"], f"{row['pr_auc']:.10g}",
                                 f"{row['f1']:.10g}"])


def run_experiment(spec: ExperimentSpec,
                   datasets: Dict[int, Sequence[ImageTile]],
                   augmenter: Optional[Augmenter] = None,
                   model_dir: Optional[Union[str, Path]] = None) -> EvalResult:
    """Train ``spec.repeats`` classifiers and evaluate on every domain.

    ``datasets`` maps every domain id to its full tile list; splits are
    derived deterministically and shared across strategies and repeats.
    When ``model_dir`` is given, each repeat's fitted classifier is saved
    under it.
    """
    if spec.train_domain not in datasets:
        raise DatasetError(f"missing training domain {spec.train_domain}")
    for d, tiles in datasets.items():
        if len(tiles) == 0:
            raise DatasetError(f"domain {d} has no tiles")
    if spec.aug_strategy == "histaugan" and augmenter is None:
        if spec.gan_checkpoint is None:
            raise ParameterError(
                "strategy 'histaugan' needs an Augmenter or spec.gan_checkpoint")
        augmenter = Augmenter.from_checkpoint(spec.gan_checkpoint)

    pools: Dict[int, List[ImageTile]] = {}
    tests: Dict[int, List[ImageTile]] = {}
    for d, tiles in sorted(datasets.items()):
        pool_idx, test_idx = split_domain(_labels(tiles), d)
        pools[d] = [tiles[i] for i in pool_idx]
        tests[d] = [tiles[i] for i in test_idx]

    pool = pools[spec.train_domain]
    val_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=SPLIT_SEED, spawn_key=(spec.train_domain, 1)))
    train_idx, val_idx = stratified_split(_labels(pool), VAL_FRACTION, val_rng)
    val_tiles = [pool[i] for i in val_idx]
    train_tiles = [pool[i] for i in train_idx]

    test_arrays = {d: _stack(tiles) for d, tiles in tests.items()}
    rows: List[dict] = []
    for repeat in range(spec.repeats):
        run_seed = spec.classifier.seed + 1000 * repeat
        run_config = ClassifierConfig(**{**spec.classifier.as_dict(), "seed": run_seed})
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=run_seed,
                                   spawn_key=(300, spec.train_domain)))
        clf = train_classifier(train_tiles, val_tiles, spec.aug_strategy,
                               run_config, augmenter=augmenter, rng=rng,
                               train_domain=spec.train_domain)
        if model_dir is not None:
            clf.save(Path(model_dir) /
                     f"{spec.aug_strategy}_d{spec.train_domain}_r{repeat}")
        for d, (x_test, y_test) in sorted(test_arrays.items()):
            scores = clf.scores(x_test)
            rows.append({
                "train_domain": spec.train_domain, "aug": spec.aug_strategy,
                "repeat": repeat, "test_domain": d,
                "pr_auc": pr_auc(scores, y_test),
                "f1": f1_tumor((scores >= 0.5).astype(int), y_test),
            })
    return EvalResult(spec=spec, rows=rows)
