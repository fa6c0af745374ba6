"""The six-term training objective and the discriminator objectives.

The encoder/generator side minimizes

    total = w_cc * cc + w_c * c + w_d * d
            + w_recon * recon + w_latent * latent + w_kl * kl

where, averaged over the two halves of a domain pair batch,

* ``recon`` is the L1 self-reconstruction error G(E_c(x), E_a(x, d), d) vs x,
* ``cc`` is the L1 error of the two-hop cycle: translate each image into the
  partner domain with swapped content, re-encode, and translate back,
* ``latent`` is the L1 recovery of a randomly drawn attribute vector from the
  image generated with it,
* ``kl`` pulls the encoded attribute distribution toward N(0, I),
* ``c`` pushes the content discriminator's domain prediction toward uniform
  (so content codes carry no domain cue),
* ``d`` is the least-squares realness term plus the domain classification
  term on generated tiles.

The two discriminators have their own objectives (`content_discriminator_loss`,
`domain_discriminator_loss`) computed on detached encoder/generator outputs.
All stochasticity enters through an explicit `NoiseBundle` drawn from a numpy
generator in a fixed order, so seeded runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import BatchCompositionError, InputShapeError, InputValueError
from ..types import ATTRIBUTE_DIM, ImageTile, LossBreakdown, LossWeights
from .model import AttributeCode
from .networks import Networks


@dataclass(frozen=True)
class DomainPairBatch:
    """Two same-shaped image stacks, each drawn from a single domain.

    ``images_a`` and ``images_b`` are float arrays of shape
    ``(batch, 3, size, size)`` with values in [0, 1]. The two domains may
    coincide; the trainer enforces distinctness where it matters.
    """

    images_a: np.ndarray
    domain_a: int
    images_b: np.ndarray
    domain_b: int
    domain_count: int

    def __post_init__(self):
        for name in ("images_a", "images_b"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            if arr.ndim != 4 or arr.shape[1] != 3 or arr.shape[2] != arr.shape[3]:
                raise InputShapeError(
                    f"{name} must have shape (batch, 3, size, size), got {arr.shape}")
            if arr.shape[0] < 1:
                raise InputShapeError(f"{name} is empty")
            if not np.all(np.isfinite(arr)):
                raise InputValueError(f"{name} contains non-finite pixels")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise InputValueError(f"{name} has pixels outside [0, 1]")
            object.__setattr__(self, name, arr)
        if self.images_a.shape != self.images_b.shape:
            raise InputShapeError(
                f"halves differ in shape: {self.images_a.shape} vs {self.images_b.shape}")
        if self.domain_count < 2:
            raise InputValueError("domain_count must be >= 2")
        for name in ("domain_a", "domain_b"):
            d = getattr(self, name)
            if not 0 <= d < self.domain_count:
                raise InputValueError(
                    f"{name}={d} outside [0, {self.domain_count})")

    @property
    def batch_size(self) -> int:
        return int(self.images_a.shape[0])

    @property
    def image_size(self) -> int:
        return int(self.images_a.shape[2])

    @classmethod
    def from_tiles(cls, tiles_a: Sequence[ImageTile], tiles_b: Sequence[ImageTile],
                   domain_count: int) -> "DomainPairBatch":
        """Stack two tile groups; each group must come from one domain."""
        halves = []
        for name, tiles in (("a", tiles_a), ("b", tiles_b)):
            if len(tiles) == 0:
                raise BatchCompositionError(f"half {name} has no tiles")
            domains = {t.domain_id for t in tiles}
            if len(domains) != 1 or None in domains:
                raise BatchCompositionError(
                    f"half {name} must hold tiles of exactly one domain, got {domains}")
            halves.append((np.stack([t.pixels for t in tiles]), domains.pop()))
        (imgs_a, dom_a), (imgs_b, dom_b) = halves
        return cls(images_a=imgs_a, domain_a=dom_a,
                   images_b=imgs_b, domain_b=dom_b, domain_count=domain_count)


@dataclass(frozen=True)
class NoiseBundle:
    """All Gaussian draws for one objective evaluation, shape (batch, 8) each.

    ``eps_a``/``eps_b`` reparameterize the first attribute encoding,
    ``eps_a2``/``eps_b2`` the re-encoding on the cycle branch, and
    ``attr_a``/``attr_b`` are the random attributes of the latent-regression
    branch.
    """

    eps_a: np.ndarray
    eps_b: np.ndarray
    eps_a2: np.ndarray
    eps_b2: np.ndarray
    attr_a: np.ndarray
    attr_b: np.ndarray


def draw_noise(rng: np.random.Generator, batch_size: int) -> NoiseBundle:
    """Draw all noise for one step in a fixed order (seed-stable)."""
    def draw():
        return rng.standard_normal((batch_size, ATTRIBUTE_DIM))
    return NoiseBundle(eps_a=draw(), eps_b=draw(), eps_a2=draw(),
                       eps_b2=draw(), attr_a=draw(), attr_b=draw())


def kl_to_standard_normal(mean: np.ndarray, logvar: np.ndarray) -> float:
    """KL divergence of N(mean, diag(exp(logvar))) from N(0, I).

    Closed form: 0.5 * sum(mean^2 + exp(logvar) - 1 - logvar); always >= 0.
    """
    mean = np.asarray(mean, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mean.shape != (ATTRIBUTE_DIM,) or logvar.shape != (ATTRIBUTE_DIM,):
        raise InputShapeError(
            f"expected length-{ATTRIBUTE_DIM} vectors, got {mean.shape} and {logvar.shape}")
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(logvar))):
        raise InputValueError("mean and logvar must be finite")
    return float(0.5 * np.sum(mean ** 2 + np.exp(logvar) - 1.0 - logvar))


def reparameterize(mean: np.ndarray, logvar: np.ndarray,
                   noise: np.ndarray) -> AttributeCode:
    """mean + exp(logvar / 2) * noise, packaged as an AttributeCode."""
    arrays = []
    for name, v in (("mean", mean), ("logvar", logvar), ("noise", noise)):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (ATTRIBUTE_DIM,):
            raise InputShapeError(
                f"{name} must have shape ({ATTRIBUTE_DIM},), got {v.shape}")
        arrays.append(v)
    mean, logvar, noise = arrays
    value = mean + np.exp(logvar / 2.0) * noise
    return AttributeCode(value=value, mean=mean, logvar=logvar)


# ---------------------------------------------------------------------------
# torch internals


def _tensor(arr: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)


def _model_dtype(networks: Networks) -> torch.dtype:
    return next(networks.enc_content.parameters()).dtype


def _one_hot_rows(index: int, count: int, batch: int, dtype: torch.dtype) -> torch.Tensor:
    rows = torch.zeros(batch, count, dtype=dtype)
    rows[:, index] = 1.0
    return rows


def _labels(index: int, batch: int) -> torch.Tensor:
    return torch.full((batch,), index, dtype=torch.long)


def _reparam(mean: torch.Tensor, logvar: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    return mean + torch.exp(0.5 * logvar) * eps


def _kl_batch(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    per_sample = 0.5 * torch.sum(mean ** 2 + torch.exp(logvar) - 1.0 - logvar, dim=1)
    return per_sample.mean()


def least_squares_real(pred: torch.Tensor) -> torch.Tensor:
    """Least-squares adversarial penalty for predictions that should be 1."""
    return torch.mean((pred - 1.0) ** 2)


def least_squares_fake(pred: torch.Tensor) -> torch.Tensor:
    """Least-squares adversarial penalty for predictions that should be 0."""
    return torch.mean(pred ** 2)


def cross_entropy_uniform(logits: torch.Tensor) -> torch.Tensor:
    """Cross-entropy of softmax(logits) against the uniform distribution.

    Equals logsumexp(logits) - mean(logits), minimized when all logits agree.
    """
    return torch.mean(torch.logsumexp(logits, dim=1) - logits.mean(dim=1))


class _PairInputs:
    """Tensors shared by the generator and discriminator objectives."""

    def __init__(self, networks: Networks, batch: DomainPairBatch,
                 noise: Optional[NoiseBundle] = None):
        dtype = _model_dtype(networks)
        b, dc = batch.batch_size, batch.domain_count
        self.x_a = _tensor(batch.images_a, dtype)
        self.x_b = _tensor(batch.images_b, dtype)
        self.d_a = _one_hot_rows(batch.domain_a, dc, b, dtype)
        self.d_b = _one_hot_rows(batch.domain_b, dc, b, dtype)
        self.lab_a = _labels(batch.domain_a, b)
        self.lab_b = _labels(batch.domain_b, b)
        if noise is not None:
            self.eps_a = _tensor(noise.eps_a, dtype)
            self.eps_b = _tensor(noise.eps_b, dtype)
            self.eps_a2 = _tensor(noise.eps_a2, dtype)
            self.eps_b2 = _tensor(noise.eps_b2, dtype)
            self.attr_a = _tensor(noise.attr_a, dtype)
            self.attr_b = _tensor(noise.attr_b, dtype)

    def translate(self, networks: Networks):
        """Encode both halves and produce the four cross-domain fakes.

        Returns (fakes into domain a, fakes into domain b) where each list is
        [encoded-attribute fake, random-attribute fake].
        """
        zc_a = networks.enc_content(self.x_a)
        zc_b = networks.enc_content(self.x_b)
        mu_a, lv_a = networks.enc_attr(self.x_a, self.d_a)
        mu_b, lv_b = networks.enc_attr(self.x_b, self.d_b)
        za_a = _reparam(mu_a, lv_a, self.eps_a)
        za_b = _reparam(mu_b, lv_b, self.eps_b)
        into_a = [networks.gen(zc_b, za_a, self.d_a),
                  networks.gen(zc_b, self.attr_a, self.d_a)]
        into_b = [networks.gen(zc_a, za_b, self.d_b),
                  networks.gen(zc_a, self.attr_b, self.d_b)]
        return into_a, into_b


def generator_losses(networks: Networks, batch: DomainPairBatch,
                     noise: NoiseBundle) -> Dict[str, torch.Tensor]:
    """Differentiable scalar tensors for the six objective terms."""
    t = _PairInputs(networks, batch, noise)

    zc_a = networks.enc_content(t.x_a)
    zc_b = networks.enc_content(t.x_b)
    mu_a, lv_a = networks.enc_attr(t.x_a, t.d_a)
    mu_b, lv_b = networks.enc_attr(t.x_b, t.d_b)
    za_a = _reparam(mu_a, lv_a, t.eps_a)
    za_b = _reparam(mu_b, lv_b, t.eps_b)

    x_aa = networks.gen(zc_a, za_a, t.d_a)
    x_bb = networks.gen(zc_b, za_b, t.d_b)
    recon = 0.5 * (torch.mean(torch.abs(x_aa - t.x_a))
                   + torch.mean(torch.abs(x_bb - t.x_b)))

    # Swap content across the pair, then undo the swap via re-encoding.
    u = networks.gen(zc_b, za_a, t.d_a)
    v = networks.gen(zc_a, za_b, t.d_b)
    zc_u = networks.enc_content(u)
    zc_v = networks.enc_content(v)
    mu_u, lv_u = networks.enc_attr(u, t.d_a)
    mu_v, lv_v = networks.enc_attr(v, t.d_b)
    za_u = _reparam(mu_u, lv_u, t.eps_a2)
    za_v = _reparam(mu_v, lv_v, t.eps_b2)
    x_a_cyc = networks.gen(zc_v, za_u, t.d_a)
    x_b_cyc = networks.gen(zc_u, za_v, t.d_b)
    cc = 0.5 * (torch.mean(torch.abs(x_a_cyc - t.x_a))
                + torch.mean(torch.abs(x_b_cyc - t.x_b)))

    # Random-attribute branch: the attribute must be recoverable.
    u_r = networks.gen(zc_b, t.attr_a, t.d_a)
    v_r = networks.gen(zc_a, t.attr_b, t.d_b)
    mu_ur, _ = networks.enc_attr(u_r, t.d_a)
    mu_vr, _ = networks.enc_attr(v_r, t.d_b)
    latent = 0.5 * (torch.mean(torch.abs(mu_ur - t.attr_a))
                    + torch.mean(torch.abs(mu_vr - t.attr_b)))

    c = 0.5 * (cross_entropy_uniform(networks.dis_content(zc_a))
               + cross_entropy_uniform(networks.dis_content(zc_b)))

    d_parts = []
    for fake, labels in ((u, t.lab_a), (v, t.lab_b), (u_r, t.lab_a), (v_r, t.lab_b)):
        realness, logits = networks.dis_domain(fake)
        d_parts.append(least_squares_real(realness)
                       + F.cross_entropy(logits, labels))
    d = sum(d_parts) / len(d_parts)

    kl = 0.5 * (_kl_batch(mu_a, lv_a) + _kl_batch(mu_b, lv_b))

    return {"cc": cc, "c": c, "d": d, "recon": recon, "latent": latent, "kl": kl}


def weighted_total(terms: Dict[str, torch.Tensor], weights: LossWeights) -> torch.Tensor:
    return (weights.w_cc * terms["cc"] + weights.w_c * terms["c"]
            + weights.w_d * terms["d"] + weights.w_recon * terms["recon"]
            + weights.w_latent * terms["latent"] + weights.w_kl * terms["kl"])


def content_discriminator_loss(networks: Networks,
                               batch: DomainPairBatch) -> torch.Tensor:
    """Cross-entropy of the content discriminator vs the true source domains."""
    t = _PairInputs(networks, batch)
    with torch.no_grad():
        zc_a = networks.enc_content(t.x_a)
        zc_b = networks.enc_content(t.x_b)
    return 0.5 * (F.cross_entropy(networks.dis_content(zc_a), t.lab_a)
                  + F.cross_entropy(networks.dis_content(zc_b), t.lab_b))


def domain_discriminator_loss(networks: Networks, batch: DomainPairBatch,
                              noise: NoiseBundle) -> torch.Tensor:
    """Least-squares real/fake terms plus domain classification on real tiles."""
    t = _PairInputs(networks, batch, noise)
    with torch.no_grad():
        into_a, into_b = t.translate(networks)
    real_a_pred, real_a_logits = networks.dis_domain(t.x_a)
    real_b_pred, real_b_logits = networks.dis_domain(t.x_b)
    realness = 0.5 * (least_squares_real(real_a_pred)
                      + least_squares_real(real_b_pred))
    fakes = into_a + into_b
    realness = realness + sum(least_squares_fake(networks.dis_domain(f)[0])
                              for f in fakes) / len(fakes)
    classify = 0.5 * (F.cross_entropy(real_a_logits, t.lab_a)
                      + F.cross_entropy(real_b_logits, t.lab_b))
    return realness + classify


BatchLike = Union[DomainPairBatch, Tuple[ImageTile, ImageTile], Sequence[ImageTile]]


def _as_pair_batch(batch: BatchLike, domain_count: Optional[int]) -> DomainPairBatch:
    if isinstance(batch, DomainPairBatch):
        return batch
    tiles = list(batch)
    if len(tiles) != 2:
        raise InputShapeError(f"expected a pair of tiles, got {len(tiles)}")
    count = domain_count
    if count is None:
        count = max(t.domain_id for t in tiles) + 1
        count = max(count, 2)
    return DomainPairBatch.from_tiles([tiles[0]], [tiles[1]], count)


def compute_losses(batch: BatchLike, networks: Networks,
                   weights: Optional[LossWeights] = None,
                   rng: Optional[np.random.Generator] = None,
                   domain_count: Optional[int] = None) -> LossBreakdown:
    """Evaluate the six-term objective on a domain pair (no gradients).

    ``batch`` is a DomainPairBatch or a pair of domain-labeled ImageTiles.
    The reported total is exactly the weighted sum of the reported terms.
    """
    weights = LossWeights() if weights is None else weights
    rng = np.random.default_rng(0) if rng is None else rng
    pair = _as_pair_batch(batch, domain_count)
    noise = draw_noise(rng, pair.batch_size)
    with torch.no_grad():
        terms = generator_losses(networks, pair, noise)
    return LossBreakdown.from_terms(
        weights, **{k: float(v) for k, v in terms.items()})
