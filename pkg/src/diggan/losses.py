"""Training objectives: adversarial, triplet, reconstruction, and their sum.

All functions accept torch tensors (gradients flow through) or numpy
arrays, and return a 0-dim torch tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import LossDomainError

# Floor for squared distances before the sqrt, so the gradient stays
# finite when anchor and positive coincide. Far below any real distance.
_DIST_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    w_triplet: float = 1.0
    w_rec: float = 1.0
    w_angle: float = 1.0
    w_id: float = 1.0
    margin: float = 0.2

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        for name in ("w_triplet", "w_rec", "w_angle", "w_id"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _check_open_unit(x: torch.Tensor, what: str) -> None:
    with torch.no_grad():
        if x.numel() == 0 or not torch.all((x > 0) & (x < 1)):
            raise LossDomainError(f"{what} scores must lie strictly in (0, 1)")


def angle_adv_losses(d_real, d_fake):
    """Adversarial pair for the view-conditioned discriminator.

    loss_D = -mean log D(real) - mean log(1 - D(fake));
    loss_G = -mean log D(fake), the non-saturating generator form.
    """
    d_real, d_fake = _as_tensor(d_real), _as_tensor(d_fake)
    _check_open_unit(d_real, "real")
    _check_open_unit(d_fake, "fake")
    loss_d = -torch.log(d_real).mean() - torch.log(1.0 - d_fake).mean()
    loss_g = -torch.log(d_fake).mean()
    return loss_d, loss_g


def id_adv_losses(d_real_pair, d_fake_pair):
    """Same adversarial form, over identity-pair scores."""
    return angle_adv_losses(d_real_pair, d_fake_pair)


def pairwise_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Row-wise Euclidean distance, gradient-safe at zero."""
    return torch.sqrt(torch.clamp(((a - b) ** 2).sum(dim=-1), min=_DIST_EPS))


def triplet_loss(z_a, z_p, z_n, margin: float = 0.2):
    """Hinge over the anchor-positive vs anchor-negative distance gap,
    meaned over the batch. Distances are plain (non-squared) Euclidean.
    """
    z_a, z_p, z_n = _as_tensor(z_a), _as_tensor(z_p), _as_tensor(z_n)
    if not (z_a.shape == z_p.shape == z_n.shape):
        raise LossDomainError(
            f"triplet code shapes differ: {z_a.shape}, {z_p.shape}, {z_n.shape}"
        )
    d_pos = pairwise_distance(z_a, z_p)
    d_neg = pairwise_distance(z_a, z_n)
    return torch.clamp(d_pos - d_neg + margin, min=0.0).mean()


def recon_loss(x_gen, x_target):
    """Mean absolute pixel difference (L1 normalized per pixel)."""
    x_gen, x_target = _as_tensor(x_gen), _as_tensor(x_target)
    if x_gen.shape != x_target.shape:
        raise LossDomainError(
            f"reconstruction shapes differ: {x_gen.shape} vs {x_target.shape}"
        )
    return (x_gen - x_target).abs().mean()


def total_generator_objective(l_triplet, l_rec, l_g_angle, l_g_id,
                              weights: LossWeights):
    """Weighted sum of the four generator-side terms."""
    total = (weights.w_triplet * _as_tensor(l_triplet)
             + weights.w_rec * _as_tensor(l_rec)
             + weights.w_angle * _as_tensor(l_g_angle)
             + weights.w_id * _as_tensor(l_g_id))
    with torch.no_grad():
        if not torch.isfinite(total):
            raise LossDomainError("non-finite component in total objective")
    return total
