"""Training objectives for the paired and unpaired translators.

The generator's adversarial term defaults to the non-saturating form
(-log D on fakes); the literal saturating form and a least-squares variant
are available behind flags for comparison experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Dict

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class LossWeights:
    """Weights for the reconstruction terms of the two objectives."""

    l1: float = 100.0
    cycle: float = 10.0
    identity: float = 5.0

    def __post_init__(self):
        if self.l1 < 0 or self.cycle < 0 or self.identity < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossBreakdown:
    """Named scalar loss components for one step; ``total`` is the
    generator-side objective and ``adversarial_d`` the discriminator's."""

    adversarial_g: float = 0.0
    adversarial_d: float = 0.0
    l1: float = 0.0
    cycle: float = 0.0
    identity: float = 0.0
    total: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def l1_loss(generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over the whole minibatch."""
    _check_same_shape(generated, target, "l1_loss")
    return (generated - target).abs().mean()


def _bce_logits(logits: torch.Tensor, target_is_real: bool) -> torch.Tensor:
    target = torch.ones_like(logits) if target_is_real else torch.zeros_like(logits)
    return F.binary_cross_entropy_with_logits(logits, target)


def adversarial_loss(real_logits: torch.Tensor | None, fake_logits: torch.Tensor,
                     side: str, literal: bool = False, lsgan: bool = False) -> torch.Tensor:
    """Patch-map adversarial loss from raw discriminator logits.

    ``side="discriminator"`` returns BCE(real, 1) + BCE(fake, 0);
    ``side="generator"`` returns -log D(fake) (non-saturating), the
    saturating log(1 - D(fake)) when ``literal``, or the least-squares
    variant when ``lsgan``.
    """
    if not torch.isfinite(fake_logits).all() or (
            real_logits is not None and not torch.isfinite(real_logits).all()):
        raise FloatingPointError("adversarial_loss: non-finite discriminator logits")
    if side == "discriminator":
        if real_logits is None:
            raise ValueError("discriminator side needs real logits")
        if lsgan:
            return ((real_logits - 1) ** 2).mean() + (fake_logits ** 2).mean()
        return _bce_logits(real_logits, True) + _bce_logits(fake_logits, False)
    if side == "generator":
        if lsgan:
            return ((fake_logits - 1) ** 2).mean()
        if literal:
            # log(1 - sigmoid(x)) = -softplus(x)
            return -F.softplus(fake_logits).mean()
        return _bce_logits(fake_logits, True)
    raise ValueError(f"unknown side {side!r}")


def cycle_loss(x: torch.Tensor, f_of_g_x: torch.Tensor,
               y: torch.Tensor, g_of_f_y: torch.Tensor) -> torch.Tensor:
    """Forward plus backward cycle reconstruction error."""
    return l1_loss(f_of_g_x, x) + l1_loss(g_of_f_y, y)


def identity_loss(g_of_y: torch.Tensor, y: torch.Tensor,
                  f_of_x: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Identity-mapping error for same-domain inputs."""
    return l1_loss(g_of_y, y) + l1_loss(f_of_x, x)


def pix2pix_objective(adversarial_g: torch.Tensor, adversarial_d: torch.Tensor,
                      l1: torch.Tensor, weights: LossWeights) -> tuple[torch.Tensor, LossBreakdown]:
    """Generator total = adversarial + lambda * L1; returns (total, breakdown)."""
    total = adversarial_g + weights.l1 * l1
    breakdown = LossBreakdown(adversarial_g=float(adversarial_g.detach()),
                              adversarial_d=float(adversarial_d.detach()),
                              l1=float(l1.detach()), total=float(total.detach()))
    return total, breakdown


def cyclegan_objective(adversarial_g: torch.Tensor, adversarial_f: torch.Tensor,
                       adversarial_d: torch.Tensor, cycle: torch.Tensor,
                       identity: torch.Tensor,
                       weights: LossWeights) -> tuple[torch.Tensor, LossBreakdown]:
    """Joint generator-side total for the coupled unpaired objective."""
    total = adversarial_g + adversarial_f + weights.cycle * cycle + weights.identity * identity
    breakdown = LossBreakdown(adversarial_g=float((adversarial_g + adversarial_f).detach()),
                              adversarial_d=float(adversarial_d.detach()),
                              cycle=float(cycle.detach()),
                              identity=float(identity.detach()),
                              total=float(total.detach()))
    return total, breakdown
