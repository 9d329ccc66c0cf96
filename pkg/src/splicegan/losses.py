"""Adversarial and reconstruction objectives.

All losses take probabilities in [0, 1], clamp them to ``[eps, 1 - eps]``
before the log, and reduce by the mean over batch and spatial dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch

from .errors import ConfigError, ShapeMismatch

EPS_FLOAT32 = 1e-7
EPS_FLOAT64 = 1e-12
RECON_MODES = ("bce", "l1")


def default_epsilon(dtype: torch.dtype) -> float:
    return EPS_FLOAT64 if dtype == torch.float64 else EPS_FLOAT32


@dataclass(frozen=True)
class LossConfig:
    recon_mode: str = "bce"
    lam: float = 100.0
    epsilon: float | None = None  # None: picked from the tensor dtype

    def __post_init__(self):
        if self.recon_mode not in RECON_MODES:
            raise ConfigError(f"recon_mode must be one of {RECON_MODES}, got {self.recon_mode!r}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.epsilon is not None and not 0 < self.epsilon < 0.5:
            raise ConfigError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")

    def eps_for(self, tensor: torch.Tensor) -> float:
        return self.epsilon if self.epsilon is not None else default_epsilon(tensor.dtype)


def _safe_log(p: torch.Tensor, eps: float | None) -> torch.Tensor:
    eps = default_epsilon(p.dtype) if eps is None else eps
    return torch.log(p.clamp(eps, 1.0 - eps))


def adversarial_loss_D(real_scores: torch.Tensor, fake_scores: torch.Tensor, eps: float | None = None) -> torch.Tensor:
    """Discriminator loss: push real pair scores to 1 and fake pair scores to 0."""
    return -_safe_log(real_scores, eps).mean() - _safe_log(1.0 - fake_scores, eps).mean()


def adversarial_loss_G(fake_scores: torch.Tensor, eps: float | None = None) -> torch.Tensor:
    # non-saturating form: maximize log D(I, G(I))
    return -_safe_log(fake_scores, eps).mean()


def reconstruction_loss(
    estimate: torch.Tensor, target: torch.Tensor, mode: str = "bce", eps: float | None = None
) -> torch.Tensor:
    if estimate.shape != target.shape:
        raise ShapeMismatch(f"estimate {tuple(estimate.shape)} vs target {tuple(target.shape)}")
    if mode == "bce":
        return -(target * _safe_log(estimate, eps) + (1.0 - target) * _safe_log(1.0 - estimate, eps)).mean()
    if mode == "l1":
        return (estimate - target).abs().mean()
    raise ConfigError(f"reconstruction mode must be one of {RECON_MODES}, got {mode!r}")


class GeneratorLoss(NamedTuple):
    total: torch.Tensor
    adversarial: torch.Tensor
    reconstruction: torch.Tensor


def total_generator_loss(
    fake_scores: torch.Tensor, estimate: torch.Tensor, target: torch.Tensor, config: LossConfig
) -> GeneratorLoss:
    eps = config.eps_for(estimate)
    adversarial = adversarial_loss_G(fake_scores, eps)
    reconstruction = reconstruction_loss(estimate, target, config.recon_mode, eps)
    return GeneratorLoss(adversarial + config.lam * reconstruction, adversarial, reconstruction)


LOSS_CSV_HEADER = ("step", "L_adv_G", "L_R", "L_total", "L_D")
