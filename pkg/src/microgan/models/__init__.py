"""The enhancer and scorer networks plus their training objectives."""

from .discriminator import Discriminator
from .generator import Generator
from .losses import (
    LossWeights,
    bce,
    discriminator_loss,
    discriminator_loss_grads,
    generator_loss,
    generator_loss_with_grads,
    ssim_and_grad,
)

__all__ = [
    "Generator",
    "Discriminator",
    "LossWeights",
    "bce",
    "discriminator_loss",
    "discriminator_loss_grads",
    "generator_loss",
    "generator_loss_with_grads",
    "ssim_and_grad",
]
