"""Splicing detection and localization with a conditional GAN (U-Net generator, PatchGAN discriminator)."""

__version__ = "0.1.0"
