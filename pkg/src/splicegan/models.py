"""U-Net generator and PatchGAN discriminator.

Both networks take values in [0, 1] and rescale to [-1, 1] internally. Norm
layers are InstanceNorm without affine parameters so that a forward pass does
not depend on batch composition or running statistics.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import BadShape, ConfigError

NETWORK_RESOLUTION = 256
INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorSpec:
    encoder_widths: tuple[int, ...] = (64, 128, 256, 512, 512, 512, 512, 512)
    in_channels: int = 3
    out_channels: int = 1
    dropout: float = 0.5
    dropout_stages: int = 3  # the first N decoder stages carry dropout

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def depth(self) -> int:
        return len(self.encoder_widths)

    @property
    def decoder_widths(self) -> tuple[int, ...]:
        """Output width of decoder stages 1..depth; stage i mirrors encoder stage depth - i."""
        n = self.depth
        return tuple(self.encoder_widths[n - i - 1] for i in range(1, n)) + ((self.out_channels,) if n else ())

    def decoder_in_channels(self, stage: int) -> int:
        """Input width of 1-based decoder ``stage``: upsampled path plus the skip, if any."""
        n = self.depth
        if stage == 1:
            return self.encoder_widths[n - 1]
        upsampled = self.decoder_widths[stage - 2]
        skip = self.encoder_widths[n - stage]  # encoder stage n - (stage - 1)
        return upsampled + skip

    def skip_plan(self) -> list[tuple[int, int]]:
        """(decoder stage, encoder stage) pairs: decoder output i is joined with encoder output depth - i."""
        return [(i, self.depth - i) for i in range(1, self.depth)]

    @classmethod
    def with_base_width(cls, ngf: int, depth: int = 8, **kwargs) -> "GeneratorSpec":
        widths = tuple(ngf * min(2**k, 8) for k in range(depth))
        return cls(encoder_widths=widths, **kwargs)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorSpec":
        return cls(**{**obj, "encoder_widths": tuple(obj["encoder_widths"])})


@dataclass(frozen=True)
class DiscriminatorSpec:
    widths: tuple[int, ...] = (64, 128, 256, 512, 1)
    strides: tuple[int, ...] = (2, 2, 2, 1, 1)
    kernel_size: int = 4
    padding: int = 1
    in_channels: int = 4

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if len(self.widths) != len(self.strides):
            raise ConfigError("discriminator widths and strides must have the same length")

    @property
    def depth(self) -> int:
        return len(self.widths)

    @property
    def kernels(self) -> tuple[int, ...]:
        return (self.kernel_size,) * self.depth

    def output_size(self, input_size: int = NETWORK_RESOLUTION) -> int:
        size = input_size
        for k, s in zip(self.kernels, self.strides):
            size = (size + 2 * self.padding - k) // s + 1
        return size

    @classmethod
    def with_base_width(cls, ndf: int, **kwargs) -> "DiscriminatorSpec":
        return cls(widths=(ndf, ndf * 2, ndf * 4, ndf * 8, 1), **kwargs)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "DiscriminatorSpec":
        return cls(**{**obj, "widths": tuple(obj["widths"]), "strides": tuple(obj["strides"])})


PRESETS = {
    "paper": (GeneratorSpec.with_base_width(64), DiscriminatorSpec.with_base_width(64)),
    # reduced widths for CPU runs; 8 was tried and memorized its few training
    # forgeries without learning anything that transfers
    "tiny": (GeneratorSpec.with_base_width(16), DiscriminatorSpec.with_base_width(16)),
}


def preset(name: str) -> tuple[GeneratorSpec, DiscriminatorSpec]:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown model preset {name!r}; expected one of {sorted(PRESETS)}") from None


def receptive_field(spec: DiscriminatorSpec) -> int:
    """Input pixels seen by one output element, folded from the output backward."""
    field = 1
    for k, s in reversed(list(zip(spec.kernels, spec.strides))):
        field = field * s + (k - s)
    return field


def _dropout(x: torch.Tensor, p: float, rng: torch.Generator | None) -> torch.Tensor:
    keep = torch.rand(x.shape, generator=rng, dtype=x.dtype, device=x.device) >= p
    return x * keep / (1.0 - p)


class UNetGenerator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        n = spec.depth
        self.encoder = nn.ModuleList()
        in_ch = spec.in_channels
        for k, width in enumerate(spec.encoder_widths):
            stage = nn.Module()
            stage.conv = nn.Conv2d(in_ch, width, 4, stride=2, padding=1)
            # no norm on the outermost stage, nor on the 1x1 innermost one
            stage.norm = nn.InstanceNorm2d(width) if 0 < k < n - 1 else nn.Identity()
            self.encoder.append(stage)
            in_ch = width
        self.decoder = nn.ModuleList()
        for i, width in enumerate(spec.decoder_widths, start=1):
            stage = nn.Module()
            stage.conv = nn.ConvTranspose2d(spec.decoder_in_channels(i), width, 4, stride=2, padding=1)
            stage.norm = nn.InstanceNorm2d(width) if i < n else nn.Identity()
            self.decoder.append(stage)

    def forward(self, images: torch.Tensor, rng: torch.Generator | None = None) -> torch.Tensor:
        n = self.spec.depth
        x = images * 2.0 - 1.0
        skips = []
        for k, stage in enumerate(self.encoder):
            if k > 0:
                x = F.leaky_relu(x, 0.2)
            x = stage.norm(stage.conv(x))
            skips.append(x)
        for i, stage in enumerate(self.decoder, start=1):
            x = stage.norm(stage.conv(F.relu(x)))
            if i == n:
                return torch.sigmoid(x)
            if self.training and i <= self.spec.dropout_stages and self.spec.dropout > 0:
                x = _dropout(x, self.spec.dropout, rng)
            x = torch.cat([x, skips[n - i - 1]], dim=1)
        return x


class PatchDiscriminator(nn.Module):
    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        self.stages = nn.ModuleList()
        in_ch = spec.in_channels
        for k, (width, stride) in enumerate(zip(spec.widths, spec.strides)):
            stage = nn.Module()
            stage.conv = nn.Conv2d(in_ch, width, spec.kernel_size, stride=stride, padding=spec.padding)
            stage.norm = nn.InstanceNorm2d(width) if 0 < k < spec.depth - 1 else nn.Identity()
            self.stages.append(stage)
            in_ch = width

    def forward(self, images: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
        x = torch.cat([images, masks], dim=1) * 2.0 - 1.0
        last = len(self.stages) - 1
        for k, stage in enumerate(self.stages):
            x = stage.norm(stage.conv(x))
            x = torch.sigmoid(x) if k == last else F.leaky_relu(x, 0.2)
        return x


def _init_weights(module: nn.Module, seed: int) -> None:
    rng = torch.Generator().manual_seed(seed)
    for sub in module.modules():
        if isinstance(sub, (nn.Conv2d, nn.ConvTranspose2d)):
            with torch.no_grad():
                sub.weight.normal_(0.0, INIT_STD, generator=rng)
                if sub.bias is not None:
                    sub.bias.zero_()


def build_model(spec: GeneratorSpec | DiscriminatorSpec, seed: int | None = None):
    model = UNetGenerator(spec) if isinstance(spec, GeneratorSpec) else PatchDiscriminator(spec)
    if seed is not None:
        _init_weights(model, seed)
    return model


def init_params(spec: GeneratorSpec | DiscriminatorSpec, seed: int) -> "OrderedDict[str, torch.Tensor]":
    """N(0, 0.02) conv weights and zero biases, keyed by stage; deterministic in ``seed``."""
    return OrderedDict((k, v.detach().clone()) for k, v in build_model(spec, seed).state_dict().items())


def from_params(spec, params) -> nn.Module:
    model = build_model(spec)
    dtype = next(iter(params.values())).dtype if params else torch.float32
    model.to(dtype)
    model.load_state_dict(params)
    return model


def _check_batch(tensor: torch.Tensor, channels: int, what: str) -> None:
    if tensor.ndim != 4 or tensor.shape[1] != channels or tensor.shape[2:] != (NETWORK_RESOLUTION,) * 2:
        raise BadShape(
            f"{what} must be B x {channels} x {NETWORK_RESOLUTION} x {NETWORK_RESOLUTION}, got {tuple(tensor.shape)}"
        )


def generator_forward(
    generator: UNetGenerator,
    images: torch.Tensor,
    mode: str = "infer",
    rng: torch.Generator | None = None,
) -> torch.Tensor:
    """Mask estimates in [0, 1]; ``mode="infer"`` disables dropout and is deterministic."""
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    _check_batch(images, generator.spec.in_channels, "image batch")
    generator.train(mode == "train")
    if mode == "infer":
        with torch.no_grad():
            return generator(images)
    return generator(images, rng)


def discriminator_forward(
    discriminator: PatchDiscriminator, images: torch.Tensor, masks: torch.Tensor
) -> torch.Tensor:
    """Patch score grid B x 1 x G x G; its mean is the image-level decision value."""
    _check_batch(images, 3, "image batch")
    _check_batch(masks, 1, "mask batch")
    if images.shape[0] != masks.shape[0]:
        raise BadShape(f"image batch {images.shape[0]} and mask batch {masks.shape[0]} differ")
    return discriminator(images, masks)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
