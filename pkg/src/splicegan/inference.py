"""Mask estimation and the image/pixel decision rules."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import Checkpoint
from .core import FORGED, DetectionResult, ForgeryMask, ImageRGB, SoftMask
from .errors import BadCheckpoint
from .models import NETWORK_RESOLUTION, UNetGenerator, generator_forward


def image_to_network(image: ImageRGB, dtype=torch.float32) -> torch.Tensor:
    """1 x 3 x 256 x 256 tensor in [0, 1] (bilinear, antialiased)."""
    x = torch.tensor(image.data).permute(2, 0, 1)[None].to(dtype) / 255.0
    if x.shape[-2:] != (NETWORK_RESOLUTION, NETWORK_RESOLUTION):
        x = F.interpolate(x, size=(NETWORK_RESOLUTION,) * 2, mode="bilinear", align_corners=False, antialias=True)
    return x.clamp_(0.0, 1.0)


def mask_to_network(mask: ForgeryMask, dtype=torch.float32) -> torch.Tensor:
    """1 x 1 x 256 x 256 binary target: a downsampled pixel is forged if at least half its area was."""
    m = torch.from_numpy(mask.as_binary())[None, None].to(dtype)
    if m.shape[-2:] != (NETWORK_RESOLUTION, NETWORK_RESOLUTION):
        m = F.interpolate(m, size=(NETWORK_RESOLUTION,) * 2, mode="bilinear", align_corners=False, antialias=True)
    return (m >= 0.5).to(dtype)


def upsample_estimate(estimate: torch.Tensor, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a 1 x H x W (or H x W) estimate back to source resolution."""
    x = estimate.reshape(1, 1, *estimate.shape[-2:]).float()
    if x.shape[-2:] != (height, width):
        x = F.interpolate(x, size=(height, width), mode="bilinear", align_corners=False)
    return x[0, 0].clamp_(0.0, 1.0).numpy()


def _generator(model) -> UNetGenerator:
    if isinstance(model, UNetGenerator):
        return model
    if isinstance(model, Checkpoint):
        return model.build_generator()
    if isinstance(model, (str, Path)):
        return Checkpoint.load(model).build_generator()
    raise BadCheckpoint(f"expected a checkpoint or generator, got {type(model).__name__}")


def estimate_masks(model, images: Sequence[ImageRGB] | Iterable[ImageRGB], batch_size: int = 8) -> list[SoftMask]:
    generator = _generator(model)
    out: list[SoftMask] = []
    batch: list[ImageRGB] = []

    def flush():
        x = torch.cat([image_to_network(im) for im in batch])
        y = generator_forward(generator, x, mode="infer")
        for im, est in zip(batch, y):
            out.append(SoftMask(upsample_estimate(est, im.height, im.width)))
        batch.clear()

    for image in images:
        batch.append(image)
        if len(batch) == batch_size:
            flush()
    if batch:
        flush()
    return out


def estimate_mask(model, image: ImageRGB) -> SoftMask:
    """Resize to network resolution, run the generator without dropout, resize back."""
    return estimate_masks(model, [image], batch_size=1)[0]


def detection_score(mask: SoftMask) -> float:
    """Mean mask value on the 0-255 pixel scale."""
    total = float(np.sum(mask.data, dtype=np.float64))
    return 255.0 * total / mask.data.size


def classify(score: float, threshold: float) -> DetectionResult:
    if not 0.0 <= threshold <= 255.0:
        raise ValueError(f"detection threshold must lie in [0, 255], got {threshold}")
    return DetectionResult(float(score), float(threshold))


def localize(mask: SoftMask, pixel_threshold: float = 0.5) -> ForgeryMask:
    if not 0.0 <= pixel_threshold <= 1.0:
        raise ValueError(f"pixel threshold must lie in [0, 1], got {pixel_threshold}")
    return ForgeryMask(np.where(mask.data >= pixel_threshold, FORGED, 0).astype(np.uint8))
