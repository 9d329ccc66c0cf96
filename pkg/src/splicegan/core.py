"""Image, mask and decision value types shared across the pipeline.

Arrays are stored row-major as ``(row, col[, channel])``. A pixel coordinate
``(x, y)`` is ``(column, row)`` with the origin at the top-left corner.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

CORPUS_RESOLUTION = 650
FORGED = 255


class SizeClass(str, enum.Enum):
    PRISTINE = "pristine"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"

    @property
    def nominal_size(self) -> int | None:
        return _NOMINAL_SIZE[self]

    @classmethod
    def from_size(cls, target_size: int) -> "SizeClass":
        for size_class, size in _NOMINAL_SIZE.items():
            if size == target_size:
                return size_class
        raise ValueError(f"no size class for target size {target_size}; expected one of 32, 64, 128")


_NOMINAL_SIZE = {
    SizeClass.PRISTINE: None,
    SizeClass.SMALL: 32,
    SizeClass.MEDIUM: 64,
    SizeClass.LARGE: 128,
}

# Per-axis tolerance on "approximately NxN" when classifying a forged region.
SIZE_TOLERANCE = 0.25


class Label(str, enum.Enum):
    PRISTINE = "pristine"
    FORGED = "forged"


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(array, dtype=dtype)
    if out is array:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ImageRGB:
    data: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"ImageRGB expects (H, W, 3) data, got shape {data.shape}")
        if data.dtype != np.uint8:
            raise ValueError(f"ImageRGB expects uint8 data, got {data.dtype}")
        object.__setattr__(self, "data", _frozen(data, np.uint8))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        return isinstance(other, ImageRGB) and np.array_equal(self.data, other.data)

    def save(self, path: str | Path) -> None:
        Image.fromarray(self.data, mode="RGB").save(path, format="PNG")

    @classmethod
    def load(cls, path: str | Path) -> "ImageRGB":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB")))


@dataclass(frozen=True, eq=False)
class ForgeryMask:
    """Binary ground-truth mask: 255 on spliced pixels, 0 elsewhere."""

    data: np.ndarray  # (height, width) uint8 in {0, 255}

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"ForgeryMask expects (H, W) data, got shape {data.shape}")
        if data.dtype == np.bool_:
            data = data.astype(np.uint8) * FORGED
        if not np.isin(data, (0, FORGED)).all():
            raise ValueError("ForgeryMask values must be exactly 0 or 255")
        object.__setattr__(self, "data", _frozen(data, np.uint8))

    @classmethod
    def zeros(cls, height: int, width: int) -> "ForgeryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def is_pristine(self) -> bool:
        return not self.data.any()

    def as_binary(self) -> np.ndarray:
        """Float32 copy in {0.0, 1.0}, the form used as a loss target."""
        return (self.data == FORGED).astype(np.float32)

    def bounding_box(self) -> tuple[int, int, int, int] | None:
        """``(x0, y0, x1, y1)`` inclusive, or None for an all-zero mask."""
        rows = np.flatnonzero(self.data.any(axis=1))
        cols = np.flatnonzero(self.data.any(axis=0))
        if rows.size == 0:
            return None
        return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])

    def __eq__(self, other):
        return isinstance(other, ForgeryMask) and np.array_equal(self.data, other.data)

    def save(self, path: str | Path) -> None:
        Image.fromarray(self.data, mode="L").save(path, format="PNG")

    @classmethod
    def load(cls, path: str | Path) -> "ForgeryMask":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("L")))


@dataclass(frozen=True, eq=False)
class SoftMask:
    """Per-pixel forgery likelihood in [0, 1]."""

    data: np.ndarray  # (height, width) float32

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError(f"SoftMask expects (H, W) data, got shape {data.shape}")
        if not np.isfinite(data).all() or data.min(initial=0.0) < 0.0 or data.max(initial=0.0) > 1.0:
            raise ValueError("SoftMask values must be finite and lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(data, np.float32))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def to_png_array(self) -> np.ndarray:
        return np.rint(self.data.astype(np.float64) * 255.0).astype(np.uint8)

    def save(self, path: str | Path) -> None:
        Image.fromarray(self.to_png_array(), mode="L").save(path, format="PNG")

    def __eq__(self, other):
        return isinstance(other, SoftMask) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class ImageMaskPair:
    id: str
    image: ImageRGB
    mask: ForgeryMask
    size_class: SizeClass

    def __post_init__(self):
        object.__setattr__(self, "size_class", SizeClass(self.size_class))
        if (self.image.height, self.image.width) != (self.mask.height, self.mask.width):
            raise ValueError(
                f"image {self.image.width}x{self.image.height} and mask "
                f"{self.mask.width}x{self.mask.height} differ in size"
            )
        if (self.size_class is SizeClass.PRISTINE) != self.mask.is_pristine:
            raise ValueError(f"pair {self.id}: size class {self.size_class.value} contradicts mask content")

    def forged_extent_ok(self, tolerance: float = SIZE_TOLERANCE) -> bool:
        """True when the forged bounding box matches the nominal size within ``tolerance`` per axis."""
        nominal = self.size_class.nominal_size
        box = self.mask.bounding_box()
        if nominal is None:
            return box is None
        x0, y0, x1, y1 = box
        return all(abs(extent - nominal) <= tolerance * nominal for extent in (x1 - x0 + 1, y1 - y0 + 1))

    def save(self, image_path: str | Path, mask_path: str | Path) -> None:
        self.image.save(image_path)
        self.mask.save(mask_path)

    @classmethod
    def load(cls, id: str, image_path, mask_path, size_class) -> "ImageMaskPair":
        return cls(id, ImageRGB.load(image_path), ForgeryMask.load(mask_path), SizeClass(size_class))


@dataclass(frozen=True)
class DetectionResult:
    score: float
    threshold: float
    label: Label = field(init=False)

    def __post_init__(self):
        label = Label.FORGED if self.score >= self.threshold else Label.PRISTINE
        object.__setattr__(self, "label", label)

    def to_dict(self) -> dict:
        return {"score": self.score, "threshold": self.threshold, "label": self.label.value}


def mask_forged_pixel_count(mask: ForgeryMask) -> int:
    return int(np.count_nonzero(mask.data == FORGED))
