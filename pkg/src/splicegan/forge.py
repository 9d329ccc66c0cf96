"""Synthetic splicing corpus: procedural bases and sprites, splicing,
geometric augmentation, per-class quotas and train/validation/test splits."""
from __future__ import annotations

import dataclasses
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from .core import (
    CORPUS_RESOLUTION,
    FORGED,
    ForgeryMask,
    ImageMaskPair,
    ImageRGB,
    SizeClass,
)
from .errors import (
    ConfigError,
    EmptySprite,
    InsufficientBases,
    MissingArtifact,
    OutOfBounds,
    QuotaUnsatisfiable,
)

TRANSFORMS = ("rot90", "rot180", "rot270", "flip_h", "flip_v")
AUGMENTED_CLASSES = (SizeClass.PRISTINE, SizeClass.SMALL)

REFERENCE_COUNTS = {
    SizeClass.SMALL: 158,
    SizeClass.MEDIUM: 32,
    SizeClass.LARGE: 31,
    SizeClass.PRISTINE: 123,
}

# Reference split composition. Small sums to 160 here against 158 in the
# corpus; build_splits apportions whatever is available by these ratios.
REFERENCE_SPLITS = {
    "train": {SizeClass.SMALL: 128, SizeClass.PRISTINE: 90},
    "validation": {SizeClass.SMALL: 32, SizeClass.PRISTINE: 18},
    "test": {SizeClass.MEDIUM: 32, SizeClass.LARGE: 31, SizeClass.PRISTINE: 15},
}
SPLITS = tuple(REFERENCE_SPLITS)

SPRITE_CATEGORIES = ("airplane", "cloud")
SPRITE_RESOLUTION = 128


@dataclass(frozen=True, eq=False)
class SpriteAsset:
    rgba: np.ndarray  # (height, width, 4) uint8, alpha in {0, 255}
    category: str = "object"

    def __post_init__(self):
        rgba = np.ascontiguousarray(self.rgba, dtype=np.uint8)
        if rgba.ndim != 3 or rgba.shape[2] != 4:
            raise ValueError(f"sprite expects (H, W, 4) data, got {rgba.shape}")
        if not np.isin(rgba[..., 3], (0, 255)).all():
            raise ValueError("sprite alpha must be binary (0 or 255)")
        rgba = rgba.copy()
        rgba.flags.writeable = False
        object.__setattr__(self, "rgba", rgba)

    @property
    def width(self) -> int:
        return self.rgba.shape[1]

    @property
    def height(self) -> int:
        return self.rgba.shape[0]

    @property
    def opaque(self) -> np.ndarray:
        return self.rgba[..., 3] == 255

    def resized(self, size: int) -> "SpriteAsset":
        if (self.height, self.width) == (size, size):
            return self
        im = Image.fromarray(self.rgba, mode="RGBA").resize((size, size), Image.NEAREST)
        return SpriteAsset(np.asarray(im), self.category)

    def save(self, path) -> None:
        Image.fromarray(self.rgba, mode="RGBA").save(path, format="PNG")

    @classmethod
    def load(cls, path, category: str | None = None) -> "SpriteAsset":
        with Image.open(path) as im:
            rgba = np.asarray(im.convert("RGBA")).copy()
        rgba[..., 3] = np.where(rgba[..., 3] >= 128, 255, 0)
        return cls(rgba, category or Path(path).stem.split("_")[0])


# ---------------------------------------------------------------- splicing


def splice(
    base: ImageRGB,
    sprite: SpriteAsset,
    top_left: tuple[int, int],
    target_size: int,
    id: str = "spliced",
) -> ImageMaskPair:
    """Paste ``sprite`` (rescaled to ``target_size`` square) into ``base``.

    Pixels under opaque sprite alpha are replaced by sprite RGB and marked 255
    in the mask. A replaced pixel whose sprite color happens to equal the base
    color gets its red LSB flipped, so every masked pixel differs from the base.
    """
    size_class = SizeClass.from_size(target_size)
    x, y = top_left
    if x < 0 or y < 0 or x + target_size > base.width or y + target_size > base.height:
        raise OutOfBounds(
            f"{target_size}px sprite at (x={x}, y={y}) does not fit a {base.width}x{base.height} image"
        )
    if not sprite.opaque.any():
        raise EmptySprite("sprite alpha is all zero")
    scaled = sprite.resized(target_size)
    opaque = scaled.opaque
    if not opaque.any():
        raise EmptySprite(f"sprite has no opaque pixels after resizing to {target_size}px")

    image = base.data.copy()
    window = image[y : y + target_size, x : x + target_size]
    patch = scaled.rgba[..., :3].copy()
    same = opaque & (patch == window).all(axis=2)
    patch[same, 0] ^= 1
    window[opaque] = patch[opaque]

    mask = np.zeros((base.height, base.width), dtype=np.uint8)
    mask[y : y + target_size, x : x + target_size][opaque] = FORGED
    return ImageMaskPair(id, ImageRGB(image), ForgeryMask(mask), size_class)


def _transform_array(array: np.ndarray, transform: str) -> np.ndarray:
    if transform == "rot90":
        return np.rot90(array, 1)
    if transform == "rot180":
        return np.rot90(array, 2)
    if transform == "rot270":
        return np.rot90(array, 3)
    if transform == "flip_h":
        # mirror about the vertical center axis
        return array[:, ::-1]
    if transform == "flip_v":
        return array[::-1, :]
    raise ValueError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")


def augmented_id(pair_id: str, transform: str) -> str:
    return f"{pair_id}__{transform}"


def augment(pair: ImageMaskPair, transform: str) -> ImageMaskPair:
    """Apply one rotation (counterclockwise) or flip to image and mask alike."""
    if pair.image.width != pair.image.height:
        raise ValueError(f"augment expects a square pair, got {pair.image.width}x{pair.image.height}")
    return ImageMaskPair(
        augmented_id(pair.id, transform),
        ImageRGB(_transform_array(pair.image.data, transform)),
        ForgeryMask(_transform_array(pair.mask.data, transform)),
        pair.size_class,
    )


# ------------------------------------------------------- procedural assets


def _value_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    grid = rng.random((cells, cells), dtype=np.float32)
    im = Image.fromarray(grid, mode="F").resize((size, size), Image.BICUBIC)
    return np.asarray(im, dtype=np.float32)


def _fractal_noise(rng, size, octaves=((4, 1.0), (9, 0.5), (21, 0.25), (47, 0.125))) -> np.ndarray:
    total = sum(_value_noise(rng, size, cells) * weight for cells, weight in octaves)
    total -= total.min()
    return total / max(float(total.max()), 1e-6)


_TERRAIN = np.array(
    [
        [38, 62, 78],  # water
        [62, 92, 48],  # forest
        [104, 124, 70],  # grassland
        [142, 126, 92],  # bare soil
        [120, 110, 100],  # rock
    ],
    dtype=np.float32,
)


def procedural_base(rng: np.random.Generator, size: int = CORPUS_RESOLUTION) -> ImageRGB:
    """A satellite-like terrain raster: land-cover fields, parcels, roads, sensor noise."""
    elevation = _fractal_noise(rng, size)
    moisture = _fractal_noise(rng, size)
    cover = np.select(
        [elevation < 0.18, moisture > 0.6, moisture > 0.35, elevation > 0.8],
        [0, 1, 2, 4],
        default=3,
    )
    rgb = _TERRAIN[cover] * (0.85 + 0.3 * _fractal_noise(rng, size, ((60, 1.0), (130, 0.5))))[..., None]
    rgb += rng.normal(0.0, 6.0, size=3).astype(np.float32)

    canvas = Image.fromarray(np.clip(rgb, 0, 255).astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(canvas)
    for _ in range(int(rng.integers(4, 14))):
        cx, cy = rng.uniform(0, size, 2)
        w, h = rng.uniform(30, 120, 2)
        angle = rng.uniform(0, math.pi)
        c, s = math.cos(angle), math.sin(angle)
        corners = [(cx + c * dx - s * dy, cy + s * dx + c * dy) for dx, dy in ((-w, -h), (w, -h), (w, h), (-w, h))]
        tone = _TERRAIN[int(rng.integers(1, 4))] * rng.uniform(0.8, 1.2)
        draw.polygon(corners, fill=tuple(int(v) for v in np.clip(tone, 0, 255)))
    for _ in range(int(rng.integers(0, 4))):
        points = [tuple(rng.uniform(-50, size + 50, 2)) for _ in range(int(rng.integers(2, 5)))]
        shade = int(rng.integers(95, 135))
        draw.line(points, fill=(shade, shade - 6, shade - 14), width=int(rng.integers(2, 6)))
    canvas = canvas.filter(ImageFilter.GaussianBlur(radius=1.2))

    out = np.asarray(canvas, dtype=np.float32) + rng.normal(0.0, 5.0, size=(size, size, 3))
    return ImageRGB(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def _fit_to_canvas(rgba: np.ndarray, size: int) -> np.ndarray:
    """Crop to the opaque bounding box and stretch back to ``size`` square."""
    opaque = rgba[..., 3] > 0
    rows = np.flatnonzero(opaque.any(axis=1))
    cols = np.flatnonzero(opaque.any(axis=0))
    crop = rgba[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    out = np.asarray(Image.fromarray(crop, mode="RGBA").resize((size, size), Image.NEAREST)).copy()
    out[..., 3] = np.where(out[..., 3] > 0, 255, 0)
    return out


def _airplane(rng: np.random.Generator, size: int) -> np.ndarray:
    scale = 4
    big = size * scale
    body = Image.new("L", (big, big), 0)
    draw = ImageDraw.Draw(body)
    c = big / 2
    length = big * 0.46
    span = big * rng.uniform(0.38, 0.48)
    width = big * rng.uniform(0.05, 0.08)
    sweep = big * rng.uniform(0.04, 0.14)
    chord = big * rng.uniform(0.10, 0.16)
    parts = [
        [(c - width, c - length), (c + width, c - length), (c + width, c + length), (c - width, c + length)],
        [(c - span, c + sweep), (c, c - chord), (c + span, c + sweep), (c + span, c + sweep + chord * 0.6),
         (c, c + chord * 0.2), (c - span, c + sweep + chord * 0.6)],
        [(c - span * 0.4, c + length * 0.92), (c, c + length * 0.7), (c + span * 0.4, c + length * 0.92),
         (c + span * 0.4, c + length), (c - span * 0.4, c + length)],
    ]
    for polygon in parts:
        draw.polygon(polygon, fill=255)
    draw.ellipse((c - width * 1.1, c - length - width, c + width * 1.1, c - length + width * 1.5), fill=255)
    body = body.rotate(float(rng.uniform(0, 360)), resample=Image.NEAREST)
    alpha = np.asarray(body.resize((size, size), Image.BOX)) >= 128

    grey = rng.uniform(175, 235)
    tint = rng.normal(0, 6, 3)
    yy, xx = np.mgrid[0:size, 0:size] / size
    shading = 1.0 + 0.12 * (xx - 0.5) - 0.08 * (yy - 0.5)
    rgb = (grey + tint)[None, None, :] * shading[..., None] + rng.normal(0, 1.5, (size, size, 3))
    rgba = np.zeros((size, size, 4), dtype=np.uint8)
    rgba[..., :3] = np.clip(np.rint(rgb), 0, 255)
    rgba[..., 3] = np.where(alpha, 255, 0)
    return rgba


def _cloud(rng: np.random.Generator, size: int) -> np.ndarray:
    scale = 4
    big = size * scale
    im = Image.new("L", (big, big), 0)
    draw = ImageDraw.Draw(im)
    for _ in range(int(rng.integers(6, 14))):
        cx, cy = rng.normal(big / 2, big * 0.14, 2)
        rx, ry = rng.uniform(0.12, 0.28, 2) * big
        draw.ellipse((cx - rx, cy - ry, cx + rx, cy + ry), fill=255)
    alpha = np.asarray(im.resize((size, size), Image.BOX)) >= 128

    puff = _fractal_noise(rng, size, ((3, 1.0), (7, 0.5), (15, 0.25)))
    level = rng.uniform(215, 250)
    rgb = (level - 35 * puff)[..., None] + np.array([0.0, 1.0, 3.0]) + rng.normal(0, 1.5, (size, size, 3))
    rgba = np.zeros((size, size, 4), dtype=np.uint8)
    rgba[..., :3] = np.clip(np.rint(rgb), 0, 255)
    rgba[..., 3] = np.where(alpha, 255, 0)
    return rgba


def procedural_sprite(rng: np.random.Generator, category: str, size: int = SPRITE_RESOLUTION) -> SpriteAsset:
    if category == "airplane":
        rgba = _airplane(rng, size)
    elif category == "cloud":
        rgba = _cloud(rng, size)
    else:
        raise ValueError(f"unknown sprite category {category!r}")
    return SpriteAsset(_fit_to_canvas(rgba, size), category)


def make_bases(count: int, seed: int) -> list[ImageRGB]:
    return [procedural_base(np.random.default_rng([seed, 0xBA5E, i])) for i in range(count)]


def make_sprites(count: int, seed: int) -> list[SpriteAsset]:
    return [
        procedural_sprite(np.random.default_rng([seed, 0x5B17, i]), SPRITE_CATEGORIES[i % len(SPRITE_CATEGORIES)])
        for i in range(count)
    ]


def load_bases(directory: str | Path) -> list[ImageRGB]:
    """User-supplied base rasters (PNG), sorted by filename, resized to the corpus resolution."""
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise MissingArtifact(f"no PNG base images in {directory}")
    bases = []
    for path in paths:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (CORPUS_RESOLUTION, CORPUS_RESOLUTION):
                im = im.resize((CORPUS_RESOLUTION, CORPUS_RESOLUTION), Image.BILINEAR)
            bases.append(ImageRGB(np.asarray(im)))
    return bases


# ---------------------------------------------------------------- manifest


@dataclass(frozen=True)
class PairRecord:
    id: str
    image_path: str
    mask_path: str
    size_class: SizeClass
    split: str | None = None
    origin: str | None = None
    transform: str | None = None

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["size_class"] = self.size_class.value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PairRecord":
        fields = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in obj.items() if k in fields}
        kwargs["size_class"] = SizeClass(kwargs["size_class"])
        return cls(**kwargs)


@dataclass(frozen=True)
class DatasetManifest:
    seed: int
    pairs: tuple[PairRecord, ...]
    scale: float = 1.0
    root: Path | None = field(default=None, compare=False)

    @property
    def counts(self) -> dict[str, int]:
        tally = {c.value: 0 for c in (SizeClass.SMALL, SizeClass.MEDIUM, SizeClass.LARGE, SizeClass.PRISTINE)}
        for record in self.pairs:
            tally[record.size_class.value] += 1
        return tally

    @property
    def splits(self) -> dict[str, str | None]:
        return {record.id: record.split for record in self.pairs}

    def split(self, name: str) -> list[PairRecord]:
        if name not in SPLITS:
            raise ConfigError(f"unknown split {name!r}; expected one of {SPLITS}")
        return [record for record in self.pairs if record.split == name]

    def split_counts(self) -> dict[str, dict[str, int]]:
        out = {name: {} for name in SPLITS}
        for record in self.pairs:
            if record.split is not None:
                bucket = out[record.split]
                bucket[record.size_class.value] = bucket.get(record.size_class.value, 0) + 1
        return out

    def load_pair(self, record: PairRecord) -> ImageMaskPair:
        root = self.root or Path(".")
        image_path, mask_path = root / record.image_path, root / record.mask_path
        for path in (image_path, mask_path):
            if not path.exists():
                raise MissingArtifact(f"missing corpus file {path}")
        return ImageMaskPair.load(record.id, image_path, mask_path, record.size_class)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "scale": self.scale,
            "counts": self.counts,
            "pairs": [record.to_json() for record in self.pairs],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise MissingArtifact(f"manifest not found: {path}")
        try:
            obj = json.loads(path.read_text())
            pairs = tuple(PairRecord.from_json(p) for p in obj["pairs"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"malformed manifest {path}: {exc}") from exc
        return cls(int(obj["seed"]), pairs, float(obj.get("scale", 1.0)), root=path.parent)


# ------------------------------------------------------------------ corpus


def scaled_counts(scale: float) -> dict[SizeClass, int]:
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    return {cls: int(math.floor(n * scale + 0.5)) for cls, n in REFERENCE_COUNTS.items()}


def _stream(seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(key.encode())])


@dataclass(frozen=True)
class OriginPlan:
    """One base raster and the variants derived from it."""

    origin: str
    size_class: SizeClass
    base_index: int
    sprite_index: int | None
    top_left: tuple[int, int] | None
    transforms: tuple[str | None, ...]  # None = the un-augmented original


def origins_per_class(scale: float) -> dict[SizeClass, int]:
    """Distinct base rasters per class; augmented classes get up to 1 + len(TRANSFORMS) variants each."""
    return {
        cls: (math.ceil(n / (1 + len(TRANSFORMS))) if cls in AUGMENTED_CLASSES else n)
        for cls, n in scaled_counts(scale).items()
    }


def bases_needed(scale: float) -> int:
    return sum(origins_per_class(scale).values())


def plan_corpus(n_bases: int, n_sprites: int, seed: int, scale: float = 1.0) -> list[OriginPlan]:
    counts = scaled_counts(scale)
    n_origins = origins_per_class(scale)
    needed = sum(n_origins.values())
    if n_bases < needed:
        raise InsufficientBases(f"corpus at scale {scale} needs {needed} base images, got {n_bases}")
    if n_sprites < 1 and any(counts[c] for c in (SizeClass.SMALL, SizeClass.MEDIUM, SizeClass.LARGE)):
        raise EmptySprite("forged classes requested but no sprites supplied")

    base_order = np.random.default_rng([seed, 0xB0A5]).permutation(n_bases)
    plans: list[OriginPlan] = []
    cursor = 0
    for cls in (SizeClass.PRISTINE, SizeClass.SMALL, SizeClass.MEDIUM, SizeClass.LARGE):
        origins = []
        for k in range(n_origins[cls]):
            origin = f"{cls.value}_{k:03d}"
            rng = _stream(seed, origin)
            sprite_index = top_left = None
            if cls is not SizeClass.PRISTINE:
                size = cls.nominal_size
                sprite_index = int(rng.integers(n_sprites))
                top_left = tuple(int(v) for v in rng.integers(0, CORPUS_RESOLUTION - size + 1, size=2))
            order = [TRANSFORMS[i] for i in rng.permutation(len(TRANSFORMS))]
            origins.append((origin, int(base_order[cursor]), sprite_index, top_left, order))
            cursor += 1
        # round-robin over origins: all originals first, then one augmentation each, ...
        variants: dict[str, list[str | None]] = {o[0]: [] for o in origins}
        remaining = counts[cls]
        for round_ in range(1 + len(TRANSFORMS)):
            for origin, _, _, _, order in origins:
                if remaining == 0:
                    break
                if round_ > 0 and cls not in AUGMENTED_CLASSES:
                    continue
                variants[origin].append(None if round_ == 0 else order[round_ - 1])
                remaining -= 1
        for origin, base_index, sprite_index, top_left, _ in origins:
            plans.append(OriginPlan(origin, cls, base_index, sprite_index, top_left, tuple(variants[origin])))
    return plans


def render_origin(plan: OriginPlan, base: ImageRGB, sprite: SpriteAsset | None) -> list[ImageMaskPair]:
    if plan.size_class is SizeClass.PRISTINE:
        original = ImageMaskPair(plan.origin, base, ForgeryMask.zeros(base.height, base.width), SizeClass.PRISTINE)
    else:
        original = splice(base, sprite, plan.top_left, plan.size_class.nominal_size, id=plan.origin)
    return [original if t is None else augment(original, t) for t in plan.transforms]


def _record(plan: OriginPlan, pair: ImageMaskPair, transform: str | None) -> PairRecord:
    return PairRecord(
        id=pair.id,
        image_path=f"images/{pair.id}.png",
        mask_path=f"masks/{pair.id}.png",
        size_class=pair.size_class,
        origin=plan.origin,
        transform=transform,
    )


def _render_and_write(args) -> list[PairRecord]:
    plan, base, sprite, out_dir = args
    records = []
    for pair, transform in zip(render_origin(plan, base, sprite), plan.transforms):
        record = _record(plan, pair, transform)
        pair.save(out_dir / record.image_path, out_dir / record.mask_path)
        records.append(record)
    return records


def synthesize_pairs(
    bases: Sequence[ImageRGB], sprites: Sequence[SpriteAsset], seed: int, scale: float = 1.0
) -> Iterable[ImageMaskPair]:
    """In-memory variant of synthesize_corpus, yielding pairs in manifest order."""
    for plan in plan_corpus(len(bases), len(sprites), seed, scale):
        sprite = sprites[plan.sprite_index] if plan.sprite_index is not None else None
        yield from render_origin(plan, bases[plan.base_index], sprite)


def synthesize_corpus(
    bases: Sequence[ImageRGB],
    sprites: Sequence[SpriteAsset],
    seed: int,
    out_dir: str | Path,
    scale: float = 1.0,
    workers: int = 1,
) -> DatasetManifest:
    """Render the corpus into ``out_dir/{images,masks}`` and return its manifest (unsplit)."""
    out_dir = Path(out_dir)
    plans = plan_corpus(len(bases), len(sprites), seed, scale)
    for sub in ("images", "masks"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    jobs = [
        (plan, bases[plan.base_index], sprites[plan.sprite_index] if plan.sprite_index is not None else None, out_dir)
        for plan in plans
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_render_and_write, jobs))
    else:
        chunks = [_render_and_write(job) for job in jobs]
    records = tuple(record for chunk in chunks for record in chunk)
    return DatasetManifest(seed, records, scale, root=out_dir)


# ------------------------------------------------------------------ splits


def apportion(total: int, weights: Sequence[int]) -> list[int]:
    """Largest-remainder apportionment of ``total`` by ``weights``; ties go to the earlier slot."""
    weight_sum = sum(weights)
    if weight_sum == 0:
        return [0] * len(weights)
    exact = [total * w / weight_sum for w in weights]
    shares = [math.floor(q) for q in exact]
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - shares[i]), i))
    for i in order[: total - sum(shares)]:
        shares[i] += 1
    return shares


def build_splits(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Assign every pair to train/validation/test.

    Small and pristine pairs fill train/validation, medium and large go to
    test alongside a pristine share. Within a class, augmentation groups are
    shuffled as units and then cut at the quota boundaries, so variants of one
    base stay together except at a cut.
    """
    by_class: dict[SizeClass, list[PairRecord]] = {c: [] for c in REFERENCE_COUNTS}
    for record in manifest.pairs:
        by_class[record.size_class].append(record)

    assignment: dict[str, str] = {}
    for cls, records in by_class.items():
        targets = [s for s in SPLITS if cls in REFERENCE_SPLITS[s]]
        shares = apportion(len(records), [REFERENCE_SPLITS[s][cls] for s in targets])
        for split_name, share in zip(targets, shares):
            if share == 0:
                raise QuotaUnsatisfiable(
                    f"{len(records)} {cls.value} pairs cannot give the {split_name} split its {cls.value} share"
                )
        groups: dict[str, list[PairRecord]] = {}
        for record in sorted(records, key=lambda r: r.id):
            groups.setdefault(record.origin or record.id, []).append(record)
        keys = sorted(groups)
        rng = np.random.default_rng([seed, zlib.crc32(cls.value.encode())])
        ordered = [r for i in rng.permutation(len(keys)) for r in groups[keys[i]]]
        start = 0
        for split_name, share in zip(targets, shares):
            for record in ordered[start : start + share]:
                assignment[record.id] = split_name
            start += share

    pairs = tuple(dataclasses.replace(r, split=assignment[r.id]) for r in manifest.pairs)
    return dataclasses.replace(manifest, pairs=pairs)


def default_workers() -> int:
    return os.cpu_count() or 1
