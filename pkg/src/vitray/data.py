"""Dataset manifests, preprocessing, batching, and synthetic data.

A manifest is a small CSV describing one split:

    path,label,mask_path
    #labels=class_0,class_1,class_2
    images/train_00_0000.png,class_0,masks/train_00_0000.png
    ...

The ``#labels=`` directive pins the class-name table (and therefore the
label indices) so separate train/test manifests agree on the encoding.
Image and mask paths are resolved relative to the manifest file. The
``mask_path`` column may be empty for samples without masks.

Preprocessing offers two paths: ``full`` uses the image as is, ``masked``
multiplies pixels by the binary lung mask first (everything outside the
mask goes black). Either way the image is bilinearly resized, scaled to
[0, 1], standardized with mean 0.5 / std 0.5, and replicated across the
requested channel count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import DataError, UsageError
from .images import bilinear_resize, read_image, write_image
from .tensor import Tensor

MANIFEST_HEADER = "path,label,mask_path"
LABELS_DIRECTIVE = "#labels="


@dataclass
class SampleRef:
    image_path: Path
    label: int
    mask_path: Optional[Path] = None


@dataclass
class ImageSample:
    """In-memory pixels plus an optional binary mask of equal extents."""

    pixels: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2:
            raise DataError(f"sample pixels must be 2-D, got shape {self.pixels.shape}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask)
            if self.mask.shape != self.pixels.shape:
                raise DataError(
                    f"mask extents {self.mask.shape} differ from image {self.pixels.shape}"
                )
            if not np.isin(self.mask, (0, 1)).all():
                raise DataError("mask values must be 0 or 1")


@dataclass
class DatasetManifest:
    samples: list[SampleRef]
    label_names: list[str]
    split: str = "train"
    root: Path = field(default_factory=Path)

    @property
    def num_classes(self) -> int:
        return len(self.label_names)

    def __len__(self) -> int:
        return len(self.samples)

    def class_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in self.label_names}
        for s in self.samples:
            counts[self.label_names[s.label]] += 1
        return counts

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def has_masks(self) -> bool:
        return all(s.mask_path is not None for s in self.samples)


def load_manifest(path, split: Optional[str] = None) -> DatasetManifest:
    """Parse and validate a manifest CSV; errors carry the line number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise DataError(f"{path}:1: expected header '{MANIFEST_HEADER}'")
    if len(lines) < 2 or not lines[1].startswith(LABELS_DIRECTIVE):
        raise DataError(f"{path}:2: expected label table '{LABELS_DIRECTIVE}a,b,...'")
    label_names = [n.strip() for n in lines[1][len(LABELS_DIRECTIVE):].split(",") if n.strip()]
    if not label_names:
        raise DataError(f"{path}:2: label table is empty")
    if len(set(label_names)) != len(label_names):
        raise DataError(f"{path}:2: duplicate label names")
    index = {name: i for i, name in enumerate(label_names)}

    root = path.parent
    samples: list[SampleRef] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 comma-separated fields, got {len(parts)}")
        rel, label_name, mask_rel = (p.strip() for p in parts)
        if label_name not in index:
            raise DataError(f"{path}:{lineno}: unknown label name {label_name!r}")
        if rel in seen:
            raise DataError(f"{path}:{lineno}: duplicate image path {rel!r}")
        seen.add(rel)
        image_path = root / rel
        if not image_path.exists():
            raise DataError(f"{path}:{lineno}: image file missing: {image_path}")
        mask_path = None
        if mask_rel:
            mask_path = root / mask_rel
            if not mask_path.exists():
                raise DataError(f"{path}:{lineno}: mask file missing: {mask_path}")
        samples.append(SampleRef(image_path, index[label_name], mask_path))
    if not samples:
        raise DataError(f"{path}: manifest has no samples")
    return DatasetManifest(samples, label_names, split=split or path.stem, root=root)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    lines = [MANIFEST_HEADER, LABELS_DIRECTIVE + ",".join(manifest.label_names)]
    for s in manifest.samples:
        rel_image = s.image_path.relative_to(path.parent)
        rel_mask = s.mask_path.relative_to(path.parent) if s.mask_path else ""
        lines.append(f"{rel_image},{manifest.label_names[s.label]},{rel_mask}")
    path.write_text("\n".join(lines) + "\n")


def load_sample(ref: SampleRef) -> ImageSample:
    pixels = read_image(ref.image_path)
    mask = None
    if ref.mask_path is not None:
        mask = (read_image(ref.mask_path) >= 128).astype(np.uint8)  # 0/255 files -> 0/1
    return ImageSample(pixels, mask)


def preprocess(sample: ImageSample, target_size: int, mode: str = "full",
               in_channels: int = 1) -> np.ndarray:
    """ImageSample -> standardized [in_channels, S, S] float64 array."""
    if mode not in ("full", "masked"):
        raise UsageError(f"unknown pipeline mode {mode!r}")
    pixels = sample.pixels.astype(np.float64)
    if sample.pixels.dtype == np.uint8:
        pixels = pixels / 255.0
    if mode == "masked":
        if sample.mask is None:
            raise DataError("masked preprocessing requires a mask")
        if not sample.mask.any():
            warnings.warn("all-zero mask: sample reduces to a blank image", stacklevel=2)
        pixels = pixels * sample.mask
    resized = bilinear_resize(pixels, target_size, target_size)
    standardized = (resized - 0.5) / 0.5
    return np.broadcast_to(standardized, (in_channels, target_size, target_size)).copy()


def epoch_order(n: int, rng: Optional[np.random.Generator], shuffle: bool) -> np.ndarray:
    """Sample visit order for one epoch; identity when not shuffling."""
    if shuffle:
        if rng is None:
            raise UsageError("shuffling requires an rng")
        return rng.permutation(n)
    return np.arange(n)


def iter_index_batches(order: np.ndarray, batch_size: int) -> Iterator[np.ndarray]:
    """Chunk an ordering into batches; the final partial batch is kept."""
    if batch_size < 1:
        raise UsageError(f"batch_size must be at least 1, got {batch_size}")
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def batch_iter(manifest: DatasetManifest, batch_size: int,
               rng: Optional[np.random.Generator] = None, shuffle: bool = True,
               image_size: int = 224, mode: str = "full", in_channels: int = 1):
    """Yield (images Tensor [B, C, S, S], labels int array) covering every
    sample exactly once; order is a pure function of the rng state."""
    if len(manifest) == 0:
        raise UsageError("batch_iter: empty manifest")
    order = epoch_order(len(manifest), rng, shuffle)
    labels = manifest.labels()
    for batch in iter_index_batches(order, batch_size):
        images = np.stack([
            preprocess(load_sample(manifest.samples[i]), image_size, mode, in_channels)
            for i in batch
        ])
        yield Tensor(images), labels[batch]


# ---- synthetic dataset ----


def _class_pattern(k: int, num_classes: int, size: int) -> np.ndarray:
    """Deterministic class template: an oriented grating plus one blob.

    Orientation, frequency, and blob position all rotate with the class
    index, so raw-pixel class centroids are far apart and the set stays
    learnable by simple classifiers.
    """
    yy, xx = np.mgrid[0:size, 0:size] / size
    theta = math.pi * k / num_classes
    freq = 2.0 + 1.5 * k
    grating = np.sin(2.0 * math.pi * freq * (xx * math.cos(theta) + yy * math.sin(theta)))
    angle = 2.0 * math.pi * k / num_classes
    cy, cx = 0.5 + 0.22 * math.sin(angle), 0.5 + 0.22 * math.cos(angle)
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 0.14**2))
    return 0.45 + 0.18 * grating + 0.33 * blob


def _lung_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    """Two vertical ellipses with a little per-sample jitter, 0/1 uint8."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    mask = np.zeros((size, size), dtype=np.uint8)
    for cx in (0.33, 0.67):
        jx, jy = rng.uniform(-0.02, 0.02, 2)
        ellipse = ((xx - cx - jx) / 0.15) ** 2 + ((yy - 0.52 - jy) / 0.30) ** 2 <= 1.0
        mask |= ellipse.astype(np.uint8)
    return mask


def generate_synthetic(num_classes: int, per_class: int, image_size: int, seed: int,
                       out_dir, split: str = "train", fmt: str = "png",
                       noise: float = 0.06) -> DatasetManifest:
    """Write a balanced, seeded synthetic grayscale dataset with lung masks.

    Produces ``images/`` and ``masks/`` files plus ``<split>.csv`` under
    ``out_dir``. The same arguments always produce byte-identical files.
    """
    if num_classes < 1 or per_class < 1 or image_size < 2:
        raise UsageError("generate_synthetic: counts must be >= 1 and image_size >= 2")
    if fmt not in ("png", "pgm"):
        raise UsageError(f"unknown image format {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "images").mkdir(exist_ok=True)
    (out_dir / "masks").mkdir(exist_ok=True)

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, _split_tag(split)])))
    label_names = [f"class_{k}" for k in range(num_classes)]
    samples: list[SampleRef] = []
    for k in range(num_classes):
        pattern = _class_pattern(k, num_classes, image_size)
        for i in range(per_class):
            noisy = pattern + rng.normal(0.0, noise, pattern.shape)
            pixels = np.clip(np.round(noisy * 255.0), 0, 255).astype(np.uint8)
            mask = (_lung_mask(image_size, rng) * 255).astype(np.uint8)
            stem = f"{split}_{k:02d}_{i:04d}.{fmt}"
            image_path = out_dir / "images" / stem
            mask_path = out_dir / "masks" / stem
            write_image(image_path, pixels)
            write_image(mask_path, mask)
            samples.append(SampleRef(image_path, k, mask_path))
    manifest = DatasetManifest(samples, label_names, split=split, root=out_dir)
    write_manifest(manifest, out_dir / f"{split}.csv")
    return manifest


def _split_tag(split: str) -> int:
    # stable small integer per split name so train/test draw distinct streams
    return sum(ord(ch) * (31**i) for i, ch in enumerate(split)) % (2**31)
