"""CIFAR-10 binary ingestion, preprocessing, taxonomy and batching.

The dataset is the published binary layout: six files of 10000 records,
each record 3073 bytes (1 label byte, then 1024 R + 1024 G + 1024 B bytes
for a 32x32 image).  Images are reduced to BT.601 luma on load and
standardized later with global scalar statistics computed on the base
training split.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DatasetError, UnknownCategoryError
from .ndcore import FLOAT, RngStream

RECORD_BYTES = 3073
RECORDS_PER_FILE = 10_000
FILE_BYTES = RECORD_BYTES * RECORDS_PER_FILE  # 30,730,000
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"

CIFAR10_CLASSES = (
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
)

# BT.601 luma weights.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


@dataclass(frozen=True)
class Taxonomy:
    """Class names plus the oracle grouping of classes into categories."""

    class_names: tuple[str, ...]
    category_of: tuple[str, ...]  # per class index
    categories: tuple[str, ...]  # ordered by first appearance

    def __post_init__(self):
        if len(self.class_names) != len(self.category_of):
            raise ValueError("category_of must assign every class exactly once")
        seen: list[str] = []
        for cat in self.category_of:
            if cat not in seen:
                seen.append(cat)
        if tuple(seen) != self.categories:
            raise ValueError("categories must list category names in first-appearance order")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def category_of_class(self, label: int) -> str:
        return self.category_of[label]

    def classes_in(self, category: str) -> tuple[int, ...]:
        if category not in self.categories:
            raise UnknownCategoryError(
                f"unknown category {category!r}; valid: {', '.join(self.categories)}"
            )
        return tuple(i for i, c in enumerate(self.category_of) if c == category)

    def category_index_array(self) -> np.ndarray:
        """Per-class integer category ids (for vectorized metric code)."""
        index = {c: i for i, c in enumerate(self.categories)}
        return np.array([index[c] for c in self.category_of], dtype=np.int64)

    @classmethod
    def from_category_map(cls, class_names, category_map: dict[str, str]) -> "Taxonomy":
        names = tuple(class_names)
        missing = [n for n in names if n not in category_map]
        if missing:
            raise ValueError(f"category map misses classes: {missing}")
        cat_of = tuple(category_map[n] for n in names)
        order: list[str] = []
        for c in cat_of:
            if c not in order:
                order.append(c)
        return cls(names, cat_of, tuple(order))

    def to_category_map(self) -> dict[str, str]:
        return {n: c for n, c in zip(self.class_names, self.category_of)}


def default_taxonomy() -> Taxonomy:
    """The two broad CIFAR-10 categories: vehicles and animals."""
    vehicles = {"airplane", "automobile", "ship", "truck"}
    cat_of = tuple("vehicles" if n in vehicles else "animals" for n in CIFAR10_CLASSES)
    return Taxonomy(CIFAR10_CLASSES, cat_of, ("vehicles", "animals"))


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # (1024,) float32
    label: int


@dataclass
class DataSplit:
    train: list[LabeledImage]
    val: list[LabeledImage]
    test: list[LabeledImage] = field(default_factory=list)


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise DatasetError(f"degenerate statistics: std={self.std} (must be > 0)")


def parse_cifar_batch(raw: bytes) -> list[tuple[int, bytes]]:
    """Split a CIFAR-10 binary batch into (label, rgb-bytes) records."""
    n = len(raw)
    if n == 0 or n % RECORD_BYTES != 0:
        raise DataFormatError(
            f"malformed CIFAR batch: {n} bytes is not a positive multiple of {RECORD_BYTES}"
        )
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = arr[:, 0]
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        i = int(bad[0])
        raise DataFormatError(f"corrupt record {i}: label byte {int(labels[i])} > 9")
    return [(int(labels[i]), arr[i, 1:].tobytes()) for i in range(arr.shape[0])]


def to_grayscale(r: float, g: float, b: float) -> float:
    """BT.601 luma of one pixel; result stays in [0, 255]."""
    return _LUMA_R * r + _LUMA_G * g + _LUMA_B * b


def normalize(gray: float, stats: NormStats) -> float:
    """Scale a luma value to [0,1] then standardize with global stats."""
    if not stats.std > 0:
        raise DatasetError(f"degenerate statistics: std={stats.std}")
    return (gray / 255.0 - stats.mean) / stats.std


def decode_batch(raw: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized parse + grayscale: (labels (N,), luma (N,1024) float32)."""
    n = len(raw)
    if n == 0 or n % RECORD_BYTES != 0:
        raise DataFormatError(
            f"malformed CIFAR batch: {n} bytes is not a positive multiple of {RECORD_BYTES}"
        )
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = arr[:, 0].astype(np.int64)
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        i = int(bad[0])
        raise DataFormatError(f"corrupt record {i}: label byte {int(labels[i])} > 9")
    rgb = arr[:, 1:].reshape(-1, 3, 1024).astype(np.float64)
    luma = _LUMA_R * rgb[:, 0] + _LUMA_G * rgb[:, 1] + _LUMA_B * rgb[:, 2]
    return labels, luma.astype(FLOAT)


def _images_from_arrays(labels: np.ndarray, pixels: np.ndarray) -> list[LabeledImage]:
    return [LabeledImage(pixels[i], int(labels[i])) for i in range(labels.shape[0])]


def load_cifar_dir(data_dir: str) -> tuple[list[LabeledImage], list[LabeledImage]]:
    """Load the six standard files as raw-luma images (train list, test list)."""
    train: list[LabeledImage] = []
    for name in TRAIN_FILES:
        with open(os.path.join(data_dir, name), "rb") as f:
            labels, pixels = decode_batch(f.read())
        train.extend(_images_from_arrays(labels, pixels))
    with open(os.path.join(data_dir, TEST_FILE), "rb") as f:
        labels, pixels = decode_batch(f.read())
    test = _images_from_arrays(labels, pixels)
    return train, test


def verify_data(data_dir: str) -> list[str]:
    """Presence + exact-size check; returns one problem string per bad file."""
    problems = []
    for name in TRAIN_FILES + (TEST_FILE,):
        path = os.path.join(data_dir, name)
        if not os.path.isfile(path):
            problems.append(f"{name}: missing (expected {FILE_BYTES} bytes)")
            continue
        size = os.path.getsize(path)
        if size != FILE_BYTES:
            problems.append(f"{name}: {size} bytes, expected {FILE_BYTES}")
    return problems


def split_train_val(
    images: list[LabeledImage],
    frac: float = 0.1,
    rng: RngStream | None = None,
    test: list[LabeledImage] | None = None,
) -> DataSplit:
    """Stratified validation split: per class, round(frac*count) go to val.

    Selection is uniform without replacement and deterministic given the
    stream; both output lists preserve the original image order.
    """
    if not images:
        raise DatasetError("cannot split an empty dataset")
    if not 0 < frac < 1:
        raise ValueError(f"val fraction must be in (0, 1), got {frac}")
    if rng is None:
        rng = RngStream(0).child("split")

    by_class: dict[int, list[int]] = {}
    for i, img in enumerate(images):
        by_class.setdefault(img.label, []).append(i)

    val_mask = np.zeros(len(images), dtype=bool)
    for label in sorted(by_class):
        idx = by_class[label]
        k = round(frac * len(idx))
        order = rng.permutation(len(idx))
        for j in order[:k]:
            val_mask[idx[j]] = True

    train = [img for i, img in enumerate(images) if not val_mask[i]]
    val = [img for i, img in enumerate(images) if val_mask[i]]
    return DataSplit(train=train, val=val, test=list(test) if test else [])


def filter_by_category(
    images: list[LabeledImage], category: str, taxonomy: Taxonomy
) -> list[LabeledImage]:
    """Images whose label belongs to the category, original order kept."""
    wanted = set(taxonomy.classes_in(category))
    return [img for img in images if img.label in wanted]


def minibatches(images: list[LabeledImage], batch_size: int = 32, rng: RngStream | None = None):
    """One epoch of uniformly shuffled batches; the final short batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if rng is None:
        order = np.arange(len(images))
    else:
        order = rng.permutation(len(images))
    for start in range(0, len(images), batch_size):
        yield [images[i] for i in order[start : start + batch_size]]


def batch_arrays(batch: list[LabeledImage]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a batch into (X (B,1024) float32, y (B,) int64)."""
    x = np.stack([img.pixels for img in batch]).astype(FLOAT, copy=False)
    y = np.array([img.label for img in batch], dtype=np.int64)
    return x, y


def compute_norm_stats(images: list[LabeledImage]) -> NormStats:
    """Global scalar mean/std of luma/255 over every pixel (population std)."""
    if not images:
        raise DatasetError("cannot compute statistics of an empty dataset")
    total = 0.0
    total_sq = 0.0
    count = 0
    for img in images:
        scaled = img.pixels.astype(np.float64) / 255.0
        total += float(scaled.sum())
        total_sq += float((scaled * scaled).sum())
        count += scaled.size
    mean = total / count
    var = total_sq / count - mean * mean
    if var <= 0:
        raise DatasetError("degenerate statistics: zero pixel variance")
    return NormStats(mean=mean, std=float(np.sqrt(var)))


def normalize_images(images: list[LabeledImage], stats: NormStats) -> list[LabeledImage]:
    """Apply `normalize` to every pixel; returns new images, inputs untouched."""
    if not stats.std > 0:
        raise DatasetError(f"degenerate statistics: std={stats.std}")
    out = []
    for img in images:
        pixels = ((img.pixels.astype(np.float64) / 255.0 - stats.mean) / stats.std).astype(FLOAT)
        out.append(LabeledImage(pixels, img.label))
    return out
