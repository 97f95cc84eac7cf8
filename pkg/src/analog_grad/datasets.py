"""Dataset generation and ingestion.

Three sources: a deterministic synthetic 10-class shape/texture set (the
desk-scale stand-in for natural-image benchmarks), CSV files with one row
per sample (label first, then pixel values), and the big-endian idx binary
image/label format.  All pixel data is presented to models in [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .ioutil import fmt_float, write_csv
from .quant import RngStream

LUMINANCE_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class Dataset:
    """Train/test split with integer labels; x is (n, c, h, w) or (n, d)."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    classes: int

    @property
    def n_train(self) -> int:
        return len(self.train_y)

    @property
    def n_test(self) -> int:
        return len(self.test_y)

    def flattened(self) -> "Dataset":
        return Dataset(self.train_x.reshape(self.n_train, -1),
                       self.train_y,
                       self.test_x.reshape(self.n_test, -1),
                       self.test_y, self.classes)


# ---------------------------------------------------------------------------
# synthetic shapes


def _coords(size: int):
    r = np.arange(size)
    return np.meshgrid(r, r, indexing="ij")


def _shape_mask(cls: int, size: int, gen: np.random.Generator) -> np.ndarray:
    """Foreground mask for one sample of class `cls`, with jitter."""
    yy, xx = _coords(size)
    cy = size / 2 + gen.uniform(-2, 2)
    cx = size / 2 + gen.uniform(-2, 2)
    radius = size * gen.uniform(0.22, 0.34)
    dist = np.hypot(yy - cy, xx - cx)
    cheby = np.maximum(np.abs(yy - cy), np.abs(xx - cx))
    period = gen.integers(3, 5)
    phase = gen.integers(0, period)
    thick = max(1.5, size / 10)

    if cls == 0:    # filled disk
        return dist <= radius
    if cls == 1:    # ring
        return (dist <= radius) & (dist >= radius - thick)
    if cls == 2:    # filled square
        return cheby <= radius
    if cls == 3:    # square frame
        return (cheby <= radius) & (cheby >= radius - thick)
    if cls == 4:    # horizontal stripes
        return ((yy + phase) % period) < period / 2
    if cls == 5:    # vertical stripes
        return ((xx + phase) % period) < period / 2
    if cls == 6:    # diagonal cross
        return (np.abs((yy - cy) - (xx - cx)) < thick) | (np.abs((yy - cy) + (xx - cx)) < thick)
    if cls == 7:    # plus sign
        return (np.abs(yy - cy) < thick) | (np.abs(xx - cx) < thick)
    if cls == 8:    # checkerboard
        block = max(2, period)
        return ((yy // block + xx // block + phase) % 2) == 0
    if cls == 9:    # filled triangle (apex up)
        height = 2 * radius
        rel_y = yy - (cy - radius)
        half_width = np.clip(rel_y, 0, height) * 0.5
        return (rel_y >= 0) & (rel_y <= height) & (np.abs(xx - cx) <= half_width)
    raise ConfigError(f"no shape generator for class {cls}")


def generate_synthetic(classes: int = 10, samples_per_class: int = 600,
                       image_size: int = 16, seed: int = 0,
                       contrast: tuple = (0.24, 0.44),
                       pixel_noise: float = 0.2,
                       clutter: int = 6) -> Dataset:
    """Deterministic labeled shape images, split train/test 5:1 per class.

    Each sample is a faint class shape plus `clutter` random rectangles at
    the same contrast scale plus pixel noise.  The defaults are tuned so a
    clean-pixel linear probe clears chance comfortably while the class
    signal is carried by shape geometry rather than a few loud pixels:
    distinguishing target from clutter requires learned features, which is
    exactly what corrupted gradients struggle to build.
    """
    if classes < 2 or classes > 10:
        raise ConfigError(f"classes must be in [2, 10], got {classes}")
    if samples_per_class < 6:
        raise ConfigError(
            f"samples_per_class must be >= 6 for a 5:1 split, got {samples_per_class}")
    if clutter < 0:
        raise ConfigError(f"clutter must be >= 0, got {clutter}")
    root = RngStream(seed)
    train_x, train_y, test_x, test_y = [], [], [], []
    n_test = samples_per_class // 6
    for cls in range(classes):
        gen = root.child(cls).generator()
        for sample in range(samples_per_class):
            mask = _shape_mask(cls, image_size, gen)
            level = gen.uniform(*contrast)
            img = np.where(mask, level, 0.0)
            for _ in range(clutter):
                ch, cw = gen.integers(2, 5), gen.integers(2, 5)
                cy = gen.integers(0, image_size - ch)
                cx = gen.integers(0, image_size - cw)
                img[cy:cy + ch, cx:cx + cw] += gen.uniform(*contrast) * gen.choice([-1.0, 1.0])
            img = img + gen.normal(0.0, pixel_noise, size=img.shape)
            img = np.clip(img, -1.0, 1.0)[None, :, :]  # one channel
            if sample < n_test:
                test_x.append(img), test_y.append(cls)
            else:
                train_x.append(img), train_y.append(cls)
    return Dataset(np.array(train_x), np.array(train_y, dtype=np.int64),
                   np.array(test_x), np.array(test_y, dtype=np.int64), classes)


# ---------------------------------------------------------------------------
# CSV format: one row per sample, label first


def write_csv_split(x: np.ndarray, y: np.ndarray, path) -> Path:
    flat = x.reshape(len(x), -1)
    header = ["label"] + [f"p{k}" for k in range(flat.shape[1])]
    rows = [[str(int(label))] + [fmt_float(v) for v in pixels]
            for label, pixels in zip(y, flat)]
    return write_csv(path, header, rows)


def write_csv_dataset(ds: Dataset, train_path, test_path) -> tuple[Path, Path]:
    return (write_csv_split(ds.train_x, ds.train_y, train_path),
            write_csv_split(ds.test_x, ds.test_y, test_path))


def _read_csv_split(path, image_shape=None):
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[1] < 2:
        raise ConfigError(f"{path}: rows need a label plus at least one feature")
    y = raw[:, 0].astype(np.int64)
    x = raw[:, 1:]
    if image_shape is not None:
        expected = int(np.prod(image_shape))
        if x.shape[1] != expected:
            raise ConfigError(
                f"{path}: {x.shape[1]} features per row, image shape {image_shape} needs {expected}")
        x = x.reshape(len(x), *image_shape)
    return x, y


def read_csv_dataset(train_path, test_path, image_shape=None,
                     classes: int | None = None) -> Dataset:
    train_x, train_y = _read_csv_split(train_path, image_shape)
    test_x, test_y = _read_csv_split(test_path, image_shape)
    n_classes = classes or int(max(train_y.max(), test_y.max())) + 1
    return Dataset(train_x, train_y, test_x, test_y, n_classes)


# ---------------------------------------------------------------------------
# idx binary format (big-endian magic + dims, uint8 payload)


def read_idx_images(path) -> np.ndarray:
    """Images from an idx3-ubyte file, scaled to [-1, 1], shape (n, 1, h, w)."""
    data = Path(path).read_bytes()
    magic, n, h, w = struct.unpack(">IIII", data[:16])
    if magic != 0x00000803:
        raise ConfigError(f"{path}: bad idx image magic 0x{magic:08x}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    if pixels.size != n * h * w:
        raise ConfigError(f"{path}: truncated idx image payload")
    imgs = pixels.reshape(n, 1, h, w).astype(np.float64)
    return imgs / 127.5 - 1.0


def read_idx_labels(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, n = struct.unpack(">II", data[:8])
    if magic != 0x00000801:
        raise ConfigError(f"{path}: bad idx label magic 0x{magic:08x}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if labels.size != n:
        raise ConfigError(f"{path}: truncated idx label payload")
    return labels.astype(np.int64)


def read_idx_dataset(train_images, train_labels, test_images, test_labels,
                     classes: int | None = None) -> Dataset:
    train_x = read_idx_images(train_images)
    train_y = read_idx_labels(train_labels)
    test_x = read_idx_images(test_images)
    test_y = read_idx_labels(test_labels)
    n_classes = classes or int(max(train_y.max(), test_y.max())) + 1
    return Dataset(train_x, train_y, test_x, test_y, n_classes)


def to_grayscale(x: np.ndarray) -> np.ndarray:
    """Collapse a 3-channel image batch with the standard luminance weights."""
    if x.ndim != 4 or x.shape[1] != 3:
        raise ConfigError(f"expected (n, 3, h, w) color batch, got {x.shape}")
    weights = np.asarray(LUMINANCE_WEIGHTS).reshape(1, 3, 1, 1)
    return (x * weights).sum(axis=1, keepdims=True)


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    return np.eye(classes)[np.asarray(labels, dtype=np.int64)]
