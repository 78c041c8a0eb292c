"""Desk-scale synthetic datasets for training and corruption experiments."""

from __future__ import annotations

import numpy as np

from .nn import LabeledDataset


def _ids(n: int, prefix: str = "s") -> tuple[str, ...]:
    width = max(5, len(str(n - 1)))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(n))


def gaussian_blobs(
    n_per_class: int,
    centers,
    spread: float = 0.5,
    seed: int = 0,
    id_prefix: str = "s",
) -> LabeledDataset:
    """Isotropic Gaussian clusters, one per center."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    k, dim = centers.shape
    inputs = np.concatenate(
        [rng.normal(c, spread, size=(n_per_class, dim)) for c in centers]
    )
    labels = np.repeat(np.arange(k), n_per_class)
    order = rng.permutation(k * n_per_class)
    return LabeledDataset(
        inputs=inputs[order].astype(np.float32),
        labels=labels[order],
        sample_ids=_ids(k * n_per_class, id_prefix),
        class_count=k,
    )


def two_blobs(n_per_class: int, seed: int = 0, spread: float = 0.5) -> LabeledDataset:
    """Two separable 2-D clusters placed symmetrically about the origin."""
    return gaussian_blobs(n_per_class, centers=[(2.0, 2.0), (-2.0, -2.0)], spread=spread, seed=seed)


def _base_pattern(label: int, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    rows, cols = np.mgrid[0:h, 0:w]
    hi, lo = 0.8, 0.2
    if label == 0:  # horizontal stripes
        return np.where(rows % 2 == 0, hi, lo)
    if label == 1:  # vertical stripes
        return np.where(cols % 2 == 0, hi, lo)
    if label == 2:  # checkerboard
        return np.where((rows + cols) % 2 == 0, hi, lo)
    if label == 3:  # bright center block
        img = np.full(shape, lo)
        img[h // 4 : h - h // 4, w // 4 : w - w // 4] = hi
        return img
    raise ValueError("pattern_images supports at most 4 classes")


def pattern_images(
    n: int,
    shape: tuple[int, int] = (8, 8),
    class_count: int = 4,
    noise_low: float = 0.05,
    noise_high: float = 0.45,
    seed: int = 0,
    id_prefix: str = "s",
) -> LabeledDataset:
    """Noisy grayscale pattern images with per-sample difficulty.

    Each sample is one of `class_count` fixed patterns plus Gaussian pixel
    noise whose scale is drawn per sample from [noise_low, noise_high], so
    the dataset spans easy (clean) through hard (barely recognizable)
    examples of every class.
    """
    if not (2 <= class_count <= 4):
        raise ValueError("class_count must be between 2 and 4")
    rng = np.random.default_rng(seed)
    h, w = shape
    labels = rng.integers(0, class_count, size=n)
    scales = rng.uniform(noise_low, noise_high, size=n)
    inputs = np.empty((n, h * w), dtype=np.float32)
    for i in range(n):
        img = _base_pattern(int(labels[i]), shape) + scales[i] * rng.normal(size=shape)
        inputs[i] = np.clip(img, 0.0, 1.0).ravel()
    return LabeledDataset(
        inputs=inputs,
        labels=labels,
        sample_ids=_ids(n, id_prefix),
        class_count=class_count,
        image_shape=shape,
    )


def split(data: LabeledDataset, test_fraction: float, seed: int = 0):
    """Deterministic (train, test) split."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(data.n)
    n_test = max(1, int(round(test_fraction * data.n)))
    return data.take(order[n_test:]), data.take(order[:n_test])
