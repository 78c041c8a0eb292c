"""Deterministic desk-scale image corruptions with 5 severity levels.

Eight corruption types over [0, 1] grayscale images.  Every (type,
severity) pair maps to one parameter in the tables below; the tables are
part of the public interface so suites are reproducible bit-for-bit.
Randomized corruptions draw from a generator seeded per (suite seed,
sample, type, severity), so a suite is a pure function of its inputs.

Archives produced by `export_archive` hold one raw little-endian float32
array file per (type, severity) plus a JSON manifest, and round-trip
exactly through `ingest_archive`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .nn import LabeledDataset, Network, predict

SEVERITIES = (1, 2, 3, 4, 5)

# One parameter per severity level; strictly monotone in severity.
SEVERITY_TABLES: dict[str, tuple[float, ...]] = {
    "gaussian_noise": (0.04, 0.08, 0.12, 0.18, 0.26),  # additive noise std
    "shot_noise": (60.0, 25.0, 12.0, 5.0, 3.0),  # photon count scale (lower = noisier)
    "impulse_noise": (0.03, 0.06, 0.09, 0.17, 0.27),  # salt/pepper pixel fraction
    "gaussian_blur": (0.4, 0.6, 0.8, 1.0, 1.5),  # blur kernel sigma (pixels)
    "brightness": (0.05, 0.10, 0.15, 0.20, 0.25),  # additive offset
    "contrast": (0.75, 0.60, 0.45, 0.30, 0.15),  # scale toward the mean (lower = flatter)
    "pixelate": (0.2, 0.4, 0.6, 0.8, 1.0),  # blend weight toward the block-mosaic image
    "occlusion": (0.2, 0.3, 0.4, 0.5, 0.6),  # occluded square edge / image edge
}

CORRUPTION_TYPES = tuple(SEVERITY_TABLES)

DEFAULT_DESK_TYPES = (
    "gaussian_noise",
    "impulse_noise",
    "gaussian_blur",
    "brightness",
    "contrast",
    "occlusion",
)


class ArchiveError(ValueError):
    """Corruption archive manifest or payload is invalid."""


@dataclass(frozen=True)
class CorruptionSpec:
    type: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.type not in SEVERITY_TABLES:
            raise ValueError(f"unknown corruption type {self.type!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity must be in {SEVERITIES}, got {self.severity}")

    @property
    def param(self) -> float:
        return SEVERITY_TABLES[self.type][self.severity - 1]


def _check_pixels(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("pixel values must lie in [0, 1]")
    return img


def corrupt(image: np.ndarray, spec: CorruptionSpec, param: float | None = None) -> np.ndarray:
    """Apply one corruption; output pixels are clamped back to [0, 1].

    `param` overrides the severity table (test hook only).
    """
    img = _check_pixels(image)
    p = spec.param if param is None else float(param)
    rng = np.random.default_rng(spec.seed)
    h, w = img.shape

    if spec.type == "gaussian_noise":
        out = img + rng.normal(0.0, p, size=img.shape) if p > 0 else img.copy()
    elif spec.type == "shot_noise":
        out = rng.poisson(img * p).astype(np.float64) / p
    elif spec.type == "impulse_noise":
        out = img.copy()
        hit = rng.random(img.shape) < p
        salt = rng.random(img.shape) < 0.5
        out[hit & salt] = 1.0
        out[hit & ~salt] = 0.0
    elif spec.type == "gaussian_blur":
        out = ndimage.gaussian_filter(img, sigma=p, mode="nearest")
    elif spec.type == "brightness":
        out = img + p
    elif spec.type == "contrast":
        mean = img.mean()
        out = (img - mean) * p + mean
    elif spec.type == "pixelate":
        # blend toward a block-averaged mosaic; per-image distortion scales
        # with p^2, so severity damage is monotone even on tiny images
        block = max(2, int(round(min(h, w) / 4)))
        mosaic = np.empty_like(img)
        for top in range(0, h, block):
            for left in range(0, w, block):
                tile = img[top : top + block, left : left + block]
                mosaic[top : top + block, left : left + block] = tile.mean()
        out = (1.0 - p) * img + p * mosaic
    elif spec.type == "occlusion":
        out = img.copy()
        side = max(1, int(round(p * min(h, w))))
        side = min(side, h, w)
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        out[top : top + side, left : left + side] = 0.0
    else:  # pragma: no cover - guarded by CorruptionSpec
        raise ValueError(f"unknown corruption type {spec.type!r}")

    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class CorruptedDataset:
    """All corrupted variants of a base dataset.

    `variants[(type, severity)]` is an (N x D) float32 array whose rows
    align index-for-index with `sample_ids` and `labels`.
    """

    base_dataset_id: str
    sample_ids: tuple[str, ...]
    labels: np.ndarray
    class_count: int
    image_shape: tuple[int, int]
    types: tuple[str, ...]
    variants: dict[tuple[str, int], np.ndarray]

    def __post_init__(self):
        n = len(self.sample_ids)
        if n == 0:
            raise ValueError("corrupted dataset must cover at least one sample")
        if len(self.types) == 0:
            raise ValueError("corrupted dataset must cover at least one corruption type")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ValueError(f"labels shape {labels.shape} != ({n},)")
        h, w = self.image_shape
        expected = {(t, s) for t in self.types for s in SEVERITIES}
        if set(self.variants) != expected:
            missing = sorted(expected - set(self.variants))
            extra = sorted(set(self.variants) - expected)
            raise ValueError(f"variant keys mismatch: missing {missing}, extra {extra}")
        frozen = {}
        for key, arr in self.variants.items():
            a = np.ascontiguousarray(np.asarray(arr, dtype=np.float32))
            if a.shape != (n, h * w):
                raise ValueError(f"variant {key} shape {a.shape} != ({n}, {h * w})")
            if a.size and (a.min() < 0.0 or a.max() > 1.0):
                raise ValueError(f"variant {key} has pixels outside [0, 1]")
            a.flags.writeable = False
            frozen[key] = a
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "variants", frozen)
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "image_shape", (int(h), int(w)))

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    @property
    def variants_per_sample(self) -> int:
        return len(self.types) * len(SEVERITIES)

    def variant_dataset(self, ctype: str, severity: int) -> LabeledDataset:
        """One (type, severity) slice as a dataset with the base ids/labels."""
        return LabeledDataset(
            inputs=self.variants[(ctype, severity)],
            labels=self.labels,
            sample_ids=self.sample_ids,
            class_count=self.class_count,
            image_shape=self.image_shape,
        )


def _infer_image_shape(data: LabeledDataset) -> tuple[int, int]:
    if data.image_shape is not None:
        return data.image_shape
    side = math.isqrt(data.input_dim)
    if side * side != data.input_dim:
        raise ValueError(
            f"input dim {data.input_dim} is not square; dataset needs an image_shape"
        )
    return (side, side)


def _variant_seed(base_seed: int, sample_index: int, type_index: int, severity: int) -> int:
    ss = np.random.SeedSequence([base_seed, sample_index, type_index, severity])
    return int(ss.generate_state(1, np.uint64)[0])


def build_suite(data: LabeledDataset, types, seed: int) -> CorruptedDataset:
    """Corrupt every sample with every (type, severity) pair.

    Produces len(types) * 5 variants per sample, deterministically in
    `seed`.
    """
    types = tuple(types)
    if not types:
        raise ValueError("need at least one corruption type")
    for t in types:
        if t not in SEVERITY_TABLES:
            raise ValueError(f"unknown corruption type {t!r}")
    h, w = _infer_image_shape(data)
    variants: dict[tuple[str, int], np.ndarray] = {}
    for t_idx, ctype in enumerate(types):
        for severity in SEVERITIES:
            rows = np.empty((data.n, h * w), dtype=np.float32)
            for i in range(data.n):
                spec = CorruptionSpec(
                    type=ctype,
                    severity=severity,
                    seed=_variant_seed(seed, i, t_idx, severity),
                )
                rows[i] = corrupt(data.inputs[i].reshape(h, w), spec).ravel()
            variants[(ctype, severity)] = rows
    return CorruptedDataset(
        base_dataset_id="",
        sample_ids=data.sample_ids,
        labels=data.labels,
        class_count=data.class_count,
        image_shape=(h, w),
        types=types,
        variants=variants,
    )


@dataclass(frozen=True)
class RobustnessRecord:
    """How many corrupted variants of one sample the model still gets right."""

    sample_id: str
    correct_count: int
    max_count: int

    def __post_init__(self):
        if not (0 <= self.correct_count <= self.max_count):
            raise ValueError(
                f"correct_count {self.correct_count} outside [0, {self.max_count}]"
            )


def per_sample_robustness(net: Network, suite: CorruptedDataset) -> list[RobustnessRecord]:
    """Count correct predictions over every corrupted variant, per sample.

    Clean accuracy is deliberately not included; only corrupted variants
    contribute.
    """
    if net.spec.class_count != suite.class_count:
        raise ValueError(
            f"network class count {net.spec.class_count} != suite class count {suite.class_count}"
        )
    counts = np.zeros(suite.n, dtype=np.int64)
    for key in sorted(suite.variants):
        preds = predict(net, suite.variants[key])
        counts += preds == suite.labels
    max_count = suite.variants_per_sample
    return [
        RobustnessRecord(sample_id=sid, correct_count=int(c), max_count=max_count)
        for sid, c in zip(suite.sample_ids, counts)
    ]


def aggregate_robustness(records: list[RobustnessRecord]) -> int:
    return sum(r.correct_count for r in records)


def export_archive(suite: CorruptedDataset, path) -> None:
    """Write manifest.json + one raw float32 file per (type, severity)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    arrays = []
    for (ctype, severity), arr in sorted(suite.variants.items()):
        fname = f"{ctype}_s{severity}.bin"
        data = arr.astype("<f4").tobytes()
        (root / fname).write_bytes(data)
        arrays.append(
            {
                "type": ctype,
                "severity": severity,
                "file": fname,
                "dtype": "<f4",
                "shape": [suite.n, suite.image_shape[0] * suite.image_shape[1]],
            }
        )
    (root / "labels.bin").write_bytes(suite.labels.astype("<i4").tobytes())
    manifest = {
        "format": "prunescope-corruption-archive",
        "version": 1,
        "base_dataset_id": suite.base_dataset_id,
        "sample_ids": list(suite.sample_ids),
        "class_count": suite.class_count,
        "image_shape": list(suite.image_shape),
        "types": list(suite.types),
        "severities": list(SEVERITIES),
        "labels": {"file": "labels.bin", "dtype": "<i4", "shape": [suite.n]},
        "arrays": arrays,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def ingest_archive(path) -> CorruptedDataset:
    """Load and validate a corruption archive directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ArchiveError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "prunescope-corruption-archive":
        raise ArchiveError(f"unrecognized archive format {manifest.get('format')!r}")

    types = tuple(manifest["types"])
    sample_ids = tuple(manifest["sample_ids"])
    n = len(sample_ids)
    h, w = manifest["image_shape"]

    listed = {(a["type"], a["severity"]): a for a in manifest["arrays"]}
    missing = [
        (t, s) for t in types for s in SEVERITIES if (t, s) not in listed
    ]
    if missing:
        raise ArchiveError(f"manifest missing arrays for (type, severity) pairs: {missing}")

    def read_blob(entry, dtype, shape):
        fpath = root / entry["file"]
        if not fpath.exists():
            raise ArchiveError(f"missing array file {fpath}")
        raw = fpath.read_bytes()
        expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if len(raw) != expected:
            raise ArchiveError(
                f"{fpath.name}: expected {expected} bytes for shape {shape}, got {len(raw)}"
            )
        return np.frombuffer(raw, dtype=dtype).reshape(shape)

    labels = read_blob(manifest["labels"], "<i4", [n]).astype(np.int64)
    variants = {}
    for (t, s), entry in listed.items():
        if (t, s) not in [(tt, ss) for tt in types for ss in SEVERITIES]:
            continue
        arr = read_blob(entry, entry["dtype"], entry["shape"])
        if arr.shape != (n, h * w):
            raise ArchiveError(
                f"{entry['file']}: shape {arr.shape} does not match ({n}, {h * w})"
            )
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ArchiveError(f"{entry['file']}: pixels outside [0, 1]")
        variants[(t, s)] = arr

    return CorruptedDataset(
        base_dataset_id=manifest.get("base_dataset_id", ""),
        sample_ids=sample_ids,
        labels=labels,
        class_count=int(manifest["class_count"]),
        image_shape=(int(h), int(w)),
        types=types,
        variants=variants,
    )
