"""Binary container formats for checkpoints, snapshots, and datasets.

All three artifacts share one container layout:

    bytes 0..7    magic (b"PSCHKPT1", b"PSSNAP01", or b"PSDATA01")
    bytes 8..11   uint32 little-endian manifest length L
    bytes 12..    manifest, UTF-8 JSON (L bytes)
    then          payload: concatenated raw arrays

The manifest lists every array as {offset, byte_len, dtype} relative to the
payload start, plus a sha256 of the whole payload.  Checkpoints store, per
layer in order: weights (little-endian float32, row-major), bias
(float32, when present), mask (one byte per weight, 0 or 1).  Snapshots
store the angle column class-major (shape C x N: all samples' angle to
class 0, then class 1, ...), then length, margin, true labels, predicted
labels (int32), and degenerate flags (bytes).  Round-trips are exact: the
stored float32 bit patterns are reproduced.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .geometry import GeometrySample, GeometrySnapshot
from .nn import Layer, LabeledDataset, Network, NetworkSpec

CHECKPOINT_MAGIC = b"PSCHKPT1"
SNAPSHOT_MAGIC = b"PSSNAP01"
DATASET_MAGIC = b"PSDATA01"


class ContainerError(ValueError):
    """Malformed container file."""


class HashMismatch(ContainerError):
    """Stored payload does not match its recorded hash."""


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while chunk := f.read(1 << 20):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, compact separators, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


class _PayloadWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def add(self, arr: np.ndarray, dtype: str) -> dict:
        raw = np.ascontiguousarray(arr).astype(dtype, copy=False).tobytes()
        ref = {"offset": self.offset, "byte_len": len(raw), "dtype": dtype}
        self.chunks.append(raw)
        self.offset += len(raw)
        return ref

    def payload(self) -> bytes:
        return b"".join(self.chunks)


def _write_container(path, magic: bytes, manifest: dict, payload: bytes) -> None:
    manifest = dict(manifest)
    manifest["payload_sha256"] = sha256_bytes(payload)
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(payload)
    os.replace(tmp, path)


def _read_container(path, magic: bytes) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:8] != magic:
        raise ContainerError(f"{path}: bad magic (expected {magic!r})")
    (length,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + length:
        raise ContainerError(f"{path}: truncated manifest ({len(raw)} bytes)")
    manifest = json.loads(raw[12 : 12 + length].decode("utf-8"))
    payload = raw[12 + length :]
    recorded = manifest.get("payload_sha256")
    if recorded != sha256_bytes(payload):
        raise HashMismatch(f"{path}: payload hash mismatch")
    return manifest, payload


def _read_blob(payload: bytes, ref: dict, shape) -> np.ndarray:
    start, length = ref["offset"], ref["byte_len"]
    if start + length > len(payload):
        raise ContainerError(
            f"blob spans bytes [{start}, {start + length}) but payload has {len(payload)}"
        )
    arr = np.frombuffer(payload[start : start + length], dtype=ref["dtype"])
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise ContainerError(f"blob holds {arr.size} items, shape {shape} needs {expected}")
    return arr.reshape(shape)


# --- checkpoints ---------------------------------------------------------


def save_checkpoint(net: Network, path) -> None:
    writer = _PayloadWriter()
    layers = []
    mask_zeros = []
    for layer in net.layers:
        entry = {
            "shape": list(layer.weights.shape),
            "weights": writer.add(layer.weights, "<f4"),
            "bias": writer.add(layer.bias, "<f4") if layer.bias is not None else None,
            "mask": writer.add(layer.mask.astype(np.uint8), "u1"),
        }
        layers.append(entry)
        mask_zeros.append(int(np.sum(layer.mask == 0.0)))
    manifest = {
        "kind": "checkpoint",
        "version": 1,
        "spec": net.spec.to_json(),
        "layers": layers,
        "mask_summary": {
            "zeros_per_layer": mask_zeros,
            "total_weights": int(sum(l.weights.size for l in net.layers)),
            "total_zeros": int(sum(mask_zeros)),
        },
    }
    _write_container(path, CHECKPOINT_MAGIC, manifest, writer.payload())


def load_checkpoint(path) -> Network:
    manifest, payload = _read_container(path, CHECKPOINT_MAGIC)
    if manifest.get("kind") != "checkpoint":
        raise ContainerError(f"{path}: not a checkpoint")
    spec = NetworkSpec.from_json(manifest["spec"])
    layers = []
    for entry in manifest["layers"]:
        shape = tuple(entry["shape"])
        weights = _read_blob(payload, entry["weights"], shape)
        bias = None
        if entry["bias"] is not None:
            bias = _read_blob(payload, entry["bias"], (shape[0],))
        mask = _read_blob(payload, entry["mask"], shape).astype(np.float32)
        layers.append(Layer(weights=weights, bias=bias, mask=mask))
    return Network(spec=spec, layers=tuple(layers))


# --- geometry snapshots --------------------------------------------------


def save_snapshot(snap: GeometrySnapshot, path) -> None:
    writer = _PayloadWriter()
    n, c = snap.n, snap.class_count
    columns = {
        "angles": writer.add(snap.angles_matrix().T, "<f4"),  # class-major (C, N)
        "length": writer.add(snap.lengths(), "<f4"),
        "margin": writer.add(snap.margins(), "<f4"),
        "true_labels": writer.add(snap.true_labels(), "<i4"),
        "predicted_labels": writer.add(snap.predicted_labels(), "<i4"),
        "degenerate": writer.add(snap.degenerate_flags().astype(np.uint8), "u1"),
    }
    manifest = {
        "kind": "geometry-snapshot",
        "version": 1,
        "combination_id": snap.combination_id,
        "dataset_id": snap.dataset_id,
        "class_count": c,
        "created_at": snap.created_at,
        "n": n,
        "sample_ids": list(snap.sample_ids()),
        "columns": columns,
    }
    _write_container(path, SNAPSHOT_MAGIC, manifest, writer.payload())


def load_snapshot(path) -> GeometrySnapshot:
    manifest, payload = _read_container(path, SNAPSHOT_MAGIC)
    if manifest.get("kind") != "geometry-snapshot":
        raise ContainerError(f"{path}: not a geometry snapshot")
    n = manifest["n"]
    c = manifest["class_count"]
    cols = manifest["columns"]
    angles = _read_blob(payload, cols["angles"], (c, n)).astype(np.float64).T
    length = _read_blob(payload, cols["length"], (n,)).astype(np.float64)
    margin = _read_blob(payload, cols["margin"], (n,)).astype(np.float64)
    true_labels = _read_blob(payload, cols["true_labels"], (n,))
    predicted = _read_blob(payload, cols["predicted_labels"], (n,))
    degenerate = _read_blob(payload, cols["degenerate"], (n,))
    samples = []
    for i, sid in enumerate(manifest["sample_ids"]):
        row = np.array(angles[i])
        row.flags.writeable = False
        samples.append(
            GeometrySample(
                sample_id=sid,
                true_label=int(true_labels[i]),
                predicted_label=int(predicted[i]),
                angles=row,
                length=float(length[i]),
                margin=float(margin[i]),
                correct=bool(true_labels[i] == predicted[i]),
                degenerate=bool(degenerate[i]),
            )
        )
    return GeometrySnapshot(
        combination_id=manifest["combination_id"],
        dataset_id=manifest["dataset_id"],
        samples=tuple(samples),
        class_count=c,
        created_at=manifest["created_at"],
    )


# --- labeled datasets ----------------------------------------------------


def save_dataset(data: LabeledDataset, path) -> None:
    writer = _PayloadWriter()
    columns = {
        "inputs": writer.add(data.inputs, "<f4"),
        "labels": writer.add(data.labels, "<i4"),
    }
    manifest = {
        "kind": "dataset",
        "version": 1,
        "n": data.n,
        "input_dim": data.input_dim,
        "class_count": data.class_count,
        "image_shape": list(data.image_shape) if data.image_shape else None,
        "sample_ids": list(data.sample_ids),
        "columns": columns,
    }
    _write_container(path, DATASET_MAGIC, manifest, writer.payload())


def load_dataset(path) -> LabeledDataset:
    manifest, payload = _read_container(path, DATASET_MAGIC)
    if manifest.get("kind") != "dataset":
        raise ContainerError(f"{path}: not a dataset")
    n = manifest["n"]
    dim = manifest["input_dim"]
    inputs = _read_blob(payload, manifest["columns"]["inputs"], (n, dim))
    labels = _read_blob(payload, manifest["columns"]["labels"], (n,)).astype(np.int64)
    shape = manifest.get("image_shape")
    return LabeledDataset(
        inputs=inputs,
        labels=labels,
        sample_ids=tuple(manifest["sample_ids"]),
        class_count=int(manifest["class_count"]),
        image_shape=tuple(shape) if shape else None,
    )
