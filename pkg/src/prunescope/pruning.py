"""Prune-mask production and application.

Four schemes: random, smallest-magnitude, first-order loss-impact scores
(|gradient x weight|), and score-optimized binarized subnetworks found
inside a random init without ever training the weights.

By default the classifier layer is never prunable, so the class weight rows
(the geometry axes) stay identical across all pruned variants of a model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import (
    STORAGE_DTYPE,
    LabeledDataset,
    Layer,
    Network,
    NetworkSpec,
    TrainingDiverged,
    _raw_gradients,
    backward,
    init_network,
)


def default_prunable_layers(n_layers: int) -> frozenset[int]:
    """All layers except the final classifier."""
    return frozenset(range(n_layers - 1))


def _masked_count(rate: float, n: int) -> int:
    # tiny nudge so rates like 0.3 * 1000 floor to the intended 300
    return int(math.floor(rate * n + 1e-9))


def _check_rate(rate: float) -> None:
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"prune rate must be in [0, 1), got {rate}")


@dataclass(frozen=True)
class PruneMask:
    """Per-layer binary keep matrices covering every network layer.

    Layers outside `prunable_layers` are all ones.
    """

    layers: tuple[np.ndarray, ...]
    prunable_layers: frozenset[int]

    def __post_init__(self):
        mats = []
        for i, m in enumerate(self.layers):
            arr = np.ascontiguousarray(np.asarray(m, dtype=STORAGE_DTYPE))
            if arr.ndim != 2:
                raise ValueError(f"mask layer {i} must be 2-D")
            if not np.all((arr == 0.0) | (arr == 1.0)):
                raise ValueError(f"mask layer {i} has entries outside {{0, 1}}")
            if i not in self.prunable_layers and not np.all(arr == 1.0):
                raise ValueError(f"non-prunable layer {i} must be all ones")
            arr.flags.writeable = False
            mats.append(arr)
        object.__setattr__(self, "layers", tuple(mats))
        object.__setattr__(self, "prunable_layers", frozenset(self.prunable_layers))

    @classmethod
    def all_ones(cls, net: Network, prunable_layers: frozenset[int] | None = None) -> "PruneMask":
        prunable = default_prunable_layers(len(net.layers)) if prunable_layers is None else prunable_layers
        return cls(
            layers=tuple(np.ones_like(layer.weights) for layer in net.layers),
            prunable_layers=prunable,
        )

    @classmethod
    def from_network(cls, net: Network, prunable_layers: frozenset[int] | None = None) -> "PruneMask":
        prunable = default_prunable_layers(len(net.layers)) if prunable_layers is None else prunable_layers
        return cls(layers=tuple(layer.mask for layer in net.layers), prunable_layers=prunable)


@dataclass(frozen=True)
class ImportanceScores:
    """Per-layer nonnegative importance values, one per weight."""

    layers: tuple[np.ndarray, ...]
    prunable_layers: frozenset[int]

    def __post_init__(self):
        mats = []
        for i, m in enumerate(self.layers):
            arr = np.ascontiguousarray(np.asarray(m, dtype=np.float64))
            if arr.ndim != 2:
                raise ValueError(f"score layer {i} must be 2-D")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"score layer {i} has non-finite entries")
            if np.any(arr < 0):
                raise ValueError(f"score layer {i} has negative entries")
            arr.flags.writeable = False
            mats.append(arr)
        object.__setattr__(self, "layers", tuple(mats))
        object.__setattr__(self, "prunable_layers", frozenset(self.prunable_layers))


@dataclass(frozen=True)
class BipropConfig:
    prune_rate: float
    epochs: int
    learning_rate: float
    seed: int = 0
    score_init: str = "magnitude-proportional"

    def __post_init__(self):
        _check_rate(self.prune_rate)
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not (self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if self.score_init != "magnitude-proportional":
            raise ValueError(f"unsupported score_init {self.score_init!r}")


def _select_smallest(
    score_layers: tuple[np.ndarray, ...],
    shapes: list[tuple[int, int]],
    prunable: frozenset[int],
    rate: float,
    scope: str,
) -> PruneMask:
    """Mask the smallest-score weights; ties fall to lower (layer, row, col).

    Global scope floors the count over the whole prunable pool; per-layer
    scope floors within each layer.
    """
    if scope not in ("global", "per-layer"):
        raise ValueError(f"scope must be 'global' or 'per-layer', got {scope!r}")
    masks = [np.ones(shape, dtype=STORAGE_DTYPE) for shape in shapes]
    order = sorted(prunable)
    if scope == "global":
        flat = np.concatenate([np.asarray(score_layers[i], dtype=np.float64).ravel() for i in order])
        k = _masked_count(rate, flat.size)
        # stable sort: equal scores keep concatenation order = (layer, row, col)
        drop = np.argsort(flat, kind="stable")[:k]
        chosen = np.zeros(flat.size, dtype=bool)
        chosen[drop] = True
        offset = 0
        for i in order:
            size = masks[i].size
            layer_drop = chosen[offset : offset + size].reshape(shapes[i])
            masks[i][layer_drop] = 0.0
            offset += size
    else:
        for i in order:
            flat = np.asarray(score_layers[i], dtype=np.float64).ravel()
            k = _masked_count(rate, flat.size)
            drop = np.argsort(flat, kind="stable")[:k]
            m = masks[i].ravel()
            m[drop] = 0.0
            masks[i] = m.reshape(shapes[i])
    return PruneMask(layers=tuple(masks), prunable_layers=prunable)


def prune_random(
    net: Network,
    rate: float,
    seed: int,
    prunable_layers: frozenset[int] | None = None,
) -> PruneMask:
    """Mask exactly floor(rate x n_prunable) weights chosen uniformly."""
    _check_rate(rate)
    prunable = default_prunable_layers(len(net.layers)) if prunable_layers is None else prunable_layers
    shapes = [layer.weights.shape for layer in net.layers]
    order = sorted(prunable)
    total = sum(net.layers[i].weights.size for i in order)
    k = _masked_count(rate, total)
    rng = np.random.default_rng(seed)
    drop = rng.choice(total, size=k, replace=False)
    chosen = np.zeros(total, dtype=bool)
    chosen[drop] = True
    masks = [np.ones(shape, dtype=STORAGE_DTYPE) for shape in shapes]
    offset = 0
    for i in order:
        size = masks[i].size
        masks[i][chosen[offset : offset + size].reshape(shapes[i])] = 0.0
        offset += size
    return PruneMask(layers=tuple(masks), prunable_layers=prunable)


def prune_magnitude(
    net: Network,
    rate: float,
    scope: str = "global",
    prunable_layers: frozenset[int] | None = None,
) -> PruneMask:
    """Mask the smallest-|weight| fraction, globally by default."""
    _check_rate(rate)
    prunable = default_prunable_layers(len(net.layers)) if prunable_layers is None else prunable_layers
    scores = tuple(np.abs(layer.weights.astype(np.float64)) for layer in net.layers)
    shapes = [layer.weights.shape for layer in net.layers]
    return _select_smallest(scores, shapes, prunable, rate, scope)


def taylor_importance(
    net: Network,
    data: LabeledDataset,
    prunable_layers: frozenset[int] | None = None,
) -> ImportanceScores:
    """First-order loss-impact score |gradient x weight| per weight.

    The gradient is the mean over the full dataset (one aggregate pass);
    masked weights score exactly 0.
    """
    prunable = default_prunable_layers(len(net.layers)) if prunable_layers is None else prunable_layers
    grads = backward(net, data)
    layers = tuple(
        np.abs(g * layer.weights.astype(np.float64)) * layer.mask.astype(np.float64)
        for g, layer in zip(grads.weights, net.layers)
    )
    return ImportanceScores(layers=layers, prunable_layers=prunable)


def prune_by_scores(scores: ImportanceScores, rate: float, scope: str = "global") -> PruneMask:
    """Mask the lowest-importance fraction; same selection rules as magnitude."""
    _check_rate(rate)
    shapes = [m.shape for m in scores.layers]
    return _select_smallest(scores.layers, shapes, scores.prunable_layers, rate, scope)


def apply_mask(net: Network, mask: PruneMask) -> Network:
    """Zero masked weights and record the mask on the network; idempotent."""
    if len(mask.layers) != len(net.layers):
        raise ValueError(f"mask has {len(mask.layers)} layers, network has {len(net.layers)}")
    layers = []
    for layer, m in zip(net.layers, mask.layers):
        if m.shape != layer.weights.shape:
            raise ValueError(f"mask shape {m.shape} != weight shape {layer.weights.shape}")
        layers.append(Layer(weights=layer.weights * m, bias=layer.bias, mask=m))
    return net.with_layers(tuple(layers))


def sparsity(mask: PruneMask) -> float:
    """Fraction of prunable weights removed by the mask."""
    total = 0
    zeros = 0
    for i in sorted(mask.prunable_layers):
        total += mask.layers[i].size
        zeros += int(np.sum(mask.layers[i] == 0.0))
    if total == 0:
        return 0.0
    return zeros / total


def _topk_keep_mask(scores: np.ndarray, keep: int) -> np.ndarray:
    """Keep the `keep` highest scores; ties keep lower (row, col) first."""
    flat = scores.ravel()
    # stable sort on negated scores: equal scores keep position order
    kept = np.argsort(-flat, kind="stable")[:keep]
    mask = np.zeros(flat.size, dtype=STORAGE_DTYPE)
    mask[kept] = 1.0
    return mask.reshape(scores.shape)


def biprop_train(
    spec: NetworkSpec,
    data: LabeledDataset,
    cfg: BipropConfig,
    prunable_layers: frozenset[int] | None = None,
) -> tuple[Network, PruneMask]:
    """Find a binarized sparse subnetwork inside a random init.

    The random weights are never gradient-updated.  Each step, every layer
    keeps its top-scoring weights (the full layer for non-prunable layers,
    the top 1 - prune_rate fraction otherwise), binarizes the kept weights
    to alpha * sign(w) with alpha the mean |w| over the kept set, and runs
    the batch through that effective network.  Scores then take a gradient
    step, with the mask and binarization treated as identity for the
    backward pass (straight-through), so pruned weights keep receiving a
    learning signal and can be revived.

    Training is full-batch gradient descent; the result is deterministic in
    (spec.seed, cfg.seed).
    """
    base = init_network(spec)
    prunable = default_prunable_layers(len(base.layers)) if prunable_layers is None else prunable_layers

    abs_w = [np.abs(layer.weights.astype(np.float64)) for layer in base.layers]
    sign_w = [
        np.where(layer.weights.astype(np.float64) >= 0.0, 1.0, -1.0) for layer in base.layers
    ]
    scores = [a.copy() for a in abs_w]
    keep_counts = [
        a.size - (_masked_count(cfg.prune_rate, a.size) if i in prunable else 0)
        for i, a in enumerate(abs_w)
    ]

    def effective() -> tuple[Network, list[np.ndarray], list[float]]:
        masks = [_topk_keep_mask(s, k) for s, k in zip(scores, keep_counts)]
        alphas = []
        layers = []
        for i, layer in enumerate(base.layers):
            kept = masks[i] == 1.0
            alpha = float(abs_w[i][kept].mean()) if kept.any() else 0.0
            alphas.append(alpha)
            w_eff = (alpha * sign_w[i] * masks[i]).astype(STORAGE_DTYPE)
            layers.append(Layer(weights=w_eff, bias=layer.bias, mask=masks[i]))
        return base.with_layers(tuple(layers)), masks, alphas

    for epoch in range(cfg.epochs):
        net_eff, _, alphas = effective()
        grads, batch_loss = _raw_gradients(net_eff, data.inputs, data.labels)
        if not np.isfinite(batch_loss):
            raise TrainingDiverged(f"non-finite loss {batch_loss} at epoch {epoch}")
        for i in range(len(scores)):
            scores[i] = scores[i] - cfg.learning_rate * grads.weights[i] * (alphas[i] * sign_w[i])

    net_final, masks, _ = effective()
    return net_final, PruneMask(layers=tuple(masks), prunable_layers=prunable)
