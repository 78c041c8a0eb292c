"""Dense feedforward classifiers with manual backpropagation.

Networks are an encoder (all hidden layers, ReLU) followed by a bias-free
linear classifier.  The penultimate activation is the "feature vector" that
the geometry module analyses, so the classifier layer is deliberately kept
as a plain matrix of per-class weight rows.

Weights are stored as float32 (the on-disk format), but every computation
upcasts to float64 so that analytic gradients survive a central
finite-difference check at 1e-4 relative error.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

STORAGE_DTYPE = np.float32


class DimensionMismatch(ValueError):
    """Shapes of inputs, weights, or labels do not line up."""


class TrainingDiverged(RuntimeError):
    """A non-finite loss was encountered during training."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def as_matrix(data, dtype=STORAGE_DTYPE) -> np.ndarray:
    """Validate and convert `data` to a read-only 2-D array.

    Raises ValueError on non-2-D input or non-finite entries.
    """
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite entries")
    return _frozen(arr)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a dense classifier.

    `layer_sizes` runs input dim first, class count last.  The classifier
    (final) layer never carries a bias: the feature-space geometry relies on
    logits being exact dot products with the class weight rows.
    """

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    classifier_bias: bool = False
    hidden_bias: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least 2 layer sizes (input dim and class count)")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if self.layer_sizes[-1] < 2:
            raise ValueError("class count must be at least 2")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.classifier_bias:
            raise ValueError("classifier bias is not supported (logits must be pure dot products)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def class_count(self) -> int:
        return self.layer_sizes[-1]

    @property
    def feature_dim(self) -> int:
        """Width of the penultimate layer (the feature space)."""
        return self.layer_sizes[-2]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkSpec":
        return cls(
            layer_sizes=tuple(obj["layer_sizes"]),
            activation=obj.get("activation", "relu"),
            classifier_bias=obj.get("classifier_bias", False),
            hidden_bias=obj.get("hidden_bias", True),
            seed=obj.get("seed", 0),
        )


@dataclass(frozen=True)
class Layer:
    """One dense layer: weights (out x in), optional bias, binary keep-mask.

    Masked weights are stored as exact zeros; the mask is the authority on
    which entries are pruned.
    """

    weights: np.ndarray
    bias: np.ndarray | None
    mask: np.ndarray

    def __post_init__(self):
        w = as_matrix(self.weights)
        m = np.asarray(self.mask, dtype=STORAGE_DTYPE)
        if m.shape != w.shape:
            raise DimensionMismatch(f"mask shape {m.shape} != weight shape {w.shape}")
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        w = _frozen(np.where(m == 0.0, np.float32(0.0), w))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mask", _frozen(m))
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=STORAGE_DTYPE)
            if b.ndim != 1 or b.shape[0] != w.shape[0]:
                raise DimensionMismatch(f"bias shape {b.shape} != ({w.shape[0]},)")
            object.__setattr__(self, "bias", _frozen(b))

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Network:
    """An immutable stack of layers; the final layer is the classifier."""

    spec: NetworkSpec
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        sizes = self.spec.layer_sizes
        if len(self.layers) != self.spec.n_layers:
            raise DimensionMismatch(
                f"spec wants {self.spec.n_layers} layers, got {len(self.layers)}"
            )
        for i, layer in enumerate(self.layers):
            if layer.weights.shape != (sizes[i + 1], sizes[i]):
                raise DimensionMismatch(
                    f"layer {i} weights {layer.weights.shape} != {(sizes[i + 1], sizes[i])}"
                )
        if self.layers[-1].bias is not None:
            raise ValueError("classifier layer must not have a bias")

    @property
    def classifier_weights(self) -> np.ndarray:
        """(C x m) matrix whose row j is the class-j weight vector."""
        return self.layers[-1].weights

    def with_layers(self, layers: tuple[Layer, ...]) -> "Network":
        return Network(spec=self.spec, layers=layers)


@dataclass(frozen=True)
class LabeledDataset:
    """Inputs (N x input_dim), integer labels in [0, class_count), unique ids.

    `image_shape` is optional metadata used by the corruption suite to
    interpret flat input rows as 2-D images.
    """

    inputs: np.ndarray
    labels: np.ndarray
    sample_ids: tuple[str, ...]
    class_count: int
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        x = as_matrix(self.inputs)
        y = np.asarray(self.labels, dtype=np.int64)
        ids = tuple(str(s) for s in self.sample_ids)
        if x.shape[0] == 0:
            raise ValueError("dataset must be non-empty")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DimensionMismatch(f"labels shape {y.shape} != ({x.shape[0]},)")
        if len(ids) != x.shape[0]:
            raise DimensionMismatch("one sample id per row required")
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        if y.min() < 0 or y.max() >= self.class_count:
            raise ValueError("labels must lie in [0, class_count)")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != x.shape[1]:
                raise DimensionMismatch(
                    f"image shape {self.image_shape} does not cover input dim {x.shape[1]}"
                )
            object.__setattr__(self, "image_shape", (int(h), int(w)))
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def take(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            inputs=self.inputs[idx],
            labels=self.labels[idx],
            sample_ids=tuple(self.sample_ids[i] for i in idx),
            class_count=self.class_count,
            image_shape=self.image_shape,
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


def init_network(spec: NetworkSpec) -> Network:
    """Fresh network with uniform +-1/sqrt(fan_in) weights from `spec.seed`."""
    rng = np.random.default_rng(spec.seed)
    layers = []
    sizes = spec.layer_sizes
    for i in range(spec.n_layers):
        fan_in = sizes[i]
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(sizes[i + 1], fan_in)).astype(STORAGE_DTYPE)
        is_classifier = i == spec.n_layers - 1
        bias = None
        if spec.hidden_bias and not is_classifier:
            bias = np.zeros(sizes[i + 1], dtype=STORAGE_DTYPE)
        layers.append(Layer(weights=w, bias=bias, mask=np.ones_like(w)))
    return Network(spec=spec, layers=tuple(layers))


def _forward_trace(net: Network, inputs: np.ndarray):
    """Forward pass keeping pre-activations; everything in float64.

    Returns (activations, pre_activations, logits) where activations[i] is
    the input to layer i (activations[0] is the network input).
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"inputs must be 2-D, got shape {x.shape}")
    if x.shape[1] != net.spec.input_dim:
        raise DimensionMismatch(
            f"input dim {x.shape[1]} != network input dim {net.spec.input_dim}"
        )
    activations = [x]
    pre_activations = []
    for layer in net.layers[:-1]:
        z = activations[-1] @ layer.weights.astype(np.float64).T
        if layer.bias is not None:
            z = z + layer.bias.astype(np.float64)
        pre_activations.append(z)
        activations.append(np.maximum(z, 0.0))
    logits = activations[-1] @ net.classifier_weights.astype(np.float64).T
    return activations, pre_activations, logits


def forward(net: Network, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run the network; return (features, logits).

    Features are the penultimate activations (the classifier's input), so
    `logits == features @ classifier_weights.T` holds exactly.
    """
    activations, _, logits = _forward_trace(net, inputs)
    return activations[-1], logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy (negative log of the true-class softmax probability)."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2:
        raise DimensionMismatch("logits must be 2-D")
    if y.ndim != 1 or y.shape[0] != z.shape[0]:
        raise DimensionMismatch(f"labels shape {y.shape} != ({z.shape[0]},)")
    if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
        raise ValueError("label out of range")
    lp = log_softmax(z)
    return float(-lp[np.arange(y.shape[0]), y].mean())


@dataclass(frozen=True)
class Gradients:
    """Per-layer gradients of the mean cross-entropy."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray | None, ...]


def _raw_gradients(net: Network, inputs: np.ndarray, labels: np.ndarray) -> tuple[Gradients, float]:
    """Backprop without mask-zeroing (gradient of every weight position).

    The pruning module needs gradients at masked positions for its
    straight-through score updates, so masking is applied by callers.
    Returns (gradients, batch loss).
    """
    activations, pre_activations, logits = _forward_trace(net, inputs)
    y = np.asarray(labels, dtype=np.int64)
    n = y.shape[0]
    if n == 0:
        raise ValueError("batch must be non-empty")
    if y.min() < 0 or y.max() >= net.spec.class_count:
        raise ValueError("label out of range")

    batch_loss = loss(logits, y)

    probs = softmax(logits)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grad_w: list[np.ndarray] = [np.empty(0)] * len(net.layers)
    grad_b: list[np.ndarray | None] = [None] * len(net.layers)

    grad_w[-1] = delta.T @ activations[-1]
    upstream = delta @ net.classifier_weights.astype(np.float64)

    for i in range(len(net.layers) - 2, -1, -1):
        dz = upstream * (pre_activations[i] > 0.0)
        grad_w[i] = dz.T @ activations[i]
        if net.layers[i].bias is not None:
            grad_b[i] = dz.sum(axis=0)
        upstream = dz @ net.layers[i].weights.astype(np.float64)

    return Gradients(weights=tuple(grad_w), biases=tuple(grad_b)), batch_loss


def backward(net: Network, batch: LabeledDataset) -> Gradients:
    """Gradient of the mean cross-entropy over `batch` w.r.t. every weight.

    Gradients at masked positions are reported as exactly 0.
    """
    grads, _ = _raw_gradients(net, batch.inputs, batch.labels)
    masked = tuple(
        g * layer.mask.astype(np.float64) for g, layer in zip(grads.weights, net.layers)
    )
    return Gradients(weights=masked, biases=grads.biases)


def train(net: Network, data: LabeledDataset, cfg: TrainConfig) -> Network:
    """Plain SGD (fixed learning rate, no momentum); returns a new network.

    Deterministic given (spec.seed, cfg.seed); masks are conserved: pruned
    weights stay exactly zero through every update.
    """
    if cfg.batch_size > data.n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {data.n}")
    if data.input_dim != net.spec.input_dim:
        raise DimensionMismatch("dataset input dim does not match network")

    weights = [layer.weights.astype(np.float64) for layer in net.layers]
    biases = [
        layer.bias.astype(np.float64) if layer.bias is not None else None
        for layer in net.layers
    ]
    masks64 = [layer.mask.astype(np.float64) for layer in net.layers]

    rng = np.random.default_rng(cfg.seed)
    current = net
    for epoch in range(cfg.epochs):
        order = rng.permutation(data.n)
        for start in range(0, data.n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            grads, batch_loss = _raw_gradients(current, data.inputs[idx], data.labels[idx])
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss {batch_loss} at epoch {epoch}, batch offset {start}"
                )
            for i in range(len(weights)):
                weights[i] -= cfg.learning_rate * grads.weights[i] * masks64[i]
                if biases[i] is not None and grads.biases[i] is not None:
                    biases[i] -= cfg.learning_rate * grads.biases[i]
            _check_finite_parameters(weights, biases, epoch, start)
            current = _assemble(net, weights, biases)
    return current


def _check_finite_parameters(weights, biases, epoch: int, batch_offset: int) -> None:
    # float64 values beyond float32 range would silently overflow on storage
    limit = float(np.finfo(STORAGE_DTYPE).max)
    for i, w in enumerate(weights):
        bad = not np.all(np.isfinite(w)) or np.abs(w).max(initial=0.0) > limit
        b = biases[i]
        if b is not None:
            bad = bad or not np.all(np.isfinite(b)) or np.abs(b).max(initial=0.0) > limit
        if bad:
            raise TrainingDiverged(
                f"layer {i} weights diverged at epoch {epoch}, batch offset {batch_offset}; "
                "lower the learning rate"
            )


def _assemble(net: Network, weights, biases) -> Network:
    layers = tuple(
        Layer(
            weights=w.astype(STORAGE_DTYPE),
            bias=b.astype(STORAGE_DTYPE) if b is not None else None,
            mask=layer.mask,
        )
        for w, b, layer in zip(weights, biases, net.layers)
    )
    return net.with_layers(layers)


def predict(net: Network, inputs: np.ndarray) -> np.ndarray:
    """Argmax over logits per row; ties resolve to the lowest class id."""
    _, logits = forward(net, inputs)
    return np.argmax(logits, axis=1)


def accuracy(net: Network, data: LabeledDataset) -> float:
    return float(np.mean(predict(net, data.inputs) == data.labels))


def finite_diff_importance(net: Network, data: LabeledDataset, layer: int, index: tuple[int, int]) -> float:
    """Exact loss impact of zeroing one weight: |L(w with entry 0) - L(w)|.

    This is the oracle the first-order Taylor score approximates.  Raises on
    an out-of-range index or an already-masked weight.
    """
    if not (0 <= layer < len(net.layers)):
        raise IndexError(f"layer {layer} out of range")
    r, c = index
    shape = net.layers[layer].weights.shape
    if not (0 <= r < shape[0] and 0 <= c < shape[1]):
        raise IndexError(f"index {index} out of range for layer shape {shape}")
    if net.layers[layer].mask[r, c] == 0.0:
        raise ValueError(f"weight ({layer}, {r}, {c}) is already masked")

    _, logits = forward(net, data.inputs)
    base = loss(logits, data.labels)

    w = np.array(net.layers[layer].weights)
    w[r, c] = 0.0
    zeroed_layer = Layer(weights=w, bias=net.layers[layer].bias, mask=net.layers[layer].mask)
    layers = list(net.layers)
    layers[layer] = zeroed_layer
    _, logits0 = forward(net.with_layers(tuple(layers)), data.inputs)
    return abs(loss(logits0, data.labels) - base)
