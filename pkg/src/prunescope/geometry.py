"""Feature-space geometry of a classifier: angle, length, margin.

The classifier's weight rows are fixed "class directions" in the
penultimate feature space.  Because the classifier has no bias, each logit
is an exact dot product, so a sample's prediction is fully determined by
three quantities: the angles between its feature vector and the class
directions, the feature length, and the distance to the nearest decision
hyperplane.  The softmax probability itself factors through these (see
`decompose_probability`), which is what makes the metrics faithful to the
prediction rather than a lossy summary.

Sign convention: margins are measured against the *predicted* class (all
hyperplane distances nonnegative), then negated when the prediction is
wrong.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .nn import LabeledDataset, Network, forward

DEGENERATE_EPS = 1e-12


class DegenerateFeature(ValueError):
    """Feature vector too short to define angles."""


@dataclass(frozen=True)
class ClassDirections:
    """Rows of the classifier weight matrix and their L2 norms."""

    directions: np.ndarray  # (C, m)
    norms: np.ndarray  # (C,)

    @property
    def class_count(self) -> int:
        return self.directions.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.directions.shape[1]


def class_directions(net: Network) -> ClassDirections:
    """Extract the per-class weight rows of the (bias-free) classifier."""
    w = net.classifier_weights.astype(np.float64)
    norms = np.linalg.norm(w, axis=1)
    zero = np.nonzero(norms <= DEGENERATE_EPS)[0]
    if zero.size:
        raise ValueError(f"class direction(s) {zero.tolist()} have zero norm")
    d = np.ascontiguousarray(w)
    d.flags.writeable = False
    n = np.ascontiguousarray(norms)
    n.flags.writeable = False
    return ClassDirections(directions=d, norms=n)


def _clamped_cosines(x: np.ndarray, dirs: ClassDirections) -> np.ndarray:
    length = float(np.linalg.norm(x))
    if length <= DEGENERATE_EPS:
        raise DegenerateFeature(f"feature length {length} below {DEGENERATE_EPS}")
    cos = (dirs.directions @ x) / (dirs.norms * length)
    return np.clip(cos, -1.0, 1.0)


def angle(x: np.ndarray, direction: np.ndarray) -> float:
    """Angle in degrees between a feature vector and one class direction."""
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    nx = float(np.linalg.norm(x))
    nd = float(np.linalg.norm(d))
    if nx <= DEGENERATE_EPS:
        raise DegenerateFeature(f"feature length {nx} below {DEGENERATE_EPS}")
    if nd <= DEGENERATE_EPS:
        raise ValueError("class direction has zero norm")
    cos = np.clip(float(x @ d) / (nx * nd), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


def angles_to_all(x: np.ndarray, dirs: ClassDirections) -> np.ndarray:
    """Angles in degrees from `x` to every class direction."""
    x = np.asarray(x, dtype=np.float64)
    return np.degrees(np.arccos(_clamped_cosines(x, dirs)))


def margin(x: np.ndarray, dirs: ClassDirections, predicted: int) -> float:
    """Distance from `x` to the nearest decision hyperplane of its class.

    The boundary of class p against class j is the hyperplane
    (W_p - W_j) . x = 0; the margin is the minimum point-to-hyperplane
    distance over all j != p.  Requires `predicted` to be the argmax class
    for `x`, which makes every term nonnegative.
    """
    x = np.asarray(x, dtype=np.float64)
    c = dirs.class_count
    if not (0 <= predicted < c):
        raise ValueError(f"predicted class {predicted} out of range [0, {c})")
    diffs = dirs.directions[predicted] - dirs.directions  # (C, m)
    denom = np.linalg.norm(diffs, axis=1)
    others = np.arange(c) != predicted
    if np.any(denom[others] <= DEGENERATE_EPS):
        dup = np.nonzero(others & (denom <= DEGENERATE_EPS))[0]
        raise ValueError(
            f"class direction(s) {dup.tolist()} coincide with class {predicted}; margin undefined"
        )
    return float(np.min((diffs[others] @ x) / denom[others]))


def signed_margin(margin_value: float, correct: bool) -> float:
    """Flip the margin negative when the prediction is wrong."""
    return float(margin_value) if correct else -float(margin_value)


def _logsumexp(t: np.ndarray) -> float:
    m = float(np.max(t))
    return m + float(np.log(np.exp(t - m).sum()))


def decompose_probability(x: np.ndarray, dirs: ClassDirections, i: int) -> float:
    """Softmax probability of class `i` computed through the geometry.

    Uses 1 / (sum_{j != i} exp(len * (C_j cos t_j - C_i cos t_i)) + 1),
    with the angles as the genuine intermediate: they are recovered by
    arccos and fed back through cos.  Evaluated through a log-sum-exp so
    extreme lengths cannot overflow; agrees with the direct softmax of the
    logits to high precision.
    """
    x = np.asarray(x, dtype=np.float64)
    c = dirs.class_count
    if not (0 <= i < c):
        raise ValueError(f"class index {i} out of range [0, {c})")
    length = float(np.linalg.norm(x))
    theta = np.arccos(_clamped_cosines(x, dirs))  # radians; raises if degenerate
    proj = dirs.norms * np.cos(theta)  # C_j cos(theta_j)
    t = length * (proj - proj[i])
    t = np.delete(t, i)
    return float(np.exp(-_logsumexp(np.append(t, 0.0))))


@dataclass(frozen=True)
class GeometrySample:
    """One input's geometry record.

    `angles` holds degrees to every class direction (NaN when degenerate);
    `margin` is already signed by correctness.
    """

    sample_id: str
    true_label: int
    predicted_label: int
    angles: np.ndarray
    length: float
    margin: float
    correct: bool
    degenerate: bool

    @property
    def angle_to_true(self) -> float:
        return float(self.angles[self.true_label])


@dataclass(frozen=True)
class GeometrySnapshot:
    """All geometry samples of one (model, dataset) pair, ordered by id."""

    combination_id: str
    dataset_id: str
    samples: tuple[GeometrySample, ...]
    class_count: int
    created_at: str

    def __post_init__(self):
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("snapshot sample ids must be unique")

    @property
    def n(self) -> int:
        return len(self.samples)

    def accuracy(self) -> float:
        return float(np.mean([s.correct for s in self.samples]))

    def sample_ids(self) -> tuple[str, ...]:
        return tuple(s.sample_id for s in self.samples)

    def by_id(self) -> dict[str, GeometrySample]:
        return {s.sample_id: s for s in self.samples}

    def angles_matrix(self) -> np.ndarray:
        return np.stack([s.angles for s in self.samples])

    def lengths(self) -> np.ndarray:
        return np.array([s.length for s in self.samples])

    def margins(self) -> np.ndarray:
        return np.array([s.margin for s in self.samples])

    def true_labels(self) -> np.ndarray:
        return np.array([s.true_label for s in self.samples], dtype=np.int64)

    def predicted_labels(self) -> np.ndarray:
        return np.array([s.predicted_label for s in self.samples], dtype=np.int64)

    def degenerate_flags(self) -> np.ndarray:
        return np.array([s.degenerate for s in self.samples], dtype=bool)

    def angle_to_true(self) -> np.ndarray:
        return np.array([s.angle_to_true for s in self.samples])


def geometry_snapshot(
    net: Network,
    data: LabeledDataset,
    combination_id: str = "",
    dataset_id: str = "",
    created_at: str | None = None,
) -> GeometrySnapshot:
    """Compute one GeometrySample per input.

    Degenerate (zero-length) features are flagged and get NaN angles and a
    zero margin; they still count toward accuracy.  Samples are ordered by
    sample_id so snapshots of the same dataset align row-for-row.
    """
    c = net.spec.class_count
    if data.class_count != c:
        raise ValueError(f"dataset class count {data.class_count} != network class count {c}")
    dirs = class_directions(net)
    features, logits = forward(net, data.inputs)
    predicted = np.argmax(logits, axis=1)

    samples = []
    for row in range(data.n):
        x = features[row]
        pred = int(predicted[row])
        true = int(data.labels[row])
        correct = pred == true
        length = float(np.linalg.norm(x))
        if length <= DEGENERATE_EPS:
            angles = np.full(c, np.nan)
            m = 0.0
        else:
            angles = angles_to_all(x, dirs)
            m = signed_margin(margin(x, dirs, pred), correct)
        angles.flags.writeable = False
        samples.append(
            GeometrySample(
                sample_id=data.sample_ids[row],
                true_label=true,
                predicted_label=pred,
                angles=angles,
                length=length,
                margin=m,
                correct=correct,
                degenerate=length <= DEGENERATE_EPS,
            )
        )
    samples.sort(key=lambda s: s.sample_id)
    return GeometrySnapshot(
        combination_id=combination_id,
        dataset_id=dataset_id,
        samples=tuple(samples),
        class_count=c,
        created_at=created_at or datetime.now(timezone.utc).isoformat(),
    )
