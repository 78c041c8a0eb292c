"""Angle/length/margin metrics and the probability decomposition."""

import math

import numpy as np
import pytest

from prunescope import geometry, nn, synth
from prunescope.geometry import (
    ClassDirections,
    DegenerateFeature,
    angle,
    class_directions,
    decompose_probability,
    geometry_snapshot,
    margin,
    signed_margin,
)
from prunescope.nn import LabeledDataset, Layer, NetworkSpec
from prunescope.pruning import apply_mask, prune_magnitude


def dirs_2d():
    return ClassDirections(
        directions=np.array([[1.0, 0.0], [0.0, 1.0]]), norms=np.array([1.0, 1.0])
    )


def random_directions(rng, c, m):
    d = rng.normal(size=(c, m))
    return ClassDirections(directions=d, norms=np.linalg.norm(d, axis=1))


class TestClassDirections:
    def test_identity_classifier(self, identity_classifier):
        dirs = class_directions(identity_classifier)
        assert np.array_equal(dirs.directions, np.eye(2))
        assert np.array_equal(dirs.norms, np.array([1.0, 1.0]))

    def test_invariant_under_hidden_pruning(self):
        net = nn.init_network(NetworkSpec(layer_sizes=(4, 8, 3), seed=3))
        pruned = apply_mask(net, prune_magnitude(net, 0.8))
        assert np.array_equal(class_directions(net).norms, class_directions(pruned).norms)

    def test_reproduces_logits(self):
        net = nn.init_network(NetworkSpec(layer_sizes=(3, 6, 4), seed=8))
        x = np.random.default_rng(1).normal(size=(10, 3))
        features, logits = nn.forward(net, x)
        dirs = class_directions(net)
        assert np.allclose(features @ dirs.directions.T, logits, atol=1e-6)

    def test_zero_norm_direction_rejected(self):
        spec = NetworkSpec(layer_sizes=(2, 2), seed=0, hidden_bias=False)
        w = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.float32)
        net = nn.Network(
            spec=spec, layers=(Layer(weights=w, bias=None, mask=np.ones_like(w)),)
        )
        with pytest.raises(ValueError):
            class_directions(net)


class TestAngle:
    def test_parallel_is_zero(self):
        assert angle(np.array([2.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-9)

    def test_diagonal_is_45(self):
        assert angle(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(45.0)

    def test_orthogonal_is_90(self):
        assert angle(np.array([0.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(90.0)

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateFeature):
            angle(np.zeros(2), np.array([1.0, 0.0]))


class TestMargin:
    def test_hand_computed_example(self):
        # (W1 - W2) . X / |W1 - W2| = 1 / sqrt(2)
        m = margin(np.array([1.0, 0.0]), dirs_2d(), predicted=0)
        assert m == pytest.approx(1.0 / math.sqrt(2.0))
        assert m == pytest.approx(0.7071067811865475)

    def test_bisector_is_zero(self):
        assert margin(np.array([1.0, 1.0]), dirs_2d(), predicted=0) == pytest.approx(0.0, abs=1e-12)

    def test_homogeneous_in_feature_scale(self):
        rng = np.random.default_rng(4)
        dirs = random_directions(rng, 4, 6)
        x = rng.normal(size=6)
        logits = dirs.directions @ x
        pred = int(np.argmax(logits))
        assert margin(2.0 * x, dirs, pred) == pytest.approx(2.0 * margin(x, dirs, pred))

    def test_duplicate_directions_raise(self):
        dirs = ClassDirections(
            directions=np.array([[1.0, 0.0], [1.0, 0.0]]), norms=np.array([1.0, 1.0])
        )
        with pytest.raises(ValueError):
            margin(np.array([1.0, 0.0]), dirs, predicted=0)


class TestSignedMargin:
    def test_correct_keeps_sign(self):
        assert signed_margin(0.7, correct=True) == 0.7

    def test_wrong_flips_sign(self):
        assert signed_margin(0.7, correct=False) == -0.7

    def test_boundary_is_zero_either_way(self):
        assert signed_margin(0.0, correct=True) == 0.0
        assert signed_margin(0.0, correct=False) == 0.0


class TestDecomposeProbability:
    def test_hand_computed_two_class(self):
        # exponent: |X| (C_2 cos t_2 - C_1 cos t_1) = 2 (0 - 1) = -2
        p = decompose_probability(np.array([2.0, 0.0]), dirs_2d(), 0)
        assert p == pytest.approx(1.0 / (math.exp(-2.0) + 1.0), rel=1e-12)
        assert p == pytest.approx(0.8807970779778823)

    def test_symmetric_configuration_gives_chance(self):
        c = 5
        dirs = ClassDirections(
            directions=np.stack([np.eye(c)[j] for j in range(c)]), norms=np.ones(c)
        )
        x = np.ones(c)  # equal angle to every axis
        for i in range(c):
            assert decompose_probability(x, dirs, i) == pytest.approx(1.0 / c, rel=1e-12)

    def test_longer_correct_features_are_more_confident(self):
        rng = np.random.default_rng(9)
        dirs = random_directions(rng, 3, 8)
        x = rng.normal(size=8)
        i = int(np.argmax(dirs.directions @ x))
        p1 = decompose_probability(x, dirs, i)
        p2 = decompose_probability(2.0 * x, dirs, i)
        assert p2 > p1

    def test_matches_direct_softmax_on_random_inputs(self):
        rng = np.random.default_rng(123)
        for _ in range(300):
            c = int(rng.integers(2, 7))
            m = int(rng.integers(2, 17))
            dirs = random_directions(rng, c, m)
            x = rng.normal(size=m) * float(rng.uniform(0.1, 10.0))
            logits = dirs.directions @ x
            z = logits - logits.max()
            soft = np.exp(z) / np.exp(z).sum()
            i = int(rng.integers(0, c))
            p = decompose_probability(x, dirs, i)
            assert abs(p - soft[i]) / soft[i] < 1e-5

    def test_degenerate_feature_raises(self):
        with pytest.raises(DegenerateFeature):
            decompose_probability(np.zeros(2), dirs_2d(), 0)


class TestGeometrySnapshot:
    def test_identity_classifier_on_one_hot_inputs(self, identity_classifier):
        data = LabeledDataset(
            inputs=np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32),
            labels=np.array([0, 1]),
            sample_ids=("a", "b"),
            class_count=2,
        )
        snap = geometry_snapshot(identity_classifier, data)
        for s in snap.samples:
            assert s.correct
            assert s.angles[s.true_label] == pytest.approx(0.0, abs=1e-6)
            other = 1 - s.true_label
            assert s.angles[other] == pytest.approx(90.0)

    def test_accuracy_matches_predict(self, blobs):
        net = nn.init_network(NetworkSpec(layer_sizes=(2, 8, 2), seed=6))
        snap = geometry_snapshot(net, blobs)
        assert snap.accuracy() == pytest.approx(nn.accuracy(net, blobs))

    def test_untrained_wide_net_angles_near_90(self):
        spec = NetworkSpec(layer_sizes=(32, 512, 10), seed=77)
        net = nn.init_network(spec)
        rng = np.random.default_rng(5)
        data = LabeledDataset(
            inputs=rng.normal(size=(300, 32)).astype(np.float32),
            labels=rng.integers(0, 10, size=300),
            sample_ids=tuple(f"u{i}" for i in range(300)),
            class_count=10,
        )
        snap = geometry_snapshot(net, data)
        mean_angle = float(np.mean(snap.angle_to_true()))
        assert 85.0 <= mean_angle <= 92.0

    def test_degenerate_sample_flagged_not_dropped(self):
        # ReLU kills a feature vector when every hidden pre-activation is <= 0
        spec = NetworkSpec(layer_sizes=(2, 3, 2), seed=0, hidden_bias=False)
        w0 = np.abs(np.random.default_rng(2).normal(size=(3, 2))).astype(np.float32)
        w1 = np.random.default_rng(3).normal(size=(2, 3)).astype(np.float32)
        net = nn.Network(
            spec=spec,
            layers=(
                Layer(weights=w0, bias=None, mask=np.ones_like(w0)),
                Layer(weights=w1, bias=None, mask=np.ones_like(w1)),
            ),
        )
        data = LabeledDataset(
            inputs=np.array([[-1.0, -1.0], [1.0, 1.0]], dtype=np.float32),
            labels=np.array([0, 1]),
            sample_ids=("dead", "alive"),
            class_count=2,
        )
        snap = geometry_snapshot(net, data)
        by_id = snap.by_id()
        assert by_id["dead"].degenerate
        assert np.all(np.isnan(by_id["dead"].angles))
        assert by_id["dead"].margin == 0.0
        assert not by_id["alive"].degenerate
        assert snap.n == 2

    def test_class_count_mismatch(self, identity_classifier):
        data = LabeledDataset(
            inputs=np.zeros((2, 2), dtype=np.float32),
            labels=np.array([0, 2]),
            sample_ids=("a", "b"),
            class_count=3,
        )
        with pytest.raises(ValueError):
            geometry_snapshot(identity_classifier, data)


class TestInvariants:
    def test_margin_robustness_certificate(self):
        """Perturbations smaller than the margin never flip the argmax."""
        rng = np.random.default_rng(31)
        dirs = random_directions(rng, 4, 8)
        flips_below = 0
        for _ in range(50):
            x = rng.normal(size=8)
            logits = dirs.directions @ x
            pred = int(np.argmax(logits))
            mu = margin(x, dirs, pred)
            if mu <= 0:
                continue
            for _ in range(100):
                delta = rng.normal(size=8)
                delta *= (mu * 0.999) / np.linalg.norm(delta) * rng.uniform(0.0, 1.0)
                if int(np.argmax(dirs.directions @ (x + delta))) != pred:
                    flips_below += 1
        assert flips_below == 0

    def test_equal_norm_directions_argmax_is_argmin_angle(self):
        rng = np.random.default_rng(17)
        d = rng.normal(size=(5, 6))
        d /= np.linalg.norm(d, axis=1, keepdims=True)  # all norms 1
        dirs = ClassDirections(directions=d, norms=np.ones(5))
        for _ in range(50):
            x = rng.normal(size=6)
            angles = geometry.angles_to_all(x, dirs)
            assert int(np.argmax(d @ x)) == int(np.argmin(angles))

    def test_misprediction_iff_negative_margin(self):
        net = nn.init_network(NetworkSpec(layer_sizes=(2, 8, 2), seed=6))
        data = synth.two_blobs(100, seed=8)
        snap = geometry_snapshot(net, data)
        for s in snap.samples:
            if s.degenerate or s.margin == 0.0:
                continue
            assert (s.margin < 0) == (s.predicted_label != s.true_label)
