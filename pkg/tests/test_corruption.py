"""Corruption suite determinism, severity tables, robustness counting, archives."""

import json

import numpy as np
import pytest

from prunescope import nn, synth
from prunescope.corruption import (
    CORRUPTION_TYPES,
    SEVERITIES,
    SEVERITY_TABLES,
    ArchiveError,
    CorruptedDataset,
    CorruptionSpec,
    aggregate_robustness,
    build_suite,
    corrupt,
    export_archive,
    ingest_archive,
    per_sample_robustness,
)
from prunescope.nn import LabeledDataset, Layer, NetworkSpec


@pytest.fixture
def images():
    return synth.pattern_images(8, seed=4)


class TestCorrupt:
    def test_brightness_severity_table(self):
        img = np.full((4, 4), 0.5)
        out = corrupt(img, CorruptionSpec(type="brightness", severity=1, seed=0))
        assert np.allclose(out, 0.55)
        out5 = corrupt(img, CorruptionSpec(type="brightness", severity=5, seed=0))
        assert np.allclose(out5, 0.75)

    def test_zero_variance_hook_is_identity(self):
        img = np.random.default_rng(1).random((6, 6))
        out = corrupt(img, CorruptionSpec(type="gaussian_noise", severity=3, seed=2), param=0.0)
        assert np.array_equal(out, img)

    def test_deterministic_per_seed(self):
        img = np.random.default_rng(3).random((8, 8))
        spec = CorruptionSpec(type="impulse_noise", severity=4, seed=99)
        a = corrupt(img, spec)
        b = corrupt(img, spec)
        assert a.tobytes() == b.tobytes()

    def test_output_stays_in_range(self):
        img = np.random.default_rng(5).random((8, 8))
        for ctype in CORRUPTION_TYPES:
            for severity in SEVERITIES:
                out = corrupt(img, CorruptionSpec(type=ctype, severity=severity, seed=1))
                assert out.min() >= 0.0 and out.max() <= 1.0, (ctype, severity)

    def test_unknown_type_and_bad_severity(self):
        with pytest.raises(ValueError):
            CorruptionSpec(type="fog_of_war", severity=1, seed=0)
        with pytest.raises(ValueError):
            CorruptionSpec(type="brightness", severity=6, seed=0)

    def test_severity_tables_strictly_monotone(self):
        for ctype, params in SEVERITY_TABLES.items():
            diffs = np.diff(params)
            assert np.all(diffs > 0) or np.all(diffs < 0), ctype

    def test_damage_monotone_in_severity(self):
        rng = np.random.default_rng(11)
        imgs = [rng.random((8, 8)) * 0.7 + 0.15 for _ in range(6)]
        for ctype in CORRUPTION_TYPES:
            prev = -1.0
            for severity in SEVERITIES:
                dist = float(
                    np.mean(
                        [
                            np.mean(
                                (corrupt(img, CorruptionSpec(type=ctype, severity=severity, seed=7)) - img)
                                ** 2
                            )
                            for img in imgs
                        ]
                    )
                )
                assert dist >= prev - 1e-12, (ctype, severity)
                prev = dist


class TestBuildSuite:
    def test_variant_counts(self, images):
        suite = build_suite(images, ("brightness", "contrast"), seed=1)
        assert suite.variants_per_sample == 10
        assert len(suite.variants) == 10
        total_rows = sum(v.shape[0] for v in suite.variants.values())
        assert total_rows == 10 * images.n

    def test_variant_keys_unique_and_complete(self, images):
        suite = build_suite(images, ("gaussian_noise",), seed=2)
        assert set(suite.variants) == {("gaussian_noise", s) for s in SEVERITIES}

    def test_empty_type_list_rejected(self, images):
        with pytest.raises(ValueError):
            build_suite(images, (), seed=0)

    def test_deterministic(self, images):
        a = build_suite(images, ("impulse_noise",), seed=5)
        b = build_suite(images, ("impulse_noise",), seed=5)
        for key in a.variants:
            assert a.variants[key].tobytes() == b.variants[key].tobytes()

    def test_full_desk_suite_variant_count(self, images):
        suite = build_suite(images, CORRUPTION_TYPES, seed=1)
        assert suite.variants_per_sample == len(CORRUPTION_TYPES) * 5


class TestRobustness:
    def test_perfect_net_hits_max_count(self, identity_classifier):
        # identity classifier on constant one-hot-ish images; brightness
        # preserves the argmax ordering of the two pixels
        data = LabeledDataset(
            inputs=np.array([[0.9, 0.1], [0.05, 0.6]], dtype=np.float32),
            labels=np.array([0, 1]),
            sample_ids=("a", "b"),
            class_count=2,
            image_shape=(1, 2),
        )
        suite = build_suite(data, ("brightness",), seed=3)
        records = per_sample_robustness(identity_classifier, suite)
        for r in records:
            assert r.correct_count == r.max_count == 5

    def test_constant_output_net_counts_exactly(self):
        # net always predicts class 0: correct only on class-0 variants
        spec = NetworkSpec(layer_sizes=(4, 2), seed=0, hidden_bias=False)
        w = np.array([[1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 0.0]], dtype=np.float32)
        # class-1 logit is always 0 < class-0 logit for positive images... but
        # make class-0 logit strictly positive by keeping pixels >= 0.05
        net = nn.Network(spec=spec, layers=(Layer(weights=w, bias=None, mask=np.ones_like(w)),))
        rng = np.random.default_rng(8)
        inputs = (rng.random((10, 4)) * 0.8 + 0.1).astype(np.float32)
        labels = np.array([0, 1] * 5)
        data = LabeledDataset(
            inputs=inputs,
            labels=labels,
            sample_ids=tuple(f"s{i}" for i in range(10)),
            class_count=2,
            image_shape=(2, 2),
        )
        suite = build_suite(data, ("brightness", "contrast"), seed=1)
        records = per_sample_robustness(net, suite)
        # brute-force oracle
        for idx, rec in enumerate(records):
            expected = 0
            for key in suite.variants:
                pred = nn.predict(net, suite.variants[key][idx : idx + 1])[0]
                expected += int(pred == labels[idx])
            assert rec.correct_count == expected
        assert aggregate_robustness(records) == 5 * 10  # class-0 half always right

    def test_class_mismatch_rejected(self, images):
        suite = build_suite(images, ("brightness",), seed=1)
        net = nn.init_network(NetworkSpec(layer_sizes=(64, 8, 3), seed=1))
        with pytest.raises(ValueError):
            per_sample_robustness(net, suite)


class TestArchive:
    def test_round_trip_exact(self, images, tmp_path):
        suite = build_suite(images, ("gaussian_noise", "pixelate"), seed=6)
        export_archive(suite, tmp_path / "arc")
        back = ingest_archive(tmp_path / "arc")
        assert back.sample_ids == suite.sample_ids
        assert np.array_equal(back.labels, suite.labels)
        for key in suite.variants:
            assert back.variants[key].tobytes() == suite.variants[key].tobytes()

    def test_missing_severity_named_in_error(self, images, tmp_path):
        suite = build_suite(images, ("brightness",), seed=1)
        export_archive(suite, tmp_path / "arc")
        manifest = json.loads((tmp_path / "arc" / "manifest.json").read_text())
        manifest["arrays"] = [a for a in manifest["arrays"] if a["severity"] != 3]
        (tmp_path / "arc" / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ArchiveError, match=r"brightness.*3"):
            ingest_archive(tmp_path / "arc")

    def test_truncated_file_reports_byte_counts(self, images, tmp_path):
        suite = build_suite(images, ("brightness",), seed=1)
        export_archive(suite, tmp_path / "arc")
        target = tmp_path / "arc" / "brightness_s2.bin"
        target.write_bytes(target.read_bytes()[:-8])
        with pytest.raises(ArchiveError, match=r"bytes"):
            ingest_archive(tmp_path / "arc")

    def test_out_of_range_pixels_rejected(self, images, tmp_path):
        suite = build_suite(images, ("brightness",), seed=1)
        export_archive(suite, tmp_path / "arc")
        target = tmp_path / "arc" / "brightness_s1.bin"
        arr = np.frombuffer(target.read_bytes(), dtype="<f4").copy()
        arr[0] = 2.5
        target.write_bytes(arr.tobytes())
        with pytest.raises(ArchiveError, match=r"\[0, 1\]"):
            ingest_archive(tmp_path / "arc")

    def test_nineteen_type_archive_gives_95_variants(self, tmp_path):
        """External archives may carry corruption types we do not implement."""
        n, h, w = 3, 2, 2
        rng = np.random.default_rng(0)
        types = tuple(f"external_{i:02d}" for i in range(19))
        variants = {
            (t, s): rng.random((n, h * w)).astype(np.float32)
            for t in types
            for s in SEVERITIES
        }
        suite = CorruptedDataset(
            base_dataset_id="ext",
            sample_ids=("a", "b", "c"),
            labels=np.array([0, 1, 0]),
            class_count=2,
            image_shape=(h, w),
            types=types,
            variants=variants,
        )
        export_archive(suite, tmp_path / "arc")
        back = ingest_archive(tmp_path / "arc")
        assert back.variants_per_sample == 95
        net = nn.init_network(NetworkSpec(layer_sizes=(4, 2), seed=1, hidden_bias=False))
        records = per_sample_robustness(net, back)
        assert all(r.max_count == 95 for r in records)
