"""Registry persistence, aggregation oracles, trajectories, subsets."""

import numpy as np
import pytest

from prunescope import nn, synth
from prunescope.corruption import build_suite, per_sample_robustness
from prunescope.geometry import GeometrySample, GeometrySnapshot, geometry_snapshot
from prunescope.nn import NetworkSpec
from prunescope.pruning import apply_mask, prune_magnitude
from prunescope.registry import (
    Combination,
    DuplicateCombination,
    MissingSnapshot,
    Registry,
    RegistryError,
    SubsetSelection,
    corrupted_dataset_id,
    join_trajectories,
    metric_difference_select,
    parse_corrupted_id,
)


def build_registry(tmp_path, n=60, types=("brightness", "gaussian_noise")):
    """Two combinations (dense, magnitude-pruned) with clean + corrupted snapshots."""
    registry = Registry(tmp_path / "reg")
    train_data = synth.pattern_images(n, seed=99, noise_high=0.9, id_prefix="t")
    data = synth.pattern_images(n, seed=12, noise_high=0.9)
    spec = NetworkSpec(layer_sizes=(64, 16, 4), seed=3)
    dense = nn.train(
        nn.init_network(spec),
        train_data,
        nn.TrainConfig(learning_rate=0.4, epochs=25, batch_size=min(20, n), seed=1),
    )
    pruned = apply_mask(dense, prune_magnitude(dense, 0.5))
    suite = build_suite(data, types, seed=7)

    nets = {}
    for combo_id, net, method, rate in (
        ("dense", dense, "none", 0.0),
        ("mag50", pruned, "magnitude", 0.5),
    ):
        clean = geometry_snapshot(net, data, combination_id=combo_id, dataset_id="clean")
        combo = Combination(
            id=combo_id,
            architecture="mlp-64-16-4",
            method=method,
            prune_rate=rate,
            dataset_id="clean",
            clean_accuracy=clean.accuracy(),
        )
        registry.register(combo, net, snapshots=(clean,))
        for ctype in types:
            for severity in (1, 2, 3, 4, 5):
                variant = suite.variant_dataset(ctype, severity)
                snap = geometry_snapshot(
                    net, variant, combination_id=combo_id,
                    dataset_id=corrupted_dataset_id(ctype, severity),
                )
                registry.add_snapshot(combo_id, snap)
        nets[combo_id] = net
    return registry, data, suite, nets


@pytest.fixture(scope="module")
def populated(tmp_path_factory):
    return build_registry(tmp_path_factory.mktemp("registry"))


class TestRegistration:
    def test_register_then_list(self, populated):
        registry, *_ = populated
        ids = [c.id for c in registry.list_combinations()]
        assert ids == ["dense", "mag50"]

    def test_duplicate_id_rejected(self, populated):
        registry, data, _, nets = populated
        combo = Combination(
            id="dense", architecture="x", method="none", prune_rate=0.0,
            dataset_id="clean", clean_accuracy=0.5,
        )
        with pytest.raises(DuplicateCombination):
            registry.register(combo, nets["dense"])

    def test_round_trip_after_restart_is_byte_identical(self, populated):
        registry, *_ = populated
        fresh = Registry(registry.root)  # simulates a new process
        for combo in fresh.list_combinations():
            for dataset_id in fresh.snapshot_ids(combo.id):
                entry_file = registry._combo_dir(combo.id) / fresh._snapshot_filename(dataset_id)
                raw_before = entry_file.read_bytes()
                snap = fresh.load_snapshot(combo.id, dataset_id)
                assert snap.dataset_id == dataset_id
                assert entry_file.read_bytes() == raw_before

    def test_network_round_trip(self, populated):
        registry, data, _, nets = populated
        back = registry.load_network("mag50")
        for a, b in zip(back.layers, nets["mag50"].layers):
            assert a.weights.tobytes() == b.weights.tobytes()

    def test_duplicate_snapshot_rejected(self, populated):
        registry, data, _, nets = populated
        snap = geometry_snapshot(nets["dense"], data, "dense", "clean")
        with pytest.raises(RegistryError):
            registry.add_snapshot("dense", snap)

    def test_missing_snapshot_error(self, populated):
        registry, *_ = populated
        with pytest.raises(MissingSnapshot):
            registry.load_snapshot("dense", "fog:s1")

    def test_hash_tamper_detected(self, tmp_path):
        registry, *_ = build_registry(tmp_path, n=10, types=("brightness",))
        target = registry._combo_dir("dense") / "checkpoint.bin"
        raw = bytearray(target.read_bytes())
        raw[-1] ^= 0x01
        target.write_bytes(bytes(raw))
        with pytest.raises(Exception):
            registry.load_network("dense")


class TestEvaluationTable:
    def test_cells_match_exhaustive_recount(self, populated):
        registry, data, suite, nets = populated
        combos = registry.list_combinations()
        table = registry.evaluation_table(combos, list(suite.types))
        for combo in combos:
            net = nets[combo.id]
            # clean row
            clean_acc = nn.accuracy(net, data)
            assert table.rows["clean"].cells[combo.method][combo.prune_rate] == pytest.approx(clean_acc)
            # corruption rows: severity-averaged recount
            for ctype in suite.types:
                accs = []
                for severity in (1, 2, 3, 4, 5):
                    variant = suite.variant_dataset(ctype, severity)
                    accs.append(nn.accuracy(net, variant))
                want = float(np.mean(accs))
                assert table.rows[ctype].cells[combo.method][combo.prune_rate] == pytest.approx(want)

    def test_subset_recount(self, populated):
        registry, data, suite, nets = populated
        rng = np.random.default_rng(5)
        ids = list(data.sample_ids)
        subset_ids = sorted(rng.choice(ids, size=15, replace=False).tolist())
        subset = SubsetSelection(id="tmp", sample_ids=tuple(subset_ids))
        combos = registry.list_combinations()
        table = registry.evaluation_table(combos, ["brightness"], subset=subset)
        # oracle: recount correctness over the subset from raw predictions
        by_id = {sid: i for i, sid in enumerate(data.sample_ids)}
        for combo in combos:
            net = nets[combo.id]
            preds = nn.predict(net, data.inputs)
            hits = [preds[by_id[s]] == data.labels[by_id[s]] for s in subset_ids]
            assert table.rows["clean"].cells[combo.method][combo.prune_rate] == pytest.approx(
                float(np.mean(hits))
            )

    def test_ranking_orders_by_max_accuracy(self, populated):
        registry, data, suite, _ = populated
        table = registry.evaluation_table(registry.list_combinations(), list(suite.types))
        for row in table.rows.values():
            best = [max(row.cells[m].values()) for m in row.ranking]
            assert best == sorted(best, reverse=True)

    def test_ranking_stable_under_registration_order(self, populated):
        registry, data, suite, _ = populated
        combos = registry.list_combinations()
        a = registry.evaluation_table(combos, list(suite.types))
        b = registry.evaluation_table(list(reversed(combos)), list(suite.types))
        for key in a.rows:
            assert a.rows[key].ranking == b.rows[key].ranking

    def test_per_severity_rows(self, populated):
        registry, _, suite, _ = populated
        table = registry.evaluation_table(
            registry.list_combinations(), ["brightness"], per_severity=True
        )
        assert set(table.rows) == {"clean"} | {f"brightness:s{s}" for s in (1, 2, 3, 4, 5)}

    def test_duplicate_method_rate_rejected(self, populated):
        registry, *_ = populated
        combos = registry.list_combinations()
        with pytest.raises(RegistryError):
            registry.evaluation_table(combos + [combos[0]], ["brightness"])

    def test_missing_cell_raises(self, populated):
        registry, *_ = populated
        with pytest.raises(MissingSnapshot):
            registry.evaluation_table(registry.list_combinations(), ["occlusion"])


class TestSubsetDelta:
    def test_paper_example_plus_five_points(self, populated):
        registry, data, suite, nets = populated
        combos = registry.list_combinations()
        full = registry.evaluation_table(combos, ["brightness"])
        # choose only correctly-predicted dense samples: subset accuracy 1.0
        snap = registry.load_snapshot("dense", "clean")
        good = tuple(s.sample_id for s in snap.samples if s.correct)
        subset = SubsetSelection(id="good", sample_ids=good)
        sub = registry.evaluation_table(combos, ["brightness"], subset=subset)
        deltas = Registry.subset_delta(full, sub)
        dense_rate = combos[0].prune_rate if combos[0].id == "dense" else combos[1].prune_rate
        full_acc = full.rows["clean"].cells["none"][dense_rate]
        assert deltas["clean"]["none"][dense_rate] == pytest.approx(1.0 - full_acc)

    def test_subset_equal_to_full_gives_zero(self, populated):
        registry, data, suite, _ = populated
        combos = registry.list_combinations()
        full = registry.evaluation_table(combos, ["brightness"])
        subset = SubsetSelection(id="all", sample_ids=data.sample_ids)
        sub = registry.evaluation_table(combos, ["brightness"], subset=subset)
        deltas = Registry.subset_delta(full, sub)
        for row in deltas.values():
            for cells in row.values():
                for d in cells.values():
                    assert d == pytest.approx(0.0, abs=1e-12)

    def test_misclassified_subset_delta_is_minus_full(self, populated):
        registry, data, suite, _ = populated
        combos = registry.list_combinations()
        snap = registry.load_snapshot("dense", "clean")
        bad = tuple(s.sample_id for s in snap.samples if not s.correct)
        if not bad:
            pytest.skip("dense model is perfect on this draw")
        full = registry.evaluation_table(combos, [])
        sub = registry.evaluation_table(combos, [], subset=SubsetSelection(id="bad", sample_ids=bad))
        deltas = Registry.subset_delta(full, sub)
        rate = next(c.prune_rate for c in combos if c.id == "dense")
        assert deltas["clean"]["none"][rate] == pytest.approx(
            0.0 - full.rows["clean"].cells["none"][rate]
        )


def make_sample(sid, correct, angle=30.0, length=2.0, margin=1.0, label=0, c=3):
    return GeometrySample(
        sample_id=sid,
        true_label=label,
        predicted_label=label if correct else (label + 1) % c,
        angles=np.array([angle] * c),
        length=length,
        margin=margin if correct else -abs(margin),
        correct=correct,
        degenerate=False,
    )


def snap_of(samples, dataset="clean", c=3):
    return GeometrySnapshot(
        combination_id="x", dataset_id=dataset, samples=tuple(samples),
        class_count=c, created_at="t",
    )


class TestTrajectories:
    def test_identical_snapshots_zero_deltas(self, populated):
        registry, *_ = populated
        result = registry.trajectories("dense", "dense", class_label=1, dataset_id="clean")
        for pair in result.pairs:
            assert pair.category in ("both_correct", "both_wrong")
            assert pair.cmp.length == pair.ref.length
            assert pair.cmp.margin == pair.ref.margin

    def test_categories_partition_class_population(self, populated):
        registry, data, *_ = populated
        result = registry.trajectories("dense", "mag50", class_label=2, dataset_id="clean")
        class_n = int(np.sum(data.labels == 2))
        assert len(result.pairs) == class_n
        assert result.missing_in_ref == () and result.missing_in_cmp == ()
        by_cat = {}
        for p in result.pairs:
            by_cat[p.category] = by_cat.get(p.category, 0) + 1
        assert sum(by_cat.values()) == class_n

    def test_four_category_fixture(self):
        ref = snap_of([
            make_sample("a", True), make_sample("b", True),
            make_sample("c", False), make_sample("d", False),
        ])
        cmp = snap_of([
            make_sample("a", True), make_sample("b", False),
            make_sample("c", True), make_sample("d", False),
        ])
        result = join_trajectories(ref, cmp, class_label=0)
        cats = {p.sample_id: p.category for p in result.pairs}
        assert cats == {
            "a": "both_correct",
            "b": "ref_correct_only",
            "c": "cmp_correct_only",
            "d": "both_wrong",
        }

    def test_missing_ids_reported(self):
        ref = snap_of([make_sample("a", True), make_sample("b", True)])
        cmp = snap_of([make_sample("a", True), make_sample("z", True)])
        result = join_trajectories(ref, cmp, class_label=0)
        assert [p.sample_id for p in result.pairs] == ["a"]
        assert result.missing_in_cmp == ("b",)
        assert result.missing_in_ref == ("z",)

    def test_dataset_mismatch_rejected(self):
        ref = snap_of([make_sample("a", True)], dataset="clean")
        cmp = snap_of([make_sample("a", True)], dataset="brightness:s1")
        with pytest.raises(ValueError):
            join_trajectories(ref, cmp, class_label=0)


class TestMetricDifferenceSelect:
    def _pairs(self):
        ref = snap_of([
            make_sample("a", True, angle=30.0, length=2.0, margin=1.0),
            make_sample("b", True, angle=50.0, length=1.0, margin=0.5),
            make_sample("c", True, angle=40.0, length=3.0, margin=2.0),
        ])
        cmp = snap_of([
            make_sample("a", True, angle=20.0, length=2.5, margin=1.5),   # angle decreased
            make_sample("b", True, angle=60.0, length=0.5, margin=0.25),  # angle increased
            make_sample("c", True, angle=40.0, length=3.0, margin=2.0),   # unchanged
        ])
        return join_trajectories(ref, cmp, class_label=0).pairs

    def test_decreased_angle_selection(self):
        sel = metric_difference_select(self._pairs(), "angle_true", "decreased")
        assert sel.sample_ids == ("a",)
        assert sel.warning is None

    def test_abs_threshold_zero_selects_all(self):
        sel = metric_difference_select(self._pairs(), "angle_true", "abs_at_least", threshold=0.0)
        assert sel.sample_ids == ("a", "b", "c")

    def test_increase_decrease_unchanged_partition(self):
        pairs = self._pairs()
        inc = set(metric_difference_select(pairs, "margin", "increased").sample_ids)
        dec = set(metric_difference_select(pairs, "margin", "decreased").sample_ids)
        everything = set(metric_difference_select(pairs, "margin", "abs_at_least", threshold=0.0).sample_ids)
        unchanged = everything - inc - dec
        assert inc | dec | unchanged == {"a", "b", "c"}
        assert inc.isdisjoint(dec)

    def test_empty_selection_carries_warning(self):
        sel = metric_difference_select(self._pairs(), "length", "abs_at_least", threshold=100.0)
        assert sel.sample_ids == ()
        assert sel.warning is not None


class TestSubsets:
    def test_create_and_get(self, populated):
        registry, data, *_ = populated
        subset = registry.create_subset(data.sample_ids[:5], note="first five")
        back = registry.get_subset(subset.id)
        assert back.sample_ids == subset.sample_ids
        assert back.note == "first five"

    def test_unknown_sample_id_rejected(self, populated):
        registry, *_ = populated
        with pytest.raises(RegistryError, match="bogus"):
            registry.create_subset(("bogus",))

    def test_unknown_subset_id(self, populated):
        registry, *_ = populated
        with pytest.raises(RegistryError):
            registry.get_subset("subset-9999")


class TestRobustnessRecords:
    def test_matches_direct_per_sample_robustness(self, populated):
        registry, data, suite, nets = populated
        records = registry.robustness_records("dense")
        direct = per_sample_robustness(nets["dense"], suite)
        direct_by_id = {r.sample_id: r for r in direct}
        assert len(records) == len(direct)
        for rec in records:
            assert rec.correct_count == direct_by_id[rec.sample_id].correct_count
            assert rec.max_count == direct_by_id[rec.sample_id].max_count


class TestParseDatasetIds:
    def test_round_trip(self):
        assert parse_corrupted_id(corrupted_dataset_id("gaussian_noise", 3)) == ("gaussian_noise", 3)

    def test_clean_ids_pass_through(self):
        assert parse_corrupted_id("clean") is None
        assert parse_corrupted_id("test-set") is None
