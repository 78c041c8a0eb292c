"""File-backed store of model combinations and their geometry snapshots.

Layout under the registry root:

    <combo-id>/manifest.json          combination record + content hashes
    <combo-id>/checkpoint.bin         network weights/masks
    <combo-id>/snapshot-<dataset>.bin geometry snapshot per dataset
    subsets/<subset-id>.json          brushed sample-id selections

Snapshots are immutable once written; every load verifies the sha256
recorded in the manifest.  Mutations go through write-to-temp plus atomic
rename, so concurrent readers never observe a partial artifact.

Dataset naming: the clean dataset keeps the combination's dataset id;
corrupted snapshots use "<type>:s<severity>" (e.g. "gaussian_noise:s3").
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corruption import SEVERITIES, RobustnessRecord
from .geometry import GeometrySample, GeometrySnapshot
from .nn import Network
from .serialization import (
    load_checkpoint,
    load_snapshot,
    save_checkpoint,
    save_snapshot,
    sha256_file,
)

PRUNING_METHODS = ("none", "random", "magnitude", "taylor", "mpt")

TRAJECTORY_CATEGORIES = ("both_correct", "both_wrong", "ref_correct_only", "cmp_correct_only")

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$")


class RegistryError(ValueError):
    pass


class DuplicateCombination(RegistryError):
    pass


class MissingSnapshot(RegistryError):
    pass


def corrupted_dataset_id(ctype: str, severity: int) -> str:
    return f"{ctype}:s{severity}"


def parse_corrupted_id(dataset_id: str) -> tuple[str, int] | None:
    """Split "<type>:s<severity>" ids; None for clean/base datasets."""
    if ":" not in dataset_id:
        return None
    ctype, _, tail = dataset_id.rpartition(":")
    if not tail.startswith("s"):
        return None
    try:
        return ctype, int(tail[1:])
    except ValueError:
        return None


@dataclass(frozen=True)
class Combination:
    """One registered (architecture, pruning method, rate, dataset) model."""

    id: str
    architecture: str
    method: str
    prune_rate: float
    dataset_id: str
    clean_accuracy: float
    checkpoint_path: str = ""

    def __post_init__(self):
        if not _ID_RE.match(self.id):
            raise ValueError(f"invalid combination id {self.id!r}")
        if self.method not in PRUNING_METHODS:
            raise ValueError(f"method must be one of {PRUNING_METHODS}, got {self.method!r}")
        if not (0.0 <= self.prune_rate < 1.0):
            raise ValueError(f"prune_rate must be in [0, 1), got {self.prune_rate}")
        if not (0.0 <= self.clean_accuracy <= 1.0):
            raise ValueError(f"clean_accuracy must be in [0, 1], got {self.clean_accuracy}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "architecture": self.architecture,
            "method": self.method,
            "prune_rate": self.prune_rate,
            "dataset_id": self.dataset_id,
            "clean_accuracy": self.clean_accuracy,
            "checkpoint_path": self.checkpoint_path,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Combination":
        return cls(
            id=obj["id"],
            architecture=obj["architecture"],
            method=obj["method"],
            prune_rate=float(obj["prune_rate"]),
            dataset_id=obj["dataset_id"],
            clean_accuracy=float(obj["clean_accuracy"]),
            checkpoint_path=obj.get("checkpoint_path", ""),
        )


@dataclass(frozen=True)
class SubsetSelection:
    """An explicit brushed set of sample ids with a provenance note.

    Empty selections are only legal when flagged with a warning (a
    metric-difference brush may legitimately match nothing).
    """

    id: str
    sample_ids: tuple[str, ...]
    note: str = ""
    warning: str | None = None

    def __post_init__(self):
        ids = tuple(sorted(set(str(s) for s in self.sample_ids)))
        object.__setattr__(self, "sample_ids", ids)
        if not ids and self.warning is None:
            raise ValueError("subset selection must be non-empty (or carry a warning)")


@dataclass(frozen=True)
class EvaluationRow:
    """One corruption row: accuracy per (method, rate) plus the method ranking."""

    cells: dict[str, dict[float, float]]
    ranking: tuple[str, ...]


@dataclass(frozen=True)
class EvaluationTable:
    """Accuracy histograms (accuracy vs prune rate) per corruption row."""

    rates: tuple[float, ...]
    rows: dict[str, EvaluationRow]
    subset_id: str | None = None


@dataclass(frozen=True)
class TrajectoryPair:
    """One sample's geometry in a reference and a compared model."""

    sample_id: str
    ref: GeometrySample
    cmp: GeometrySample
    category: str

    def __post_init__(self):
        expected = _categorize(self.ref.correct, self.cmp.correct)
        if self.category != expected:
            raise ValueError(
                f"category {self.category!r} inconsistent with correctness flags ({expected})"
            )


@dataclass(frozen=True)
class TrajectoryResult:
    pairs: tuple[TrajectoryPair, ...]
    missing_in_ref: tuple[str, ...]
    missing_in_cmp: tuple[str, ...]


def _categorize(ref_correct: bool, cmp_correct: bool) -> str:
    if ref_correct and cmp_correct:
        return "both_correct"
    if ref_correct:
        return "ref_correct_only"
    if cmp_correct:
        return "cmp_correct_only"
    return "both_wrong"


def join_trajectories(
    ref: GeometrySnapshot, cmp: GeometrySnapshot, class_label: int
) -> TrajectoryResult:
    """Pair the two snapshots' samples of one class by sample id.

    Ids present on only one side are reported, never silently dropped.
    """
    if ref.dataset_id != cmp.dataset_id:
        raise ValueError(
            f"snapshots cover different datasets: {ref.dataset_id!r} vs {cmp.dataset_id!r}"
        )
    if ref.class_count != cmp.class_count:
        raise ValueError("snapshots have different class counts")
    if not (0 <= class_label < ref.class_count):
        raise ValueError(f"class label {class_label} out of range [0, {ref.class_count})")
    ref_samples = {s.sample_id: s for s in ref.samples if s.true_label == class_label}
    cmp_samples = {s.sample_id: s for s in cmp.samples if s.true_label == class_label}
    shared = sorted(set(ref_samples) & set(cmp_samples))
    pairs = tuple(
        TrajectoryPair(
            sample_id=sid,
            ref=ref_samples[sid],
            cmp=cmp_samples[sid],
            category=_categorize(ref_samples[sid].correct, cmp_samples[sid].correct),
        )
        for sid in shared
    )
    return TrajectoryResult(
        pairs=pairs,
        missing_in_ref=tuple(sorted(set(cmp_samples) - set(ref_samples))),
        missing_in_cmp=tuple(sorted(set(ref_samples) - set(cmp_samples))),
    )


def _pair_delta(pair: TrajectoryPair, metric: str) -> float | None:
    """cmp - ref for one metric; None when either side is degenerate."""
    if pair.ref.degenerate or pair.cmp.degenerate:
        return None
    if metric == "angle_true":
        return pair.cmp.angle_to_true - pair.ref.angle_to_true
    if metric == "length":
        return pair.cmp.length - pair.ref.length
    if metric == "margin":
        return pair.cmp.margin - pair.ref.margin
    raise ValueError(f"unknown metric {metric!r}")


def metric_difference_select(
    pairs,
    metric: str,
    predicate: str,
    threshold: float | None = None,
    subset_id: str = "unsaved",
    note: str = "",
) -> SubsetSelection:
    """Select sample ids whose metric delta (cmp - ref) matches the predicate.

    Predicates: "increased" (delta > 0), "decreased" (delta < 0),
    "abs_at_least" (|delta| >= threshold).  Degenerate pairs never match.
    """
    if predicate not in ("increased", "decreased", "abs_at_least"):
        raise ValueError(f"unknown predicate {predicate!r}")
    if predicate == "abs_at_least" and threshold is None:
        raise ValueError("predicate 'abs_at_least' needs a threshold")
    selected = []
    for pair in pairs:
        delta = _pair_delta(pair, metric)
        if delta is None:
            continue
        if (
            (predicate == "increased" and delta > 0)
            or (predicate == "decreased" and delta < 0)
            or (predicate == "abs_at_least" and abs(delta) >= threshold)
        ):
            selected.append(pair.sample_id)
    warning = None if selected else f"no samples matched {metric} {predicate}"
    if not note:
        note = f"metric difference: {metric} {predicate}" + (
            f" >= {threshold}" if predicate == "abs_at_least" else ""
        )
    return SubsetSelection(id=subset_id, sample_ids=tuple(selected), note=note, warning=warning)


def _snapshot_accuracy(snap: GeometrySnapshot, subset: SubsetSelection | None) -> float:
    if subset is None:
        return snap.accuracy()
    by_id = snap.by_id()
    missing = [sid for sid in subset.sample_ids if sid not in by_id]
    if missing:
        raise RegistryError(f"subset ids missing from snapshot {snap.dataset_id!r}: {missing[:5]}")
    hits = [by_id[sid].correct for sid in subset.sample_ids]
    return float(np.mean(hits))


class Registry:
    """Single-writer, many-reader store rooted at a directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._subset_lock = threading.Lock()

    # -- paths ------------------------------------------------------------

    def _combo_dir(self, combo_id: str) -> Path:
        return self.root / combo_id

    def _manifest_path(self, combo_id: str) -> Path:
        return self._combo_dir(combo_id) / "manifest.json"

    @staticmethod
    def _snapshot_filename(dataset_id: str) -> str:
        return "snapshot-" + re.sub(r"[^A-Za-z0-9_.\-]", "_", dataset_id) + ".bin"

    # -- registration -------------------------------------------------------

    def register(
        self,
        combination: Combination,
        network: Network,
        snapshots: tuple[GeometrySnapshot, ...] = (),
    ) -> str:
        """Persist a combination, its checkpoint, and initial snapshots."""
        combo_dir = self._combo_dir(combination.id)
        if combo_dir.exists():
            raise DuplicateCombination(f"combination {combination.id!r} already registered")
        staging = self.root / f".staging-{combination.id}"
        if staging.exists():
            raise RegistryError(f"stale staging directory {staging}; remove it first")
        staging.mkdir(parents=True)
        try:
            save_checkpoint(network, staging / "checkpoint.bin")
            snapshot_entries = {}
            for snap in snapshots:
                fname = self._snapshot_filename(snap.dataset_id)
                save_snapshot(snap, staging / fname)
                snapshot_entries[snap.dataset_id] = {
                    "file": fname,
                    "sha256": sha256_file(staging / fname),
                }
            combination = Combination.from_json(
                {**combination.to_json(), "checkpoint_path": f"{combination.id}/checkpoint.bin"}
            )
            manifest = {
                "combination": combination.to_json(),
                "checkpoint": {
                    "file": "checkpoint.bin",
                    "sha256": sha256_file(staging / "checkpoint.bin"),
                },
                "snapshots": snapshot_entries,
            }
            (staging / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
            os.rename(staging, combo_dir)
        except Exception:
            for f in staging.glob("*"):
                f.unlink()
            if staging.exists():
                staging.rmdir()
            raise
        return combination.id

    def add_snapshot(self, combo_id: str, snap: GeometrySnapshot) -> None:
        """Attach one more snapshot to an existing combination."""
        manifest = self._load_manifest(combo_id)
        if snap.dataset_id in manifest["snapshots"]:
            raise RegistryError(
                f"combination {combo_id!r} already has a snapshot for {snap.dataset_id!r}"
            )
        fname = self._snapshot_filename(snap.dataset_id)
        fpath = self._combo_dir(combo_id) / fname
        save_snapshot(snap, fpath)
        manifest["snapshots"][snap.dataset_id] = {"file": fname, "sha256": sha256_file(fpath)}
        tmp = self._manifest_path(combo_id).with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        os.replace(tmp, self._manifest_path(combo_id))

    # -- loading ------------------------------------------------------------

    def _load_manifest(self, combo_id: str) -> dict:
        path = self._manifest_path(combo_id)
        if not path.exists():
            raise RegistryError(f"unknown combination {combo_id!r}")
        return json.loads(path.read_text())

    def list_combinations(self) -> list[Combination]:
        combos = []
        for entry in sorted(self.root.iterdir()):
            if entry.is_dir() and (entry / "manifest.json").exists():
                combos.append(Combination.from_json(json.loads((entry / "manifest.json").read_text())["combination"]))
        return combos

    def get_combination(self, combo_id: str) -> Combination:
        return Combination.from_json(self._load_manifest(combo_id)["combination"])

    def load_network(self, combo_id: str) -> Network:
        manifest = self._load_manifest(combo_id)
        path = self._combo_dir(combo_id) / manifest["checkpoint"]["file"]
        if sha256_file(path) != manifest["checkpoint"]["sha256"]:
            raise RegistryError(f"checkpoint hash mismatch for {combo_id!r}")
        return load_checkpoint(path)

    def snapshot_ids(self, combo_id: str) -> list[str]:
        return sorted(self._load_manifest(combo_id)["snapshots"])

    def load_snapshot(self, combo_id: str, dataset_id: str) -> GeometrySnapshot:
        manifest = self._load_manifest(combo_id)
        entry = manifest["snapshots"].get(dataset_id)
        if entry is None:
            raise MissingSnapshot(
                f"combination {combo_id!r} has no snapshot for dataset {dataset_id!r}"
            )
        path = self._combo_dir(combo_id) / entry["file"]
        if sha256_file(path) != entry["sha256"]:
            raise RegistryError(f"snapshot hash mismatch for {combo_id!r}/{dataset_id!r}")
        return load_snapshot(path)

    def corrupted_snapshots(self, combo_id: str) -> dict[tuple[str, int], GeometrySnapshot]:
        out = {}
        for dataset_id in self.snapshot_ids(combo_id):
            parsed = parse_corrupted_id(dataset_id)
            if parsed is not None:
                out[parsed] = self.load_snapshot(combo_id, dataset_id)
        return out

    # -- aggregations ---------------------------------------------------------

    def evaluation_table(
        self,
        combinations: list[Combination],
        corruptions: list[str],
        subset: SubsetSelection | None = None,
        per_severity: bool = False,
    ) -> EvaluationTable:
        """Accuracy per (corruption row, method, prune rate).

        Rows are "clean" plus one per corruption type (severity-averaged),
        or one per (type, severity) with `per_severity`.  Rankings order
        methods by their best accuracy in the row, ties by name.
        """
        if not combinations:
            raise RegistryError("need at least one combination")
        seen: set[tuple[str, float]] = set()
        for combo in combinations:
            key = (combo.method, combo.prune_rate)
            if key in seen:
                raise RegistryError(f"duplicate (method, rate) cell {key}")
            seen.add(key)
        rates = tuple(sorted({c.prune_rate for c in combinations}))

        row_keys = ["clean"]
        for ctype in corruptions:
            if per_severity:
                row_keys += [corrupted_dataset_id(ctype, s) for s in SEVERITIES]
            else:
                row_keys.append(ctype)

        rows: dict[str, EvaluationRow] = {}
        for row_key in row_keys:
            cells: dict[str, dict[float, float]] = {}
            for combo in combinations:
                acc = self.cell_accuracy(combo, row_key, subset)
                cells.setdefault(combo.method, {})[combo.prune_rate] = acc
            ranking = tuple(
                sorted(cells, key=lambda method: (-max(cells[method].values()), method))
            )
            rows[row_key] = EvaluationRow(cells=cells, ranking=ranking)
        return EvaluationTable(
            rates=rates, rows=rows, subset_id=subset.id if subset is not None else None
        )

    def cell_accuracy(
        self, combo: Combination, row_key: str, subset: SubsetSelection | None = None
    ) -> float:
        """Accuracy of one combination on one row ("clean", a corruption
        type averaged over severities, or an explicit "type:sN")."""
        if row_key == "clean":
            dataset_ids = [combo.dataset_id]
        elif parse_corrupted_id(row_key) is not None:
            dataset_ids = [row_key]
        else:
            dataset_ids = [corrupted_dataset_id(row_key, s) for s in SEVERITIES]
        accs = [
            _snapshot_accuracy(self.load_snapshot(combo.id, did), subset) for did in dataset_ids
        ]
        return float(np.mean(accs))

    @staticmethod
    def subset_delta(full: EvaluationTable, sub: EvaluationTable) -> dict:
        """Per-cell (subset accuracy - full accuracy)."""
        if set(full.rows) != set(sub.rows):
            raise RegistryError("tables cover different rows")
        deltas: dict[str, dict[str, dict[float, float]]] = {}
        for row_key, full_row in full.rows.items():
            sub_row = sub.rows[row_key]
            if set(full_row.cells) != set(sub_row.cells):
                raise RegistryError(f"row {row_key!r} covers different methods")
            deltas[row_key] = {
                method: {
                    rate: sub_row.cells[method][rate] - full_row.cells[method][rate]
                    for rate in full_row.cells[method]
                }
                for method in full_row.cells
            }
        return deltas

    def trajectories(
        self, ref_combo: str, cmp_combo: str, class_label: int, dataset_id: str
    ) -> TrajectoryResult:
        ref = self.load_snapshot(ref_combo, dataset_id)
        cmp = self.load_snapshot(cmp_combo, dataset_id)
        return join_trajectories(ref, cmp, class_label)

    def robustness_records(self, combo_id: str) -> list[RobustnessRecord]:
        """Per-sample correct counts across all stored corrupted snapshots."""
        corrupted = self.corrupted_snapshots(combo_id)
        if not corrupted:
            raise MissingSnapshot(f"combination {combo_id!r} has no corrupted snapshots")
        counts: dict[str, int] = {}
        for snap in corrupted.values():
            for s in snap.samples:
                counts[s.sample_id] = counts.get(s.sample_id, 0) + int(s.correct)
        max_count = len(corrupted)
        return [
            RobustnessRecord(sample_id=sid, correct_count=c, max_count=max_count)
            for sid, c in sorted(counts.items())
        ]

    # -- subsets -------------------------------------------------------------

    def _subsets_dir(self) -> Path:
        return self.root / "subsets"

    def create_subset(self, sample_ids, note: str = "") -> SubsetSelection:
        """Persist a brushed selection; ids must exist in a clean snapshot."""
        known = self._known_sample_ids()
        unknown = sorted(set(str(s) for s in sample_ids) - known)
        if unknown:
            raise RegistryError(f"unknown sample id(s): {unknown[:5]}")
        with self._subset_lock:
            self._subsets_dir().mkdir(exist_ok=True)
            existing = len(list(self._subsets_dir().glob("subset-*.json")))
            subset = SubsetSelection(
                id=f"subset-{existing + 1:04d}", sample_ids=tuple(sample_ids), note=note
            )
            path = self._subsets_dir() / f"{subset.id}.json"
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(
                json.dumps(
                    {"id": subset.id, "sample_ids": list(subset.sample_ids), "note": subset.note},
                    indent=2,
                    sort_keys=True,
                )
            )
            os.replace(tmp, path)
        return subset

    def get_subset(self, subset_id: str) -> SubsetSelection:
        path = self._subsets_dir() / f"{subset_id}.json"
        if not path.exists():
            raise RegistryError(f"unknown subset {subset_id!r}")
        obj = json.loads(path.read_text())
        return SubsetSelection(id=obj["id"], sample_ids=tuple(obj["sample_ids"]), note=obj.get("note", ""))

    def list_subsets(self) -> list[str]:
        if not self._subsets_dir().exists():
            return []
        return sorted(p.stem for p in self._subsets_dir().glob("subset-*.json"))

    def _known_sample_ids(self) -> set[str]:
        ids: set[str] = set()
        for combo in self.list_combinations():
            try:
                snap = self.load_snapshot(combo.id, combo.dataset_id)
            except MissingSnapshot:
                continue
            ids.update(snap.sample_ids())
        return ids
