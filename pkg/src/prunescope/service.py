"""Read-only JSON HTTP service over a registry.

Heavy computation (training, pruning, corruption suites) happens in the
CLI; this service serves precomputed snapshots plus cheap aggregations so
the browser workbench stays responsive.  Every response is a deterministic
function of registry state: payloads are rendered through canonical JSON
(sorted keys, no whitespace), and two identical requests return identical
bodies.  The only write path is POST /api/subsets, which creates subset
records and nothing else.

Endpoints:

    GET  /api/combinations
    GET  /api/evaluation-table?subset=&corruptions=&per_severity=
    GET  /api/snapshot/{combo}/{dataset}?class=
    GET  /api/trajectories?ref=&cmp=&class=&dataset=
    GET  /api/density?combo=&dataset=&class=&metric=&bins=
    GET  /api/correlations?combo=
    POST /api/subsets
    GET  /api/margin-shift?ref=&cmp=
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from fastapi import Body, FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware

from . import stats
from .geometry import GeometrySample, GeometrySnapshot
from .registry import (
    Combination,
    EvaluationTable,
    MissingSnapshot,
    Registry,
    RegistryError,
    TrajectoryResult,
    metric_difference_select,
    parse_corrupted_id,
)
from .serialization import canonical_json

REGISTRY_ENV_VAR = "PRUNESCOPE_REGISTRY"

METRICS = ("angle_true", "length", "margin")


@dataclass(frozen=True)
class ServiceConfig:
    registry_root: str
    host: str = "127.0.0.1"
    port: int = 8000
    allowed_origins: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not os.path.isdir(self.registry_root):
            raise ValueError(f"registry root {self.registry_root!r} does not exist")


def _finite_or_none(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


# --- payload builders (shared by endpoints and tests) ---------------------


def sample_payload(s: GeometrySample) -> dict:
    return {
        "sample_id": s.sample_id,
        "true_label": s.true_label,
        "predicted_label": s.predicted_label,
        "angles": [_finite_or_none(a) for a in s.angles],
        "angle_true": _finite_or_none(s.angle_to_true),
        "length": _finite_or_none(s.length),
        "margin": _finite_or_none(s.margin),
        "correct": s.correct,
        "degenerate": s.degenerate,
    }


def snapshot_payload(snap: GeometrySnapshot, class_label: int | None = None) -> dict:
    samples = snap.samples
    if class_label is not None:
        samples = tuple(s for s in samples if s.true_label == class_label)
    # accuracy of the returned view, so the UI can display per-class
    # accuracy without doing any counting of its own
    accuracy = (
        sum(1 for s in samples if s.correct) / len(samples) if samples else 0.0
    )
    return {
        "combination_id": snap.combination_id,
        "dataset_id": snap.dataset_id,
        "class_count": snap.class_count,
        "created_at": snap.created_at,
        "accuracy": accuracy,
        "class_label": class_label,
        "n": len(samples),
        "samples": [sample_payload(s) for s in samples],
    }


def combinations_payload(combos: list[Combination]) -> dict:
    return {"combinations": [c.to_json() for c in combos]}


def table_payload(table: EvaluationTable, deltas: dict | None = None) -> dict:
    rows = []
    for row_key, row in table.rows.items():
        entry = {
            "row": row_key,
            "ranking": list(row.ranking),
            "cells": {
                method: {f"{rate:g}": acc for rate, acc in sorted(cells.items())}
                for method, cells in row.cells.items()
            },
        }
        if deltas is not None:
            entry["deltas"] = {
                method: {f"{rate:g}": d for rate, d in sorted(cells.items())}
                for method, cells in deltas[row_key].items()
            }
        rows.append(entry)
    return {
        "rates": [f"{r:g}" for r in table.rates],
        "subset_id": table.subset_id,
        "rows": rows,
    }


def trajectories_payload(result: TrajectoryResult, class_label: int, dataset_id: str) -> dict:
    return {
        "class_label": class_label,
        "dataset_id": dataset_id,
        "n_pairs": len(result.pairs),
        "pairs": [
            {
                "sample_id": p.sample_id,
                "category": p.category,
                "ref": sample_payload(p.ref),
                "cmp": sample_payload(p.cmp),
            }
            for p in result.pairs
        ],
        "missing_in_ref": list(result.missing_in_ref),
        "missing_in_cmp": list(result.missing_in_cmp),
    }


def density_payload(curve: stats.DensityCurve, combo: str, dataset: str, class_label: int | None) -> dict:
    return {
        "combination_id": combo,
        "dataset_id": dataset,
        "class_label": class_label,
        "metric": curve.metric,
        "bin_edges": [float(e) for e in curve.bin_edges],
        "heights": [float(h) for h in curve.heights],
    }


def correlations_payload(report: stats.CorrelationReport, combo: str) -> dict:
    return {
        "combination_id": combo,
        "rc_angle": report.rc_angle,
        "rc_l2": report.rc_l2,
        "rc_margin": report.rc_margin,
        "n": report.n,
    }


def margin_shift_payload(registry: Registry, ref_id: str, cmp_id: str) -> dict:
    """Compare the two models' corruption-induced relative margin changes.

    Verdict "pass" means the reference model's median shift is at most the
    compared model's (the stability hypothesis holds); "warn" otherwise.
    """

    def side(combo_id: str) -> tuple[dict, float]:
        combo = registry.get_combination(combo_id)
        clean = registry.load_snapshot(combo_id, combo.dataset_id)
        corrupted = registry.corrupted_snapshots(combo_id)
        if not corrupted:
            raise MissingSnapshot(f"combination {combo_id!r} has no corrupted snapshots")
        result = stats.relative_margin_change(clean, corrupted)
        payload = {
            "combination_id": combo_id,
            "clean_accuracy": combo.clean_accuracy,
            "median": result.median,
            "n": int(result.values.size),
            "trimmed_low": result.trimmed_low,
            "trimmed_high": result.trimmed_high,
            "excluded_small_reference": result.excluded_small_reference,
            "density": {
                "bin_edges": [float(e) for e in result.curve.bin_edges],
                "heights": [float(h) for h in result.curve.heights],
            },
        }
        return payload, combo.clean_accuracy

    ref_payload, ref_acc = side(ref_id)
    cmp_payload, cmp_acc = side(cmp_id)
    gap = abs(ref_acc - cmp_acc)
    verdict = "pass" if ref_payload["median"] <= cmp_payload["median"] else "warn"
    return {
        "ref": ref_payload,
        "cmp": cmp_payload,
        "accuracy_gap": gap,
        "accuracy_matched": gap <= 0.02,
        "median_difference": cmp_payload["median"] - ref_payload["median"],
        "verdict": verdict,
    }


def metric_values(snap: GeometrySnapshot, metric: str, class_label: int | None):
    """Per-sample metric series, degenerate samples excluded."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    values = []
    for s in snap.samples:
        if s.degenerate:
            continue
        if class_label is not None and s.true_label != class_label:
            continue
        if metric == "angle_true":
            values.append(s.angle_to_true)
        elif metric == "length":
            values.append(s.length)
        else:
            values.append(s.margin)
    return values


def _registered_corruption_types(registry: Registry) -> list[str]:
    types = set()
    for combo in registry.list_combinations():
        for dataset_id in registry.snapshot_ids(combo.id):
            parsed = parse_corrupted_id(dataset_id)
            if parsed is not None:
                types.add(parsed[0])
    return sorted(types)


def create_app(config: ServiceConfig) -> FastAPI:
    registry = Registry(config.registry_root)
    app = FastAPI(title="prunescope", version="0.1.0")
    if config.allowed_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.allowed_origins),
            allow_methods=["GET", "POST"],
            allow_headers=["*"],
        )

    def respond(payload: dict) -> Response:
        return Response(content=canonical_json(payload), media_type="application/json")

    def fail(status: int, message: str):
        raise HTTPException(status_code=status, detail=message)

    @app.get("/api/combinations")
    def get_combinations():
        return respond(combinations_payload(registry.list_combinations()))

    @app.get("/api/evaluation-table")
    def get_evaluation_table(
        subset: str | None = Query(default=None),
        corruptions: str | None = Query(default=None),
        per_severity: bool = Query(default=False),
    ):
        combos = registry.list_combinations()
        if not combos:
            fail(404, "no combinations registered")
        types = corruptions.split(",") if corruptions else _registered_corruption_types(registry)
        try:
            full = registry.evaluation_table(combos, types, per_severity=per_severity)
            if subset is None:
                return respond(table_payload(full))
            selection = registry.get_subset(subset)
            sub = registry.evaluation_table(combos, types, subset=selection, per_severity=per_severity)
            deltas = Registry.subset_delta(full, sub)
            return respond(table_payload(sub, deltas=deltas))
        except MissingSnapshot as e:
            fail(404, str(e))
        except RegistryError as e:
            fail(400, str(e))

    @app.get("/api/snapshot/{combo}/{dataset}")
    def get_snapshot(combo: str, dataset: str, class_label: int | None = Query(default=None, alias="class")):
        try:
            snap = registry.load_snapshot(combo, dataset)
        except (MissingSnapshot, RegistryError) as e:
            fail(404, str(e))
        if class_label is not None and not (0 <= class_label < snap.class_count):
            fail(400, f"class {class_label} out of range [0, {snap.class_count})")
        return respond(snapshot_payload(snap, class_label))

    @app.get("/api/trajectories")
    def get_trajectories(
        ref: str,
        cmp: str,
        class_label: int = Query(alias="class"),
        dataset: str | None = Query(default=None),
    ):
        try:
            if dataset is None:
                dataset = registry.get_combination(ref).dataset_id
            result = registry.trajectories(ref, cmp, class_label, dataset)
        except (MissingSnapshot,) as e:
            fail(404, str(e))
        except (RegistryError, ValueError) as e:
            fail(400, str(e))
        return respond(trajectories_payload(result, class_label, dataset))

    @app.get("/api/density")
    def get_density(
        combo: str,
        dataset: str,
        metric: str,
        class_label: int | None = Query(default=None, alias="class"),
        bins: int | None = Query(default=None),
    ):
        if metric not in METRICS:
            fail(400, f"metric must be one of {METRICS}")
        try:
            snap = registry.load_snapshot(combo, dataset)
        except (MissingSnapshot, RegistryError) as e:
            fail(404, str(e))
        values = metric_values(snap, metric, class_label)
        if not values:
            fail(400, "no non-degenerate samples match the filter")
        curve = stats.density(values, bins=bins, metric=metric)
        return respond(density_payload(curve, combo, dataset, class_label))

    @app.get("/api/correlations")
    def get_correlations(combo: str):
        try:
            combination = registry.get_combination(combo)
            clean = registry.load_snapshot(combo, combination.dataset_id)
            records = registry.robustness_records(combo)
            report = stats.metric_robustness_correlations(clean, records)
        except (MissingSnapshot, RegistryError) as e:
            fail(404, str(e))
        except stats.UndefinedCorrelation as e:
            fail(400, str(e))
        return respond(correlations_payload(report, combo))

    @app.post("/api/subsets")
    def post_subset(body: dict = Body(...)):
        """Create a subset from explicit ids or from a metric-difference brush.

        Explicit form: {"sample_ids": [...], "note": ...}.  Brush form:
        {"metric_difference": {"ref": ..., "cmp": ..., "class": ...,
        "metric": ..., "predicate": ..., "threshold": ..., "dataset": ...}}.
        """
        sample_ids = body.get("sample_ids")
        brush = body.get("metric_difference")
        if brush is not None:
            try:
                dataset = brush.get("dataset") or registry.get_combination(brush["ref"]).dataset_id
                result = registry.trajectories(
                    brush["ref"], brush["cmp"], int(brush["class"]), dataset
                )
                selection = metric_difference_select(
                    result.pairs,
                    metric=brush["metric"],
                    predicate=brush["predicate"],
                    threshold=brush.get("threshold"),
                )
            except KeyError as e:
                fail(400, f"metric_difference body missing field {e}")
            except (MissingSnapshot, RegistryError, ValueError) as e:
                fail(400, str(e))
            if not selection.sample_ids:
                fail(400, selection.warning or "selection matched no samples")
            sample_ids = list(selection.sample_ids)
        if not isinstance(sample_ids, list) or not sample_ids:
            fail(400, "body must carry a non-empty 'sample_ids' list or a 'metric_difference' brush")
        try:
            subset = registry.create_subset(sample_ids, note=str(body.get("note", "")))
        except RegistryError as e:
            fail(400, str(e))
        return respond({"id": subset.id, "size": len(subset.sample_ids), "note": subset.note})

    @app.get("/api/margin-shift")
    def get_margin_shift(ref: str, cmp: str):
        try:
            payload = margin_shift_payload(registry, ref, cmp)
        except (MissingSnapshot, RegistryError) as e:
            fail(404, str(e))
        except ValueError as e:
            fail(400, str(e))
        return respond(payload)

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
