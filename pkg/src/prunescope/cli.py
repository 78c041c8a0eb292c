"""Command-line driver for the full pipeline.

Subcommands: train, prune, corrupt, snapshot, eval, correlate, rand-angle,
margin-shift, export, serve.  With --json every subcommand prints one
machine-readable JSON object on stdout; errors go to stderr with exit
code 1, usage problems exit with code 2.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from . import nn, pruning, service, stats, synth
from .corruption import DEFAULT_DESK_TYPES, SEVERITY_TABLES, build_suite, export_archive, ingest_archive
from .geometry import geometry_snapshot
from .registry import Combination, Registry, corrupted_dataset_id
from .serialization import canonical_json, load_checkpoint, load_dataset, save_checkpoint, save_dataset


def _emit(args, payload: dict, text: str = "") -> None:
    if args.json:
        print(canonical_json(payload))
    elif text:
        print(text)


def _load_spec(path: str) -> nn.NetworkSpec:
    return nn.NetworkSpec.from_json(json.loads(Path(path).read_text()))


def _cmd_train(args) -> int:
    spec = _load_spec(args.spec)
    data = load_dataset(args.data)
    if args.method == "sgd":
        cfg = nn.TrainConfig(
            learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed
        )
        net = nn.train(nn.init_network(spec), data, cfg)
        mask = pruning.PruneMask.from_network(net)
    else:  # biprop
        if args.rate is None:
            raise ValueError("--method biprop requires --rate")
        cfg = pruning.BipropConfig(
            prune_rate=args.rate, epochs=args.epochs, learning_rate=args.lr, seed=args.seed
        )
        net, mask = pruning.biprop_train(spec, data, cfg)
    save_checkpoint(net, args.out)
    acc = nn.accuracy(net, data)
    _emit(
        args,
        {
            "out": str(args.out),
            "method": args.method,
            "train_accuracy": acc,
            "sparsity": pruning.sparsity(mask),
        },
        f"wrote {args.out} (train accuracy {acc:.4f})",
    )
    return 0


def _cmd_prune(args) -> int:
    net = load_checkpoint(args.input)
    if args.method == "random":
        mask = pruning.prune_random(net, args.rate, seed=args.seed)
    elif args.method == "magnitude":
        mask = pruning.prune_magnitude(net, args.rate, scope=args.scope)
    elif args.method == "taylor":
        if not args.data:
            raise ValueError("--method taylor requires --data")
        data = load_dataset(args.data)
        scores = pruning.taylor_importance(net, data)
        mask = pruning.prune_by_scores(scores, args.rate, scope=args.scope)
    else:
        raise ValueError(f"unknown pruning method {args.method!r}")
    pruned = pruning.apply_mask(net, mask)
    save_checkpoint(pruned, args.out)
    s = pruning.sparsity(mask)
    _emit(
        args,
        {"out": str(args.out), "method": args.method, "rate": args.rate, "sparsity": s},
        f"wrote {args.out} (sparsity {s:.4f})",
    )
    return 0


def _cmd_corrupt(args) -> int:
    data = load_dataset(args.data)
    types = tuple(args.types.split(",")) if args.types else DEFAULT_DESK_TYPES
    suite = build_suite(data, types, seed=args.seed)
    export_archive(suite, args.out)
    _emit(
        args,
        {
            "out": str(args.out),
            "types": list(types),
            "variants_per_sample": suite.variants_per_sample,
            "n_samples": suite.n,
        },
        f"wrote {args.out} ({suite.variants_per_sample} variants per sample)",
    )
    return 0


def _cmd_snapshot(args) -> int:
    registry = Registry(args.registry)
    net = load_checkpoint(args.ckpt)
    added = []
    if args.register:
        if args.data is None:
            raise ValueError("--register requires --data for the clean snapshot")
        data = load_dataset(args.data)
        snap = geometry_snapshot(net, data, combination_id=args.combo, dataset_id=args.dataset_id)
        combo = Combination(
            id=args.combo,
            architecture=args.architecture,
            method=args.method,
            prune_rate=args.rate,
            dataset_id=args.dataset_id,
            clean_accuracy=snap.accuracy(),
        )
        registry.register(combo, net, snapshots=(snap,))
        added.append(args.dataset_id)
    elif args.data is not None:
        data = load_dataset(args.data)
        snap = geometry_snapshot(net, data, combination_id=args.combo, dataset_id=args.dataset_id)
        registry.add_snapshot(args.combo, snap)
        added.append(args.dataset_id)
    if args.suite:
        suite = ingest_archive(args.suite)
        for ctype in suite.types:
            for severity in (1, 2, 3, 4, 5):
                dataset_id = corrupted_dataset_id(ctype, severity)
                variant = suite.variant_dataset(ctype, severity)
                snap = geometry_snapshot(net, variant, combination_id=args.combo, dataset_id=dataset_id)
                registry.add_snapshot(args.combo, snap)
                added.append(dataset_id)
    if not added:
        raise ValueError("nothing to snapshot: pass --data and/or --suite")
    _emit(
        args,
        {"combo": args.combo, "snapshots_added": added},
        f"added {len(added)} snapshot(s) to {args.combo}",
    )
    return 0


def _cmd_eval(args) -> int:
    registry = Registry(args.registry)
    combo = registry.get_combination(args.combo)
    subset = registry.get_subset(args.subset) if args.subset else None
    acc = registry.cell_accuracy(combo, args.suite, subset)
    _emit(
        args,
        {"combo": args.combo, "suite": args.suite, "subset": args.subset, "accuracy": acc},
        f"{args.combo} on {args.suite}: accuracy {acc:.4f}",
    )
    return 0


def _cmd_correlate(args) -> int:
    registry = Registry(args.registry)
    combo = registry.get_combination(args.combo)
    clean = registry.load_snapshot(args.combo, combo.dataset_id)
    records = registry.robustness_records(args.combo)
    report = stats.metric_robustness_correlations(clean, records)
    _emit(
        args,
        service.correlations_payload(report, args.combo),
        f"rc_angle={report.rc_angle:+.4f} rc_l2={report.rc_l2:+.4f} "
        f"rc_margin={report.rc_margin:+.4f} (n={report.n})",
    )
    return 0


def _cmd_rand_angle(args) -> int:
    dims = [int(d) for d in args.dims.split(",")]
    result = stats.random_angle_experiment(dims, n_pairs=args.pairs, seed=args.seed)
    payload = {
        "n_pairs": args.pairs,
        "seed": args.seed,
        "entries": [
            {"dim": d, "mean_deg": m, "std_deg": s, "n_pairs": n} for d, m, s, n in result.entries
        ],
    }
    lines = [f"d={d:5d}  mean={m:7.3f}  std={s:6.3f}" for d, m, s, _ in result.entries]
    _emit(args, payload, "\n".join(lines))
    return 0


def _cmd_margin_shift(args) -> int:
    registry = Registry(args.registry)
    payload = service.margin_shift_payload(registry, args.ref, args.cmp)
    text = (
        f"ref {args.ref}: median {payload['ref']['median']:+.4f} | "
        f"cmp {args.cmp}: median {payload['cmp']['median']:+.4f} | "
        f"accuracy gap {payload['accuracy_gap']:.4f} "
        f"({'matched' if payload['accuracy_matched'] else 'NOT matched'}) | "
        f"verdict {payload['verdict'].upper()}"
    )
    _emit(args, payload, text)
    return 0


def _cmd_export(args) -> int:
    registry = Registry(args.registry)
    registry.get_combination(args.combo)  # validates existence
    src = Path(args.registry) / args.combo
    dst = Path(args.out)
    dst.mkdir(parents=True, exist_ok=True)
    copied = []
    for f in sorted(src.iterdir()):
        shutil.copy2(f, dst / f.name)
        copied.append(f.name)
    _emit(args, {"combo": args.combo, "out": str(dst), "files": copied}, f"exported {len(copied)} file(s) to {dst}")
    return 0


def _cmd_serve(args) -> int:
    config = service.ServiceConfig(
        registry_root=args.registry,
        host=args.host,
        port=args.port,
        allowed_origins=tuple(args.origins.split(",")) if args.origins else (),
    )
    service.serve(config)
    return 0


def _cmd_make_dataset(args) -> int:
    # convenience generator so the pipeline is drivable end to end from the CLI
    if args.kind == "blobs":
        data = synth.two_blobs(args.n, seed=args.seed)
    else:
        data = synth.pattern_images(args.n, seed=args.seed, noise_high=args.noise_high)
    save_dataset(data, args.out)
    _emit(
        args,
        {"out": str(args.out), "kind": args.kind, "n": data.n, "class_count": data.class_count},
        f"wrote {args.out} ({data.n} samples, {data.class_count} classes)",
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prunescope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_json(p):
        p.add_argument("--json", action="store_true", help="print machine-readable JSON on stdout")

    p = sub.add_parser("train", help="train a classifier (SGD) or find a biprop subnetwork")
    p.add_argument("--spec", required=True, help="network spec JSON file")
    p.add_argument("--data", required=True, help="training dataset (.bin)")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--method", choices=["sgd", "biprop"], default="sgd")
    p.add_argument("--lr", type=float, default=0.4)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--rate", type=float, default=None, help="biprop prune rate")
    p.add_argument("--seed", type=int, default=0)
    add_json(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("prune", help="produce and apply a prune mask")
    p.add_argument("--method", choices=["random", "magnitude", "taylor"], required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--in", dest="input", required=True, help="input checkpoint")
    p.add_argument("--out", required=True, help="output checkpoint")
    p.add_argument("--data", help="dataset for taylor scores")
    p.add_argument("--scope", choices=["global", "per-layer"], default="global")
    p.add_argument("--seed", type=int, default=0)
    add_json(p)
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("corrupt", help="build and export a corruption suite")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output archive directory")
    p.add_argument("--types", help=f"comma list from {sorted(SEVERITY_TABLES)}")
    p.add_argument("--seed", type=int, default=0)
    add_json(p)
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("snapshot", help="compute geometry snapshots into the registry")
    p.add_argument("--registry", required=True)
    p.add_argument("--combo", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="clean dataset (.bin)")
    p.add_argument("--dataset-id", default="clean")
    p.add_argument("--suite", help="corruption archive directory to snapshot")
    p.add_argument("--register", action="store_true", help="create the combination record")
    p.add_argument("--architecture", default="mlp")
    p.add_argument("--method", choices=["none", "random", "magnitude", "taylor", "mpt"], default="none")
    p.add_argument("--rate", type=float, default=0.0)
    add_json(p)
    p.set_defaults(func=_cmd_snapshot)

    p = sub.add_parser("eval", help="accuracy of a combination on one evaluation row")
    p.add_argument("--registry", required=True)
    p.add_argument("--combo", required=True)
    p.add_argument("--suite", default="clean", help='"clean", a corruption type, or "type:sN"')
    p.add_argument("--subset", help="restrict to a stored subset id")
    add_json(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("correlate", help="robustness vs geometry correlations")
    p.add_argument("--registry", required=True)
    p.add_argument("--combo", required=True)
    add_json(p)
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("rand-angle", help="random-vector angle statistics per dimension")
    p.add_argument("--dims", default="2,8,32,128,512")
    p.add_argument("--pairs", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    add_json(p)
    p.set_defaults(func=_cmd_rand_angle)

    p = sub.add_parser("margin-shift", help="compare corruption-induced margin shift of two models")
    p.add_argument("--registry", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--cmp", required=True)
    add_json(p)
    p.set_defaults(func=_cmd_margin_shift)

    p = sub.add_parser("export", help="copy a combination's artifacts out of the registry")
    p.add_argument("--registry", required=True)
    p.add_argument("--combo", required=True)
    p.add_argument("--out", required=True)
    add_json(p)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("serve", help="run the read-only JSON API")
    p.add_argument("--registry", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--origins", help="comma list of allowed CORS origins")
    p.set_defaults(func=_cmd_serve, json=False)

    p = sub.add_parser("make-dataset", help="generate a synthetic dataset file")
    p.add_argument("--kind", choices=["blobs", "patterns"], default="patterns")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--noise-high", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_json(p)
    p.set_defaults(func=_cmd_make_dataset)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "serve" and args.registry is None:
        import os

        args.registry = os.environ.get(service.REGISTRY_ENV_VAR)
        if not args.registry:
            print(
                f"error: pass --registry or set {service.REGISTRY_ENV_VAR}",
                file=sys.stderr,
            )
            return 2
    try:
        return args.func(args)
    except Exception as e:  # pipeline errors: message to stderr, exit 1
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
