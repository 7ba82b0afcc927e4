"""Command-line interface: generate data, run evaluations, sweep budgets, serve.

Exit codes: 0 success, 2 configuration problem, 3 data problem, 4 runtime
failure. Failures print one machine-readable JSON object to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .active import STRATEGY_KINDS, QueryStrategy
from .data import Dataset
from .datagen import (
    BUILTIN_DATASETS,
    ContextBlock,
    GeneratorSpec,
    builtin_dataset,
    generate_conditional,
    generate_global,
    load_csv,
    save_csv,
    save_manifest,
)
from .detector import DetectorConfig
from .ensemble import COMBINER_KINDS
from .errors import ConfigError, CtxensError, DataError
from .evaluation import (
    ExperimentConfig,
    dataset_fingerprint,
    evaluate_fitted,
    fit_pipeline,
    read_reports_jsonl,
    run_experiment,
    summarize_reports,
    write_reports_jsonl,
    write_summary_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _fail(err: Exception, code: int) -> int:
    payload = {
        "error": type(err).__name__,
        "message": str(err),
        "exit_code": code,
    }
    print(json.dumps(payload), file=sys.stderr)
    return code


def _add_common_run_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_argument_group("data source (exactly one)")
    src.add_argument("--dataset", help="path to a labeled CSV file")
    src.add_argument(
        "--generate",
        choices=BUILTIN_DATASETS,
        help="generate a bundled benchmark dataset instead of reading a file",
    )
    p.add_argument("--data-seed", type=int, default=0, help="seed for --generate (default 0)")
    p.add_argument("--strategy", default="lca", help=f"query strategy: one of {', '.join(STRATEGY_KINDS)}, or a comma list for sweep")
    p.add_argument("--combiner", default="weighted", choices=COMBINER_KINDS)
    p.add_argument("--seeds", type=int, default=10, help="number of independent runs (seeds 0..n-1)")
    p.add_argument("--max-clusters", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=0.96, help="selection sharpness of the low-confidence strategy")
    p.add_argument("--threshold", type=float, default=0.9, help="unified-score cutoff for a positive vote")
    p.add_argument("--pca-k", type=int, default=10, help="projection size for wide feature sets")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--cache-dir", help="optional score-matrix cache directory")
    p.add_argument("--audit", action="store_true", help="write per-run query audit trails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxens",
        description="Contextual anomaly detection with actively learned context importances.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a dataset CSV + manifest")
    g.add_argument("--spec", help="JSON generator spec file")
    g.add_argument("--generate", dest="name", choices=BUILTIN_DATASETS, help="bundled dataset name")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".", help="output directory")

    r = sub.add_parser("run", help="evaluate one strategy/budget/combiner")
    _add_common_run_flags(r)
    r.add_argument("--budget", type=int, default=100)

    w = sub.add_parser("sweep", help="evaluate a budget x strategy grid (resumable)")
    _add_common_run_flags(w)
    w.add_argument("--budgets", default="20,60,100", help="comma-separated budget list")

    s = sub.add_parser("serve", help="start the labeling service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8765)
    s.add_argument("--state-dir", default="sessions", help="where live sessions persist")
    s.add_argument("--data-dir", default=".", help="directory searched for CSV datasets")
    s.add_argument(
        "--ui",
        default=None,
        help="directory of built labeling-console assets to mount at /ui",
    )
    return parser


# -- generate -------------------------------------------------------------------

def _spec_from_json(path: str):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read spec file: {e}") from e
    try:
        blob = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed spec at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(blob, dict) or "kind" not in blob:
        raise ConfigError("spec must be a JSON object with a 'kind' field")
    kind = blob["kind"]
    seed = int(blob.get("seed", 0))
    if kind == "builtin":
        return blob["name"], lambda: builtin_dataset(blob["name"], seed)
    if kind == "conditional":
        try:
            spec = GeneratorSpec(
                n_normal=int(blob["n_normal"]),
                blocks=tuple(
                    ContextBlock(
                        n_contextual=int(b["n_contextual"]),
                        n_behavioral=int(b["n_behavioral"]),
                        n_anomalies=int(b.get("n_anomalies", 0)),
                        n_contextual_components=int(b.get("n_contextual_components", 5)),
                        n_behavioral_components=int(b.get("n_behavioral_components", 5)),
                    )
                    for b in blob["blocks"]
                ),
                spread_factor=float(blob.get("spread_factor", 0.25)),
                centroid_low=float(blob.get("centroid_low", 0.0)),
                centroid_high=float(blob.get("centroid_high", 10.0)),
            )
        except KeyError as e:
            raise ConfigError(f"spec is missing field {e.args[0]!r}") from e
        return blob.get("name", "conditional"), lambda: generate_conditional(spec, seed)
    if kind == "global":
        return blob.get("name", "global"), lambda: generate_global(
            n=int(blob.get("n", 5100)),
            dimension=int(blob.get("dimension", 10)),
            n_clusters=int(blob.get("n_clusters", 5)),
            anomaly_fraction=float(blob.get("anomaly_fraction", 0.02)),
            seed=seed,
        )
    raise ConfigError(f"unknown spec kind {kind!r}")


def cmd_generate(args) -> int:
    if bool(args.spec) == bool(args.name):
        raise ConfigError("pass exactly one of --spec or --generate")
    if args.spec:
        name, make = _spec_from_json(args.spec)
    else:
        name, make = args.name, lambda: builtin_dataset(args.name, args.seed)
    dataset, manifest = make()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    save_csv(dataset, csv_path)
    save_manifest(manifest, out / f"{name}.manifest.json")
    print(json.dumps({"written": str(csv_path), "rows": dataset.n, "columns": dataset.d,
                      "anomalies": int(dataset.labels.sum()) if dataset.labels is not None else 0}))
    return EXIT_OK


# -- run/sweep ------------------------------------------------------------------

def _load_run_dataset(args) -> tuple[str, Dataset]:
    if bool(args.dataset) == bool(args.generate):
        raise ConfigError("pass exactly one of --dataset or --generate")
    if args.generate:
        ds, _ = builtin_dataset(args.generate, args.data_seed)
        return args.generate, ds
    path = Path(args.dataset)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    return path.stem, load_csv(path)


def _experiment_config(args, strategy_kind: str, budget: int) -> ExperimentConfig:
    if strategy_kind not in STRATEGY_KINDS:
        raise ConfigError(f"unknown strategy {strategy_kind!r}; pick from {STRATEGY_KINDS}")
    try:
        strategy = QueryStrategy(kind=strategy_kind, lam=args.lam, threshold=args.threshold)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")
    return ExperimentConfig(
        strategy=strategy,
        budget=budget,
        combiner=args.combiner,
        seeds=tuple(range(args.seeds)),
        train_fraction=args.train_fraction,
        pca_components=args.pca_k,
        detector=DetectorConfig(max_clusters=args.max_clusters),
        cache_dir=args.cache_dir,
    )


def _write_run_outputs(out_dir: Path, config_snapshot: dict, reports, append=False) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_reports_jsonl(reports, out_dir / "reports.jsonl", append=append)
    all_reports = read_reports_jsonl(out_dir / "reports.jsonl")
    write_summary_csv(summarize_reports(all_reports), out_dir / "summary.csv")
    with open(out_dir / "config.json", "w") as fh:
        json.dump(config_snapshot, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _config_snapshot(args, dataset_id: str, dataset, budgets, strategies) -> dict:
    return {
        "dataset": dataset_id,
        "dataset_sha": dataset_fingerprint(dataset),
        "data_seed": args.data_seed,
        "strategies": strategies,
        "budgets": budgets,
        "combiner": args.combiner,
        "seeds": list(range(args.seeds)),
        "train_fraction": args.train_fraction,
        "max_clusters": args.max_clusters,
        "lambda": args.lam,
        "threshold": args.threshold,
        "pca_k": args.pca_k,
    }


def cmd_run(args) -> int:
    dataset_id, dataset = _load_run_dataset(args)
    dataset.require_labels()
    config = _experiment_config(args, args.strategy, args.budget)
    out_dir = Path(args.out)
    reports = run_experiment(
        dataset,
        config,
        dataset_id=dataset_id,
        audit_dir=str(out_dir / "audits") if args.audit else None,
    )
    snapshot = _config_snapshot(args, dataset_id, dataset, [args.budget], [args.strategy])
    _write_run_outputs(out_dir, snapshot, reports)
    for row in summarize_reports(reports):
        print(json.dumps(row))
    return EXIT_OK


def cmd_sweep(args) -> int:
    dataset_id, dataset = _load_run_dataset(args)
    dataset.require_labels()
    try:
        budgets = [int(b) for b in str(args.budgets).split(",") if b.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --budgets list: {args.budgets!r}") from e
    if not budgets:
        raise ConfigError("--budgets must name at least one budget")
    strategies = [s.strip() for s in args.strategy.split(",") if s.strip()]
    if not strategies:
        raise ConfigError("--strategy must name at least one strategy")

    out_dir = Path(args.out)
    reports_path = out_dir / "reports.jsonl"
    done = set()
    if reports_path.exists():
        for r in read_reports_jsonl(reports_path):
            done.add((r.dataset_id, r.strategy, r.budget, r.combiner, r.seed))

    new_reports = []
    for seed in range(args.seeds):
        cells = [
            (s, b)
            for s in strategies
            for b in budgets
            if (dataset_id, s, b, args.combiner, seed) not in done
        ]
        if not cells:
            continue
        fitted = None
        for strategy_kind, budget in cells:
            config = _experiment_config(args, strategy_kind, budget)
            if fitted is None:
                fitted = fit_pipeline(dataset, seed, config)
            new_reports.append(
                evaluate_fitted(
                    fitted,
                    config,
                    dataset_id=dataset_id,
                    audit_dir=str(out_dir / "audits") if args.audit else None,
                )
            )
    snapshot = _config_snapshot(args, dataset_id, dataset, budgets, strategies)
    _write_run_outputs(out_dir, snapshot, new_reports, append=reports_path.exists())
    print(
        json.dumps(
            {
                "completed_cells": len(new_reports),
                "skipped_cells": len(done),
                "reports": str(reports_path),
            }
        )
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(state_dir=args.state_dir, data_dir=args.data_dir, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": cmd_generate,
        "run": cmd_run,
        "sweep": cmd_sweep,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        return _fail(e, EXIT_CONFIG)
    except DataError as e:
        return _fail(e, EXIT_DATA)
    except CtxensError as e:
        return _fail(e, EXIT_RUNTIME)
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - last-resort CLI boundary
        return _fail(e, EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
