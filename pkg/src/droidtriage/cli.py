"""Command-line surface: analyze, batch, stats, metrics."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agents import Catalogs, PipelineBudgets, run_pipeline
from .config import load_config
from .errors import TriageError
from .harness import (
    BatchConfig,
    ConfusionCounts,
    DatasetManifest,
    compute_metrics,
    emit_reports,
    run_batch,
)
from .ir import LocDistribution, parse_bundle, parse_program, validate


def _bundle_paths(bundle_dir: Path) -> tuple[Path, Path]:
    mmf = sorted(bundle_dir.glob("*.mmf"))
    mir = sorted(bundle_dir.glob("*.mir"))
    if len(mmf) != 1 or len(mir) != 1:
        raise TriageError(
            f"{bundle_dir} must contain exactly one .mmf and one .mir file"
        )
    return mmf[0], mir[0]


def _budgets(cfg_budgets: PipelineBudgets, args) -> PipelineBudgets:
    return PipelineBudgets(
        max_iterations=args.budget or cfg_budgets.max_iterations,
        candidate_cap=args.cap or cfg_budgets.candidate_cap,
        taint_depth=cfg_budgets.taint_depth,
        trigger_depth=cfg_budgets.trigger_depth,
        context_radius=cfg_budgets.context_radius,
    )


def _backend_mode(name: str) -> str:
    return {"scripted": "scripted", "live": "http"}[name]


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    router = cfg.build_router(_backend_mode(args.backend))
    bundle_dir = Path(args.bundle_dir)
    mmf, mir = _bundle_paths(bundle_dir)
    bundle = parse_bundle(mmf.read_text("utf-8"), mir.read_text("utf-8"))
    diags = validate(bundle)
    if diags:
        for d in diags:
            print(f"diagnostic: {d.code} at {d.where}: {d.message}", file=sys.stderr)
        return 2
    report, ledger = run_pipeline(
        bundle, Catalogs(cfg.api_catalog, cfg.entry_catalog), router,
        _budgets(cfg.budgets, args),
    )
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    print(f"// tokens: {ledger.total_tokens}", file=sys.stderr)
    return 0


def cmd_batch(args) -> int:
    cfg = load_config(args.config)
    dataset = DatasetManifest.load(args.dataset)
    router = cfg.build_router(_backend_mode(args.backend))
    batch_cfg = BatchConfig(
        catalogs=Catalogs(cfg.api_catalog, cfg.entry_catalog),
        router=router,
        pricing=cfg.pricing,
        budgets=_budgets(cfg.budgets, args),
        jobs=args.jobs,
    )
    results = run_batch(dataset, batch_cfg)
    summary = emit_reports(results, cfg.pricing, args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_stats(args) -> int:
    dataset = DatasetManifest.load(args.dataset)
    locs: list[int] = []
    failures: list[str] = []
    for entry in dataset.entries:
        try:
            program = parse_program(entry.ir_path.read_text("utf-8"))
        except (OSError, TriageError) as exc:
            failures.append(f"{entry.app_id}: {exc}")
            continue
        locs.extend(m.loc for m in program.methods())
    if not locs:
        print(json.dumps({"methods": 0, "failures": failures}))
        return 1
    dist = LocDistribution(locs)
    out = {
        "methods": len(locs),
        "mean": round(dist.mean, 2),
        "percentiles": {
            str(p): dist.percentile(p) for p in (50, 80, 90, 95, 99, 100)
        },
        "histogram": [{"bucket": label, "count": n} for label, n in dist.histogram()],
        "failures": failures,
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_metrics(args) -> int:
    tp = tn = fp = fn = 0
    evaluated = 0
    with open(args.results, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "verdict" not in row:
                continue
            evaluated += 1
            bad = row["verdict"] == "Malicious"
            truly_bad = row["label"] == "Malicious"
            tp += bad and truly_bad
            tn += (not bad) and (not truly_bad)
            fp += bad and not truly_bad
            fn += (not bad) and truly_bad
    if evaluated == 0:
        print(json.dumps({"evaluated": 0}))
        return 1
    metrics = compute_metrics(ConfusionCounts(tp, tn, fp, fn))
    print(json.dumps(
        {"evaluated": evaluated, "confusion": {"tp": tp, "tn": tn, "fp": fp, "fn": fn},
         "metrics": metrics.to_dict()},
        indent=2, sort_keys=True,
    ))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="droidtriage",
        description="Tiered static-analysis + agent triage over textual app bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="triage a single bundle directory")
    p.add_argument("bundle_dir")
    p.add_argument("--config", default=None, help="config file (INI sections)")
    p.add_argument("--backend", choices=("scripted", "live"), default="scripted")
    p.add_argument("--out", default=None, help="also write the report here")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--cap", type=int, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("batch", help="evaluate a dataset index")
    p.add_argument("dataset")
    p.add_argument("--config", default=None, help="config file (INI sections)")
    p.add_argument("--backend", choices=("scripted", "live"), default="scripted")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--budget", type=int, default=None, help="max agent iterations")
    p.add_argument("--cap", type=int, default=None, help="candidate cap per app")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("stats", help="function-size distribution of a dataset")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("metrics", help="recompute metrics from results.jsonl")
    p.add_argument("results")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
