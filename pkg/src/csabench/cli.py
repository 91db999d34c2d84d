"""csabench command line interface.

Subcommands cover the full workflow: curvefit builds response tables from
raw dose-response data, splitgen/synth prepare benchmarks, run executes the
evaluation grid, metrics and report aggregate and render the results.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from . import data as bdata
from . import generalization as gmetrics
from . import report as reporting
from . import scheduler
from .curves import FitConfig, build_response_table, read_dose_response, write_response_csv
from .errors import CsabenchError


def _cmd_curvefit(args) -> int:
    config = FitConfig(r2_min=args.r2_min, dose_lo=args.dose_lo, dose_hi=args.dose_hi)
    measurements, row_errors = read_dose_response(args.input)
    samples, log = build_response_table(measurements, args.dataset, config)
    log.input_rows_skipped = len(row_errors)
    log.row_errors = row_errors
    write_response_csv(samples, args.output)
    log_path = args.log or f"{args.output}.fitlog.json"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(log.to_json())
        fh.write("\n")
    print(
        f"curvefit: {log.fitted} fitted, {log.rejected} rejected, "
        f"{log.errored} errored, {log.input_rows_skipped} rows skipped "
        f"-> {args.output}"
    )
    return 0


def _cmd_splitgen(args) -> int:
    root = Path(args.benchmark)
    descriptors = {d.name: d for d in bdata.load_benchmark_index(root)}
    if args.dataset not in descriptors:
        raise CsabenchError(f"dataset {args.dataset!r} not in {root}/benchmark.json")
    desc = descriptors[args.dataset]
    table = bdata.load_response_table(root / desc.response_path)
    splits = bdata.generate_splits(table.n_samples, args.n_splits, args.seed)
    out = root / args.dataset / "splits"
    bdata.write_split_files(splits, out, args.dataset)
    print(f"splitgen: wrote {args.n_splits} splits for {args.dataset} under {out}")
    return 0


def _cmd_synth(args) -> int:
    spec = bdata.SynthSpec.from_json(args.spec)
    descriptors = bdata.generate_synthetic_benchmark(spec, args.out)
    print(f"synth: wrote {len(descriptors)} datasets under {args.out}")
    return 0


def _cmd_run(args) -> int:
    plan = scheduler.build_plan(
        args.benchmark,
        args.models,
        n_splits=args.n_splits,
        slots=args.slots,
        reuse_train=not args.no_reuse,
        config_file=args.config,
        device=args.device,
        stage_timeout_s=args.stage_timeout,
    )
    result = scheduler.execute(plan, args.out, resume=args.resume)
    print(
        f"run: {result.n_done} done, {result.n_skipped} skipped, "
        f"{result.n_failed} failed in {result.wall_time_s:.1f}s"
    )
    for task_id, error in result.failures:
        print(f"  failed: {task_id} ({error})", file=sys.stderr)
    return 0 if result.ok else 1


def _cmd_metrics(args) -> int:
    meta = scheduler.read_run_meta(args.rundir)
    out = Path(args.out)
    for model in meta["models"]:
        tensor = gmetrics.collect_tensor(args.rundir, model, args.metric)
        gm = gmetrics.compute_gmatrices(tensor)
        model_dir = out / model
        gmetrics.write_gmatrices(gm, model_dir)
        gmetrics.write_tensor_json(tensor, gm, model_dir / "tensor.json")
        print(f"metrics: {model} -> {model_dir}")
    return 0


def _cmd_report(args) -> int:
    meta = scheduler.read_run_meta(args.rundir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gms = []
    for model in meta["models"]:
        tensor = gmetrics.collect_tensor(args.rundir, model, args.metric)
        gm = gmetrics.compute_gmatrices(tensor)
        gms.append(gm)
        for fname, svg in reporting.heatmaps_for_model(gm).items():
            (out / fname).write_text(svg, encoding="utf-8")
    summaries = gmetrics.summarize_across(gms)
    sizes = {k: int(v) for k, v in meta["n_samples"].items()}
    for stat in ("mean", "std"):
        reporting.render_tables(
            summaries[stat],
            sizes,
            out / f"within_dataset_{stat}.csv",
            out / f"within_dataset_{stat}.md",
        )
    missing = reporting.export_distributions(args.rundir, out / "distributions.csv")
    if missing:
        reporting.write_missing_report(missing, out / "distributions_missing.json")
    print(f"report: wrote artifacts for {len(gms)} models under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csabench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"csabench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curvefit", help="fit dose-response curves to a raw table")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--r2-min", type=float, default=0.3)
    p.add_argument("--dose-lo", type=float, default=1e-10)
    p.add_argument("--dose-hi", type=float, default=1e-4)
    p.add_argument("--dataset", default="unnamed", help="source dataset label")
    p.add_argument("--log", default=None, help="fit log path (default <output>.fitlog.json)")
    p.set_defaults(func=_cmd_curvefit)

    p = sub.add_parser("splitgen", help="generate reproducible splits for a dataset")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--n-splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_splitgen)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="execute the model x source x target x split grid")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--models", nargs="+", required=True,
                   help="builtin names (baseline-ridge, baseline-knn) or manifest paths")
    p.add_argument("--n-splits", type=int, default=10)
    p.add_argument("--slots", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--no-reuse", action="store_true",
                   help="train per (source, target, split) instead of per (source, split)")
    p.add_argument("--config", default=None, help="INI config passed to every stage")
    p.add_argument("--device", default=None)
    p.add_argument("--stage-timeout", type=float, default=3600.0)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("metrics", help="aggregate scores into G/Ga/Gn/Gna")
    p.add_argument("--rundir", required=True)
    p.add_argument("--metric", default="r2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("report", help="render heatmaps, tables and tidy exports")
    p.add_argument("--rundir", required=True)
    p.add_argument("--metric", default="r2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CsabenchError as exc:
        print(f"csabench {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
