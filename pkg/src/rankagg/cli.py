"""Command-line entry point.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import io as rio
from .experiments import generate_synthetic, robustness_sweep
from .metrics import MetricSpec, evaluate_run
from .train import DEFAULT_LR_GRID, DEFAULT_SIGMA_GRID, ObjectiveKind, TrainConfig, fit, predict
from .unsup import DEFAULT_RRF_C, METHODS, aggregate

logger = logging.getLogger("rankagg")


class UsageError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _ints(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _require_labels(instances, path) -> None:
    for q in instances:
        if q.labels is None:
            raise UsageError(f"{path}: query {q.query_id} is unlabeled (grade -1); labels are required here")


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_aggregate(args) -> None:
    instances = rio.parse_agg_file(args.input)
    run = aggregate(instances, args.method, args.rrf_c, args.threads)
    rio.write_run(run, args.output, args.run_tag or args.method)


def cmd_eval(args) -> None:
    names = _names(args.metrics)
    if not names:
        raise UsageError("--metrics must name at least one metric")
    specs = [MetricSpec.parse(name, args.rbp_p, args.ymax) for name in names]
    instances = rio.parse_agg_file(args.data)
    _require_labels(instances, args.data)
    run = rio.read_run(args.run, instances)
    _write_text(args.out, evaluate_run(run, instances, specs).to_csv())


def cmd_train(args) -> None:
    train_set = rio.parse_agg_file(args.train)
    valid_set = rio.parse_agg_file(args.valid)
    _require_labels(train_set, args.train)
    _require_labels(valid_set, args.valid)
    config = TrainConfig(
        learning_rate_grid=args.lr_grid,
        sigma_grid=args.sigma_grid,
        max_iterations=args.max_iters,
        objective=ObjectiveKind.parse(args.objective, args.rbp_p, args.ymax),
        mapping_kind=args.features.upper(),
        factor_rank=args.rank,
        seed=args.seed,
        select_metric=args.select_metric,
        drop_singular_values=args.drop_singular_values,
        minmax=args.minmax,
    )
    result = fit(train_set, valid_set, config)
    rio.save_model(result.model, args.model)
    log_path = args.log or str(Path(args.model).with_suffix(".log.csv"))
    Path(log_path).write_text(result.log_csv(), encoding="utf-8")
    logger.info("best lr=%g sigma=%g iteration=%d %s=%.6f", result.best_lr, result.best_sigma,
                result.best_iteration, args.select_metric, result.best_valid_metric)


def cmd_predict(args) -> None:
    model = rio.load_model(args.model)
    instances = rio.parse_agg_file(args.data)
    rio.write_run(predict(model, instances), args.output, args.run_tag)


def cmd_synth(args) -> None:
    instances = generate_synthetic(args.queries, args.items, args.inputs, args.missing_rate,
                                   args.noise, args.ymax, args.seed)
    rio.write_agg_file(instances, args.output)


def cmd_robustness(args) -> None:
    instances = rio.parse_agg_file(args.data)
    _require_labels(instances, args.data)
    methods = _names(args.methods)
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    spec = MetricSpec.parse(args.metric, args.rbp_p, args.ymax)
    result = robustness_sweep(instances, methods, args.sizes, args.reps, spec, args.seed, args.rrf_c)
    _write_text(args.out, result.to_csv())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankagg", description="Rank aggregation with rank distributions.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="fuse the ranking inputs of every query")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--input", required=True, help="dataset in aggregation text format")
    p.add_argument("--output", required=True, help="TREC run file to write")
    p.add_argument("--rrf-c", type=float, default=DEFAULT_RRF_C, help="RRF constant C (default 40)")
    p.add_argument("--run-tag", default=None, help="run tag (default: the method name)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: available CPUs); output does not depend on it")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("eval", help="score a run against graded labels")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics", default="ndcg@5,ndcg@10,err,rbp")
    p.add_argument("--rbp-p", type=float, default=0.95)
    p.add_argument("--ymax", type=int, default=2)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="fit a linear aggregation model")
    p.add_argument("--objective", required=True, choices=("ndcg", "err", "rbp"))
    p.add_argument("--features", required=True, choices=("bf", "mf", "tf"))
    p.add_argument("--rank", type=int, default=5, help="factor rank p for mf/tf")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--model", required=True, help="model JSON to write")
    p.add_argument("--log", default=None, help="training log CSV (default: beside the model)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--lr-grid", type=_floats, default=DEFAULT_LR_GRID)
    p.add_argument("--sigma-grid", type=_floats, default=DEFAULT_SIGMA_GRID)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--rbp-p", type=float, default=0.95)
    p.add_argument("--ymax", type=int, default=2)
    p.add_argument("--select-metric", default="ndcg@10", help="validation metric for model selection")
    p.add_argument("--drop-singular-values", action="store_true", help="omit singular values from mf features")
    p.add_argument("--minmax", action="store_true", help="min-max scale features within each query")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="rank queries with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--run-tag", default="stagg")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--items", type=int, default=30)
    p.add_argument("--inputs", type=int, default=20)
    p.add_argument("--missing-rate", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--ymax", type=int, default=2)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("robustness", help="metric versus number of ranking inputs")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--sizes", type=_ints, default=(5, 10, 15, 20))
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--metric", default="ndcg@5")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--rrf-c", type=float, default=DEFAULT_RRF_C)
    p.add_argument("--rbp-p", type=float, default=0.95)
    p.add_argument("--ymax", type=int, default=2)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_robustness)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, rio.FormatError, ValueError) as exc:
        print(f"rankagg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as exc:
        print(f"rankagg {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
