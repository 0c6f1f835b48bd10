"""Benchmark command line: run / sweep / witness.

Logs go to stderr; the report alone goes to stdout or --out, so output can
be piped.  Every run is reproducible from its flags, which is why there are
no environment variables.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentSpec,
    OracleGuardError,
    dimension_sweep,
    emit_report,
    emit_sweep,
    generate_points,
    run_experiment,
)
from .core import ConfigError, Dataset
from .evaluation import build_ranking_digraph, format_cycle, search_non_metric_witness, to_dot
from .similarity import (
    KlRankingSystem,
    load_points_csv,
    load_points_f64,
    save_points_csv,
    save_points_f64,
)

logger = logging.getLogger("rankdescent")


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _workers(text: str) -> int | str:
    return "auto" if text == "auto" else _positive_int(text)


def _dims(text: str) -> list[int]:
    return [_positive_int(part) for part in text.split(",") if part]


def _load_points(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        return load_points_csv(path)
    return load_points_f64(path)


def _save_points(path: str, points: np.ndarray) -> None:
    if path.endswith(".csv"):
        save_points_csv(path, points)
    else:
        save_points_f64(path, points)


def _write_output(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _add_run_flags(p: argparse.ArgumentParser, with_dim: bool) -> None:
    p.add_argument("--n", type=_positive_int, help="number of points (required unless --data-in)")
    if with_dim:
        p.add_argument("--dim", type=_positive_int, help="ambient dimension d; points live on the (d-1)-simplex")
    p.add_argument("--k", type=_positive_int, required=True, help="out-degree of the graph")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--ranking", choices=("kl", "euclidean"), default="kl", help="comparator family (default kl)")
    p.add_argument("--fcc-samples", type=_positive_int, default=1000, help="samples per round for the stopping statistic")
    p.add_argument("--max-rounds", type=_positive_int, default=None, help="hard round cap (default: budget + 4)")
    p.add_argument("--workers", type=_workers, default=1, help='worker count or "auto" (default 1)')
    p.add_argument("--recall", choices=("sample6", "full", "off"), default="sample6", help="recall protocol (default sample6)")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="report format (default json)")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    p.add_argument("--force-oracle", action="store_true", help="allow the exact oracle above 100000 points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankdescent",
        description="Build approximate K-NN digraphs from triplet comparisons and benchmark them.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single experiment: generate data, descend, report")
    _add_run_flags(p_run, with_dim=True)
    p_run.add_argument("--data-in", default=None, help="load points from a .csv or binary file instead of generating")
    p_run.add_argument("--data-out", default=None, help="also write the dataset (.csv or binary by extension)")

    p_sweep = sub.add_parser("sweep", help="repeat one experiment across dimensions")
    _add_run_flags(p_sweep, with_dim=False)
    p_sweep.add_argument("--dims", type=_dims, required=True, help="comma-separated dimensions, e.g. 10,20,40,60")

    p_wit = sub.add_parser("witness", help="search for a non-metrizability cycle witness under KL")
    p_wit.add_argument("--dim", type=_positive_int, required=True, help="ambient simplex dimension (>= 3)")
    p_wit.add_argument("--trials", type=_positive_int, required=True, help="random 6-point sets to try")
    p_wit.add_argument("--points", type=_positive_int, default=6, help="points per trial (default 6)")
    p_wit.add_argument("--seed", type=int, default=0)
    p_wit.add_argument("--format", choices=("text", "dot", "json"), default="text")
    p_wit.add_argument("--out", default=None)
    return parser


def _spec_from_args(args: argparse.Namespace, n: int, d: int) -> ExperimentSpec:
    return ExperimentSpec(
        n=n,
        d=d,
        k=args.k,
        seed=args.seed,
        ranking=args.ranking,
        fcc_samples=args.fcc_samples,
        max_rounds=args.max_rounds,
        workers=args.workers,
        recall_mode=args.recall,
        output_format=args.format,
        force_oracle=args.force_oracle,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    points = None
    if args.data_in is not None:
        points = _load_points(args.data_in)
        n, d = points.shape
        logger.info("loaded %d points of dimension %d from %s", n, d, args.data_in)
    else:
        if args.n is None or args.dim is None:
            logger.error("either --data-in or both --n and --dim are required")
            return 2
        n, d = args.n, args.dim
    spec = _spec_from_args(args, n, d)
    if points is None and args.data_out is not None:
        points = generate_points(spec)
    if args.data_out is not None:
        _save_points(args.data_out, points)
        logger.info("wrote dataset to %s", args.data_out)
    report = run_experiment(spec, points=points)
    _write_output(emit_report(report, args.format), args.out)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    if args.n is None:
        logger.error("--n is required")
        return 2
    base = _spec_from_args(args, args.n, args.dims[0])
    reports = dimension_sweep(base, args.dims)
    _write_output(emit_sweep(reports, args.format), args.out)
    return 0


def _cmd_witness(args: argparse.Namespace) -> int:
    witness = search_non_metric_witness(args.dim, args.trials, args.seed, n_points=args.points)
    if witness is None:
        logger.error("no cycle witness found in %d trials at dim %d", args.trials, args.dim)
        return 1
    verified = witness.verify()
    logger.info("witness found at trial %d, verified=%s", witness.trial, verified)
    if args.format == "text":
        text = format_cycle(witness.cycle)
    elif args.format == "dot":
        dg = build_ranking_digraph(Dataset(witness.points), KlRankingSystem(witness.points, validate=False))
        text = to_dot(dg, highlight=witness.cycle)
    else:
        text = json.dumps(
            {
                "dim": args.dim,
                "trials": args.trials,
                "trial": witness.trial,
                "verified": verified,
                "cycle": [list(v) for v in witness.cycle],
                "points": witness.points.tolist(),
            },
            indent=2,
        )
    _write_output(text, args.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_witness(args)
    except (ConfigError, OracleGuardError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
