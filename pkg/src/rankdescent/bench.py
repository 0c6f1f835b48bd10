"""Experiment runner: generate data, build the graph, measure, report.

A report is fully determined by its spec: data, initialization, and every
sampled statistic derive from the one seed, so reruns reproduce everything
except wall-clock fields.  Reports serialize to JSON or CSV with stable,
documented field names (see README).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, Dataset
from .descent import (
    STREAM_DATA,
    DescentConfig,
    RoundStats,
    derive_rng,
    round_budget,
    run,
)
from .evaluation import ORACLE_GUARD, exact_knn, recall, uniform_recall_sample
from .similarity import EuclideanRankingSystem, KlRankingSystem, sample_simplex_uniform

logger = logging.getLogger(__name__)

RANKINGS = ("kl", "euclidean")
RECALL_MODES = ("sample6", "full", "off")
FORMATS = ("json", "csv")


class OracleGuardError(RuntimeError):
    """Raised when recall would trigger a quadratic oracle run above the guard."""


@dataclass
class ExperimentSpec:
    """Parameters of one benchmark run; (spec, seed) reproduces everything."""

    n: int
    d: int
    k: int
    seed: int = 0
    ranking: str = "kl"
    fcc_samples: int = 1000
    max_rounds: int | None = None
    workers: int | str = 1
    recall_mode: str = "sample6"
    output_format: str = "json"
    force_oracle: bool = False

    def __post_init__(self) -> None:
        if self.k < 2 or self.n <= self.k:
            raise ConfigError(f"need n > k >= 2, got n={self.n}, k={self.k}")
        if self.d < 2:
            raise ConfigError(f"need d >= 2, got d={self.d}")
        if self.ranking not in RANKINGS:
            raise ConfigError(f"ranking must be one of {RANKINGS}, got {self.ranking!r}")
        if self.recall_mode not in RECALL_MODES:
            raise ConfigError(f"recall_mode must be one of {RECALL_MODES}, got {self.recall_mode!r}")
        if self.output_format not in FORMATS:
            raise ConfigError(f"output_format must be one of {FORMATS}, got {self.output_format!r}")

    def descent_config(self) -> DescentConfig:
        return DescentConfig(
            k=self.k,
            fcc_sample_count=self.fcc_samples,
            max_rounds=self.max_rounds,
            seed=self.seed,
            worker_count=self.workers,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ExperimentReport:
    """Per-round stats plus the summary columns of the scaling tables."""

    spec: ExperimentSpec
    rounds: list[RoundStats]
    rounds_used: int
    round_budget: int
    final_fcc: float
    recall: float | None
    total_duration_sec: float
    friend_map: np.ndarray | None = field(repr=False, compare=False, default=None)  # in-memory only

    @property
    def first_round_sec(self) -> float:
        return self.rounds[0].wall_clock_sec

    @property
    def last_round_sec(self) -> float:
        return self.rounds[-1].wall_clock_sec

    def summary_dict(self) -> dict:
        return {
            "rounds_used": self.rounds_used,
            "round_budget": self.round_budget,
            "final_fcc": self.final_fcc,
            "recall": self.recall,
            "total_duration_sec": self.total_duration_sec,
            "first_round_sec": self.first_round_sec,
            "last_round_sec": self.last_round_sec,
        }

    def to_json_obj(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "rounds": [dataclasses.asdict(r) for r in self.rounds],
            "summary": self.summary_dict(),
        }


def generate_points(spec: ExperimentSpec) -> np.ndarray:
    """The run's dataset: uniform simplex points from the (seed, data, d) substream."""
    return sample_simplex_uniform(spec.d, spec.n, derive_rng(spec.seed, STREAM_DATA, spec.d))


def make_ranking_system(spec: ExperimentSpec, points: np.ndarray):
    if spec.ranking == "kl":
        return KlRankingSystem(points, validate=False)
    return EuclideanRankingSystem(points)


def run_experiment(spec: ExperimentSpec, points: np.ndarray | None = None) -> ExperimentReport:
    """Generate (or accept) data, run descent, optionally measure recall.

    Timed region covers initialization and rounds only; data generation and
    the exact oracle are excluded.  Recall above the oracle guard of
    100_000 points requires force_oracle.
    """
    if spec.recall_mode != "off" and spec.n > ORACLE_GUARD and not spec.force_oracle:
        raise OracleGuardError(
            f"exact oracle on n={spec.n} exceeds the guard of {ORACLE_GUARD}; "
            "set force_oracle (or recall_mode='off') to proceed"
        )
    if points is None:
        points = generate_points(spec)
    if points.shape != (spec.n, spec.d):
        raise ConfigError(f"points shape {points.shape} does not match spec ({spec.n}, {spec.d})")
    dataset = Dataset(points)
    rs = make_ranking_system(spec, points)

    t0 = time.perf_counter()
    friends, rounds = run(dataset, rs, spec.descent_config())
    total = time.perf_counter() - t0

    recall_value = None
    if spec.recall_mode != "off":
        exact = exact_knn(dataset, rs, spec.k, workers=spec.descent_config().resolved_workers())
        if spec.recall_mode == "full":
            sample = np.arange(spec.n)
        else:
            sample = uniform_recall_sample(spec.n, spec.seed)
        recall_value = recall(friends, exact, sample)

    report = ExperimentReport(
        spec=spec,
        rounds=rounds,
        rounds_used=len(rounds),
        round_budget=round_budget(spec.n, spec.k),
        final_fcc=rounds[-1].fcc,
        recall=recall_value,
        total_duration_sec=total,
        friend_map=friends,
    )
    logger.info(
        "experiment n=%d d=%d k=%d ranking=%s seed=%d: rounds=%d/%d fcc=%.4f recall=%s time=%.2fs",
        spec.n, spec.d, spec.k, spec.ranking, spec.seed,
        report.rounds_used, report.round_budget, report.final_fcc,
        "n/a" if recall_value is None else f"{recall_value:.4f}", total,
    )
    return report


def dimension_sweep(base: ExperimentSpec, dims: list[int]) -> list[ExperimentReport]:
    """One report per dimension: fresh data per d, descent seed held fixed."""
    if not dims:
        raise ConfigError("dims must be nonempty")
    return [run_experiment(dataclasses.replace(base, d=d)) for d in dims]


# ---------------------------------------------------------------------------
# serialization

_CSV_HEADER = [
    "record", "round_index", "wall_clock_sec", "fcc", "comparisons", "changed_friend_sets",
    "n", "d", "k", "seed", "ranking", "fcc_samples", "max_rounds", "workers", "recall_mode",
    "rounds_used", "round_budget", "final_fcc", "recall",
    "total_duration_sec", "first_round_sec", "last_round_sec",
]

_SWEEP_HEADER = [
    "d", "n", "k", "seed", "ranking", "rounds_used", "round_budget",
    "final_fcc", "recall", "total_duration_sec", "first_round_sec", "last_round_sec",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")  # round-trips through float()
    return str(value)


def emit_report(report: ExperimentReport, fmt: str | None = None) -> str:
    """Serialize one report: JSON object, or CSV with round rows plus a summary row."""
    fmt = fmt or report.spec.output_format
    if fmt == "json":
        return json.dumps(report.to_json_obj(), indent=2)
    if fmt != "csv":
        raise ConfigError(f"unknown format {fmt!r}")
    spec = report.spec
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_HEADER)
    for r in report.rounds:
        writer.writerow(
            [_cell(v) for v in ("round", r.round_index, r.wall_clock_sec, r.fcc, r.comparisons, r.changed_friend_sets)]
            + [""] * (len(_CSV_HEADER) - 6)
        )
    summary = report.summary_dict()
    writer.writerow(
        ["summary", "", "", "", "", ""]
        + [_cell(v) for v in (
            spec.n, spec.d, spec.k, spec.seed, spec.ranking, spec.fcc_samples,
            spec.max_rounds, spec.workers, spec.recall_mode,
            summary["rounds_used"], summary["round_budget"], summary["final_fcc"], summary["recall"],
            summary["total_duration_sec"], summary["first_round_sec"], summary["last_round_sec"],
        )]
    )
    return buf.getvalue()


def emit_sweep(reports: list[ExperimentReport], fmt: str) -> str:
    """Serialize a sweep: JSON report list, or a CSV table with one row per dimension."""
    if fmt == "json":
        return json.dumps(
            {"dims": [r.spec.d for r in reports], "reports": [r.to_json_obj() for r in reports]},
            indent=2,
        )
    if fmt != "csv":
        raise ConfigError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_SWEEP_HEADER)
    for r in reports:
        writer.writerow(
            [_cell(v) for v in (
                r.spec.d, r.spec.n, r.spec.k, r.spec.seed, r.spec.ranking,
                r.rounds_used, r.round_budget, r.final_fcc, r.recall,
                r.total_duration_sec, r.first_round_sec, r.last_round_sec,
            )]
        )
    return buf.getvalue()
